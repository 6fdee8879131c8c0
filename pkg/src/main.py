"""Command-line front end: kernel, green, coeffs, evolve and sweep commands."""

import argparse
import logging
import os
import sys
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np
from colorama import Fore, Style, init
from dotenv import load_dotenv
from pydantic import ValidationError

from .analysis import (Source, pole_spectrum, relative_change,
                       sigma_z_infinity_closed_form)
from .coeffs import Drive, build_coefficients
from .errors import ConfigurationError, PoleCrossingError, SimulationError
from .evolve import (EvolveConfig, evolve_boson_tlme, evolve_qubit_tlme, exact_first_moment,
                     weak_excitation_flag)
from .presets import get_preset, list_presets
from .reference import PseudomodeModel, evolve_pseudomode
from .settings import RunConfig, get_settings
from .spectral import KernelSampler, SpectralKind, SpectralModel
from .sweep import SteadyStateProblem, SweepSpec, run_sweep
from .utils import (build_report, generate_sweep_summary_report, load_run_config,
                    load_tabulated_model, write_coeffs_csv, write_green_csv, write_json_report,
                    write_kernel_csv, write_moment_csv, write_sweep_csv, write_trajectory_csv)
from .utils.report_generator import sweep_violations
from .volterra import CouplingMatrix, solve_volterra

# Initialize colorama for cross-platform colored output
init(autoreset=True)

logger = logging.getLogger("src")


class ColoredFormatter(logging.Formatter):
    """Custom formatter to add colors to log levels."""

    COLORS = {
        'DEBUG': Fore.CYAN,
        'INFO': Fore.GREEN,
        'WARNING': Fore.YELLOW,
        'ERROR': Fore.RED,
        'CRITICAL': Fore.MAGENTA + Style.BRIGHT
    }

    def format(self, record):
        log_message = super().format(record)
        color = self.COLORS.get(record.levelname, '')
        if color:
            log_message = f"{color}{log_message}{Style.RESET_ALL}"
        return log_message


def setup_logging(quiet: bool = False, log_dir: Optional[str] = None) -> logging.Logger:
    """Set up logging for the ``src`` package with console and file handlers."""
    log_dir = log_dir or get_settings().log_dir
    os.makedirs(log_dir, exist_ok=True)

    timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
    log_filename = os.path.join(log_dir, f'tlme_sim_{timestamp}.log')

    logger.setLevel(logging.INFO)
    logger.handlers.clear()
    logger.propagate = False

    # File handler (no colors for file output)
    file_handler = logging.FileHandler(log_filename, encoding='utf-8')
    file_handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s'))

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(ColoredFormatter('%(asctime)s - %(levelname)s - %(message)s'))
    console_handler.setLevel(logging.WARNING if quiet else logging.INFO)

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)
    logger.debug(f"Logging initialized - Log file: {log_filename}")
    return logger


def _add_common_options(parser: argparse.ArgumentParser):
    parser.add_argument("--preset", help="named parameter set (see --list-presets)")
    parser.add_argument("--config", help="JSON run configuration; flags override its values")
    parser.add_argument("--output-dir", dest="output_dir", help="directory for CSV/JSON output")
    parser.add_argument("--quiet", action="store_true", help="warnings only, no progress bars")
    parser.add_argument("--lorentzian", metavar="G,L,D,d",
                        help="Lorentzian environment: Gamma, lambda, Delta, delta")
    parser.add_argument("--markov", type=float, metavar="G", help="flat (Markovian) environment with rate Gamma")
    parser.add_argument("--spectrum-file", dest="spectrum_file", help="tabulated J(w) file (two columns)")
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--linewidth", type=float, help="Lorentzian width lambda")
    parser.add_argument("--detuning", type=float, help="qubit/mode detuning Delta from the drive")
    parser.add_argument("--offset", type=float, help="offset delta of the Lorentzian center")
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--omega", dest="drive", type=float, help="constant drive amplitude Omega")
    parser.add_argument("--omega-over-lambda", dest="omega_over_lambda", type=float)
    parser.add_argument("--step", type=float, help="grid step h")
    parser.add_argument("--t-end", dest="t_end", type=float, help="time horizon")
    parser.add_argument("--cutoff", type=int, help="Fock cutoff")
    parser.add_argument("--tolerance", type=float, help="local error tolerance of the RK4 stepper")
    parser.add_argument("--min-step", dest="min_step", type=float)
    parser.add_argument("--initial-state", dest="initial_state",
                        help="ground, excited, vacuum, coherent(alpha) or a matrix file")
    parser.add_argument("--a0", dest="initial_amplitude", type=complex, help="initial <a> for exact-moment")
    parser.add_argument("--method", choices=["auto", "general", "expfast"], help="Volterra solver")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tlme-sim",
        description="Time-local master equations for driven boson and qubit systems",
    )
    parser.add_argument("--list-presets", action="store_true", help="print presets and exit")
    commands = parser.add_subparsers(dest="command")

    kernel = commands.add_parser("kernel", help="dissipation and noise kernels F(tau), G(tau)")
    _add_common_options(kernel)
    kernel.add_argument("--tau", type=float, help="print F and G at a single lag")

    green = commands.add_parser("green", help="Green's function V(t)")
    _add_common_options(green)

    coeffs = commands.add_parser("coeffs", help="gamma(t), xi(t), lambda(t) with pole flags")
    _add_common_options(coeffs)

    evolve = commands.add_parser("evolve", help="density-matrix or first-moment trajectory")
    _add_common_options(evolve)
    evolve.add_argument("--engine", choices=["boson-tlme", "qubit-tlme", "pseudomode", "exact-moment"])

    sweep = commands.add_parser("sweep", help="steady state versus a swept parameter")
    _add_common_options(sweep)
    sweep.add_argument("--source", dest="sweep_source",
                       choices=["closed-form", "ratio", "qubit-tlme", "pseudomode"])
    sweep.add_argument("--parameter", dest="sweep_parameter")
    sweep.add_argument("--start", dest="sweep_start", type=float)
    sweep.add_argument("--stop", dest="sweep_stop", type=float)
    sweep.add_argument("--points", dest="sweep_points", type=int)
    sweep.add_argument("--workers", type=int, help="worker processes (0: one per CPU)")
    sweep.add_argument("--html", action="store_true", help="also render an HTML summary")
    return parser


_NOT_CONFIG = {"config", "quiet", "list_presets", "lorentzian", "markov"}


def _flag_values(args: argparse.Namespace) -> Dict[str, Any]:
    values = {key: value for key, value in vars(args).items()
              if value is not None and key not in _NOT_CONFIG}
    if not values.get("html"):
        values.pop("html", None)
    if args.lorentzian:
        try:
            gamma, linewidth, detuning, offset = (float(v) for v in args.lorentzian.split(","))
        except ValueError:
            raise ConfigurationError("expected four comma-separated numbers G,L,D,d", field="lorentzian")
        values.update(spectrum="lorentzian", gamma=gamma, linewidth=linewidth,
                      detuning=detuning, offset=offset)
    if args.markov is not None:
        values.update(spectrum="markovian", gamma=args.markov)
    if args.spectrum_file:
        values["spectrum"] = "tabulated"
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Preset values, overlaid by the config file, overlaid by explicit flags."""
    merged: Dict[str, Any] = {}
    file_values: Dict[str, Any] = {}
    if args.config:
        try:
            file_values = load_run_config(args.config)
        except FileNotFoundError as e:
            raise ConfigurationError(str(e), field="config")
    flags = _flag_values(args)

    preset_name = flags.get("preset", file_values.get("preset"))
    if preset_name:
        merged.update(get_preset(preset_name).model_dump(exclude={"name", "provenance"}))
    merged.update(file_values)
    merged.update(flags)
    merged["command"] = args.command

    try:
        return RunConfig(**merged)
    except ValidationError as e:
        error = e.errors()[0]
        field = ".".join(str(part) for part in error.get("loc", ())) or None
        raise ConfigurationError(error.get("msg", str(e)), field=field)


def spectral_model(cfg: RunConfig) -> SpectralModel:
    if cfg.spectrum == "markovian":
        return SpectralModel.markovian(cfg.gamma, temperature=cfg.temperature)
    if cfg.spectrum == "tabulated":
        return load_tabulated_model(cfg.spectrum_file, temperature=cfg.temperature)
    return SpectralModel.lorentzian(cfg.gamma, cfg.linewidth, cfg.detuning, cfg.offset,
                                    temperature=cfg.temperature)


def _output_path(cfg: RunConfig, suffix: str) -> str:
    directory = cfg.output_dir or get_settings().output_dir
    return os.path.join(directory, f"{cfg.stem}_{suffix}")


def _green(cfg: RunConfig, kernel: KernelSampler):
    return solve_volterra(CouplingMatrix.diagonal(cfg.detuning), kernel, cfg.step, cfg.steps,
                          method=cfg.method)


def _poles(cfg: RunConfig, model: SpectralModel, trajectory):
    if model.kind is SpectralKind.LORENTZIAN:
        return pole_spectrum(trajectory, gamma=model.gamma, linewidth=model.linewidth)
    return pole_spectrum(trajectory)


def cmd_kernel(cfg: RunConfig) -> int:
    """Write F(tau), G(tau) on the grid; with --tau also print the single values."""
    kernel = KernelSampler.single(spectral_model(cfg))
    if cfg.tau is not None:
        f_value = kernel.dissipation(cfg.tau)[0, 0] if cfg.tau >= 0 else np.conj(kernel.dissipation(-cfg.tau)[0, 0])
        g_value = kernel.noise(cfg.tau)[0, 0]
        print(f"F({cfg.tau:g}) = {f_value.real:.17g} {f_value.imag:+.17g}j")
        print(f"G({cfg.tau:g}) = {g_value.real:.17g} {g_value.imag:+.17g}j")
    if kernel.dissipation_weight.any():
        logger.info(f"Kernel carries an instantaneous part {kernel.dissipation_weight[0, 0]:.6g} delta(tau)")
    lags = cfg.step * np.arange(cfg.steps + 1)
    write_kernel_csv(_output_path(cfg, "kernel.csv"), lags, kernel.sample_dissipation(lags),
                     kernel.sample_noise(lags))
    return 0


def cmd_green(cfg: RunConfig) -> int:
    model = spectral_model(cfg)
    trajectory = _green(cfg, KernelSampler.single(model))
    write_green_csv(_output_path(cfg, "green.csv"), trajectory)
    poles = _poles(cfg, model, trajectory)
    logger.info(f"V(t) solved with the {trajectory.solver} solver; min |det V| = "
                f"{trajectory.min_abs_det:.3g}, {poles.count} zero passages")
    return 0


def cmd_coeffs(cfg: RunConfig) -> int:
    model = spectral_model(cfg)
    kernel = KernelSampler.single(model)
    trajectory = _green(cfg, kernel)
    track = build_coefficients(trajectory, Drive.constant(cfg.drive), kernel)
    write_coeffs_csv(_output_path(cfg, "coeffs.csv"), track)
    poles = _poles(cfg, model, trajectory)
    report = build_report(cfg.preset, "coeffs", {
        "pole_count": poles.count, "period": poles.period,
        "expected_period": poles.expected_period, "period_error": poles.relative_error,
        "flagged_steps": int(track.pole_flags.sum()),
    }, poles=poles.times)
    write_json_report(_output_path(cfg, "coeffs.json"), report)
    return 0


def _evolve_config(cfg: RunConfig) -> EvolveConfig:
    return EvolveConfig(step=cfg.step, t_end=cfg.t_end, cutoff=cfg.cutoff, tolerance=cfg.tolerance,
                        min_step=cfg.min_step, initial_state=cfg.initial_state)


def _trajectory_metrics(run) -> Dict[str, Any]:
    metrics = {
        "final_time": run.times[-1],
        "final_lowering": run.lowering[-1, 0],
        "trace_drift": float(np.max(run.trace_error)),
        "hermiticity_error": float(np.max(run.hermiticity_error)),
        "min_eigenvalue": float(np.min(run.min_eigenvalue)),
        "cutoff_overflow": run.cutoff_overflow,
        "complete": run.complete,
    }
    if run.sigma_z is not None:
        metrics["final_sigma_z"] = run.sigma_z[-1]
    else:
        metrics["final_number"] = run.number[-1, 0]
    return metrics


def cmd_evolve(cfg: RunConfig) -> int:
    model = spectral_model(cfg)
    drive = Drive.constant(cfg.drive)
    engine = cfg.engine
    trajectory_path = _output_path(cfg, f"{engine}.csv")
    poles: List[float] = []

    if engine == "pseudomode":
        reference = PseudomodeModel.from_spectral(model, drive=cfg.drive, cutoff=cfg.cutoff)
        run = evolve_pseudomode(reference, _evolve_config(cfg))
        write_trajectory_csv(trajectory_path, run)
        metrics = _trajectory_metrics(run)
        metrics["cutoff_shift"] = run.metadata.get("cutoff_shift")
    else:
        kernel = KernelSampler.single(model)
        trajectory = _green(cfg, kernel)
        poles = list(trajectory.zero_passage_times)
        if engine == "exact-moment":
            moment = exact_first_moment(trajectory, drive, [cfg.initial_amplitude])
            write_moment_csv(trajectory_path, trajectory.times, moment)
            metrics = {"final_time": trajectory.times[-1], "final_lowering": moment[-1, 0],
                       "tail_relative_change": relative_change(trajectory.times, moment[:, 0])}
        else:
            track = build_coefficients(trajectory, drive, kernel)
            evolve = evolve_boson_tlme if engine == "boson-tlme" else evolve_qubit_tlme
            try:
                run = evolve(track, _evolve_config(cfg))
            except PoleCrossingError as exc:
                if exc.partial is not None:
                    write_trajectory_csv(trajectory_path, exc.partial)
                    logger.warning(f"Partial trajectory up to t={exc.partial.times[-1]:.6g} "
                                   f"written to {trajectory_path}")
                raise
            write_trajectory_csv(trajectory_path, run)
            metrics = _trajectory_metrics(run)
            if engine == "qubit-tlme":
                flag = weak_excitation_flag(run)
                metrics["max_excited_population"] = flag.max_excited_population
                metrics["outside_weak_excitation"] = flag.outside_regime

    report = build_report(cfg.preset, engine, metrics, poles=poles)
    write_json_report(_output_path(cfg, f"{engine}.json"), report)
    return 0


def _sweep_spec(cfg: RunConfig) -> SweepSpec:
    missing = [name for name in ("sweep_start", "sweep_stop", "sweep_points")
               if getattr(cfg, name) is None]
    if missing:
        raise ConfigurationError("sweep range is incomplete", field=missing[0])
    try:
        return SweepSpec(parameter=cfg.sweep_parameter, start=cfg.sweep_start,
                         stop=cfg.sweep_stop, points=cfg.sweep_points)
    except ValidationError as e:
        raise ConfigurationError(e.errors()[0].get("msg", str(e)), field="sweep")


def cmd_sweep(cfg: RunConfig, progress: bool = True) -> int:
    spec = _sweep_spec(cfg)
    if cfg.spectrum != "lorentzian":
        raise ConfigurationError("sweeps need a Lorentzian environment", field="spectrum")
    problem = SteadyStateProblem(gamma=cfg.gamma, linewidth=cfg.linewidth, detuning=cfg.detuning,
                                 offset=cfg.offset, drive=cfg.drive, cutoff=cfg.cutoff,
                                 step=cfg.step, t_end=cfg.t_end)
    source = Source(cfg.sweep_source)
    result = run_sweep(problem, spec, source, workers=cfg.workers, progress=progress)

    stem = f"sweep_{source.value}"
    write_sweep_csv(_output_path(cfg, f"{stem}.csv"), result)
    maxima = result.maxima(positive_only=True)
    metrics = {
        "points": spec.points,
        "converged": result.converged,
        "maxima_positive": len(maxima),
        "maxima_positions": list(maxima),
        "max_normalized_violation": result.max_violation(),
    }
    if spec.parameter == "detuning" and cfg.offset == 0:
        closed = np.array([sigma_z_infinity_closed_form(cfg.gamma, cfg.linewidth, value, cfg.drive)
                           for value in spec.values()])
        metrics["max_abs_vs_closed_form"] = float(np.nanmax(np.abs(result.sigma_z - closed)))
    report = build_report(cfg.preset, source.value, metrics, violations=sweep_violations(result))
    write_json_report(_output_path(cfg, f"{stem}.json"), report)
    if cfg.html:
        generate_sweep_summary_report(report, cfg.output_dir or get_settings().output_dir)
    logger.info(f"Sweep finished: {len(maxima)} local maxima for positive values, "
                f"max normalized violation {metrics['max_normalized_violation']:.3g}")
    return 0


COMMANDS = {"kernel": cmd_kernel, "green": cmd_green, "coeffs": cmd_coeffs, "evolve": cmd_evolve}


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point for the tlme-sim command."""
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.list_presets:
        for name, provenance in list_presets().items():
            print(f"{Fore.CYAN}{name}{Style.RESET_ALL}: {provenance}")
        return 0
    if not args.command:
        parser.print_help()
        return 2

    setup_logging(quiet=args.quiet)
    try:
        cfg = resolve_config(args)
        logger.info(f"Running '{cfg.command}' (preset {cfg.preset or 'none'})")
        if cfg.command == "sweep":
            return cmd_sweep(cfg, progress=not args.quiet)
        return COMMANDS[cfg.command](cfg)
    except SimulationError as e:
        logger.error(f"{e.__class__.__name__}: {e}")
        return e.exit_code
    except (ValueError, FileNotFoundError) as e:
        logger.error(f"Configuration error: {e}")
        return ConfigurationError.exit_code
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
