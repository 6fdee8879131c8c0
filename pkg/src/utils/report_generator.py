"""JSON analysis reports and the HTML sweep summary."""

import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np
from jinja2 import Environment, FileSystemLoader

logger = logging.getLogger(__name__)

TEMPLATE_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(__file__))), "templates")


def _plain(value):
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(item) for item in value]
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": float(value.real), "im": float(value.imag)}
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def build_report(preset: Optional[str], source: str, metrics: Dict[str, Any],
                 poles: Optional[List[float]] = None,
                 violations: Optional[List[Dict[str, Any]]] = None) -> Dict[str, Any]:
    """Report object {preset, source, metrics, poles, violations}."""
    return _plain({
        "preset": preset,
        "source": source,
        "metrics": metrics,
        "poles": list(poles) if poles is not None else [],
        "violations": list(violations) if violations is not None else [],
    })


def write_json_report(path: str, report: Dict[str, Any]) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"JSON report written to {path}")
    return path


def sweep_violations(result) -> List[Dict[str, Any]]:
    return [{"value": r.value, "residual": r.residual, "normalized": r.normalized_violation,
             "converged": r.converged} for r in result.records]


def generate_sweep_summary_report(
    report: Dict[str, Any],
    output_dir: str,
    report_title: str = "Steady-State Sweep Summary",
    timestamp_override: str = None
) -> str:
    """
    Render the HTML summary of a sweep report.

    Args:
        report: Report dictionary from ``build_report``
        output_dir: Directory the HTML file is written to
        report_title: Title for the report
        timestamp_override: Fixed timestamp, used for reproducible output

    Returns:
        str: Path to the generated HTML report file
    """
    os.makedirs(output_dir, exist_ok=True)
    timestamp = timestamp_override if timestamp_override else datetime.now().strftime('%Y-%m-%d %H:%M:%S')

    env = Environment(loader=FileSystemLoader(TEMPLATE_DIR), autoescape=True)
    template = env.get_template('report_template.html')
    metrics = report.get("metrics", {})
    violations = report.get("violations", [])
    failed = [v for v in violations if not v.get("converged", True)]

    html_content = template.render(
        report_title=report_title,
        timestamp=timestamp,
        preset=report.get("preset") or "custom",
        source=report.get("source"),
        metrics=metrics,
        points=len(violations),
        failed_points=failed,
        violations=violations,
    )

    stem = (report.get("preset") or "sweep").replace(os.sep, "_")
    report_path = os.path.join(output_dir, f"{stem}_{report.get('source')}_report.html")
    with open(report_path, 'w', encoding='utf-8') as f:
        f.write(html_content)

    logger.info(f"Sweep summary report generated: {report_path}")
    return report_path
