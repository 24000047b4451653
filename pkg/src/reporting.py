"""
Reporting Module
Renders command results as stable JSON documents or coloured text, and writes report files.
"""

import json
import logging
import math
import platform
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
from colorama import Fore, Style

from utils import save_json_file

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
VERSIONED_PACKAGES = ('numpy', 'scipy', 'pandas', 'matplotlib', 'safetensors', 'PyYAML')


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and tuples into plain JSON types."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        # JSON has no infinity; unbounded values are reported as null
        return value if math.isfinite(value) else None
    return value


def build_report(command: str, result: Dict[str, Any], run_config: Dict[str, Any]) -> Dict[str, Any]:
    """Envelope shared by every command: schema version, command, resolved config, result."""
    return {
        'schema_version': REPORT_SCHEMA_VERSION,
        'command': command,
        'config': to_jsonable(run_config),
        'result': to_jsonable(result),
    }


def render_json(report: Dict[str, Any]) -> str:
    return json.dumps(report, indent=2, ensure_ascii=False, allow_nan=False)


def render_error(error_payload: Dict[str, Any]) -> str:
    return json.dumps({'error': to_jsonable(error_payload)}, indent=2, allow_nan=False)


def _format_scalar(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, bool):
        return Fore.YELLOW + str(value).lower() + Style.RESET_ALL
    if value is None:
        return "-"
    return str(value)


def _render_lines(value: Any, indent: int, lines: list, max_items: int):
    pad = '  ' * indent
    if isinstance(value, dict):
        for key, item in value.items():
            if isinstance(item, (dict, list)) and item:
                lines.append(f"{pad}{Fore.CYAN}{key}{Style.RESET_ALL}:")
                _render_lines(item, indent + 1, lines, max_items)
            else:
                lines.append(f"{pad}{key}: {_format_scalar(item)}")
    elif isinstance(value, list):
        if all(not isinstance(item, (dict, list)) for item in value):
            shown = ', '.join(_format_scalar(item) for item in value[:max_items])
            more = f" ... (+{len(value) - max_items})" if len(value) > max_items else ""
            lines.append(f"{pad}[{shown}{more}]")
        else:
            for index, item in enumerate(value, start=1):
                lines.append(f"{pad}{Style.BRIGHT}#{index}{Style.RESET_ALL}")
                _render_lines(item, indent + 1, lines, max_items)
    else:
        lines.append(f"{pad}{_format_scalar(value)}")


def render_text(report: Dict[str, Any], max_items: int = 12) -> str:
    """Human-readable rendering of the result section; the config is left to the JSON form."""
    lines = [f"{Style.BRIGHT}{report['command']}{Style.RESET_ALL}"]
    _render_lines(report['result'], 1, lines, max_items)
    return '\n'.join(lines)


def library_versions() -> Dict[str, Optional[str]]:
    versions = {'python': platform.python_version()}
    for package in VERSIONED_PACKAGES:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = None
    return versions


def write_report(report: Dict[str, Any], out_dir: Path, name: str) -> Path:
    """Write <name>.json plus a <name>.meta.json sidecar with time and library versions."""
    out_dir = Path(out_dir)
    report_path = out_dir / f"{name}.json"
    save_json_file(report, str(report_path))
    save_json_file({
        'report': report_path.name,
        'generated_at': datetime.now(timezone.utc).isoformat(timespec='seconds'),
        'versions': library_versions(),
    }, str(out_dir / f"{name}.meta.json"))
    logger.info(f"Report written to {report_path}")
    return report_path
