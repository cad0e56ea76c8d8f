"""Deterministic CSV output and run manifests."""
from __future__ import annotations

import hashlib
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__

MANIFEST_NAME = "manifest.json"


def format_value(value) -> str:
    """Shortest round-trip decimal for floats; plain text otherwise."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if v == 0.0:
            return "0.0"  # drop the sign of negative zero
        return repr(v)
    return str(value)


def write_csv(path: Path, header, rows) -> Path:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_manifest(out_dir: Path, *, command: str, argv, config: dict, derived: dict,
                   diagnostics: dict, outputs, started_utc: str, wall_clock_s: float) -> Path:
    out_dir = Path(out_dir)
    manifest = {
        "tool": "phononlab",
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "config": config,
        "derived": derived,
        "diagnostics": diagnostics,
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
        "environment": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "platform": platform.platform(),
        },
        "started_utc": started_utc,
        "wall_clock_s": wall_clock_s,
    }
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def manifest_schema() -> dict:
    return json.loads((Path(__file__).parent / "schemas" / "manifest.schema.json").read_text())
