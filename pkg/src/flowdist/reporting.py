"""Deterministic artifact writers.

CSV files open with `# key=value` metadata lines, then a header row,
then data rows; floats print as %.17g (shortest exact round-trip is not
needed, fixed width is).  Non-finite values never reach a file: value
columns get a sentinel above the divergence cap and the status column
says 'inf'.
"""

from __future__ import annotations

import json
import math

import numpy as np

FLOAT_FMT = "%.17g"


def file_sentinel(T: float) -> float:
    # must exceed the 1e6 * T divergence cap
    return 2.0e6 * float(T)


def fmt_value(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT_FMT % float(x)


def csv_value(x, T: float):
    """(cell text, status) pair mapping non-finite to the sentinel."""
    x = float(x)
    if math.isfinite(x):
        return FLOAT_FMT % x, "ok"
    return FLOAT_FMT % file_sentinel(T), "inf"


def write_csv(path, columns, rows, meta: dict) -> None:
    lines = [f"# {k}={fmt_value(v)}" for k, v in meta.items()]
    lines.append(",".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row width {len(row)} != header width {len(columns)}")
        lines.append(",".join(fmt_value(v) for v in row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _clean(obj, T: float):
    if isinstance(obj, dict):
        return {str(k): _clean(v, T) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v, T) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else file_sentinel(T)
    if isinstance(obj, np.ndarray):
        return [_clean(v, T) for v in obj.tolist()]
    return obj


def write_json(path, obj: dict, T: float = 1.0) -> None:
    text = json.dumps(_clean(obj, T), sort_keys=True, indent=2, allow_nan=False)
    with open(path, "w", newline="") as fh:
        fh.write(text + "\n")


def base_meta(cfg_hash: str, cfg, lam=None) -> dict:
    meta = {"config": cfg_hash}
    for key in ("h", "dt", "ds"):
        v = getattr(cfg, key, None)
        if v is not None:
            meta[key] = v
    if lam is not None:
        meta["lambda"] = lam
    meta["seed"] = cfg.seed
    return meta
