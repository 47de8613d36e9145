"""Run configurations: JSON round-trip, validation, canonical hashing.

A config is plain JSON; its sha256 over the canonical dump is embedded
in every artifact so outputs can be traced back to inputs byte for
byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field as dc_field

from . import fields
from .errors import ConfigInvalid
from .geometry import Box

SUBCOMMANDS = (
    "distance", "lipschitz", "extend", "flow", "fbcheck",
    "maximal", "certify", "transport", "catalog",
)

_TOP_KEYS = {
    "subcommand", "field", "h", "dt", "ds", "schedule",
    "epsilon", "seed", "outdir", "box", "options",
}


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    field: dict = None
    h: float = None
    dt: float = None
    ds: float = None
    schedule: tuple = None
    epsilon: float = None
    seed: int = 0
    outdir: str = "."
    box: tuple = None  # (t0, t1, xlo, xhi)
    options: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"subcommand": self.subcommand, "seed": self.seed, "outdir": self.outdir}
        if self.field is not None:
            out["field"] = dict(self.field)
        for key in ("h", "dt", "ds", "epsilon"):
            v = getattr(self, key)
            if v is not None:
                out[key] = v
        if self.schedule is not None:
            out["schedule"] = list(self.schedule)
        if self.box is not None:
            out["box"] = list(self.box)
        if self.options:
            out["options"] = self.options
        return out


def canonical_json(obj) -> str:
    try:
        return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
    except (TypeError, ValueError) as e:
        raise ConfigInvalid(f"config is not canonical JSON: {e}")


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(canonical_json(cfg.to_dict()).encode()).hexdigest()


def _fail(msg: str):
    raise ConfigInvalid(msg)


def from_dict(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        _fail("config root must be a JSON object")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        _fail(f"unknown config keys: {sorted(unknown)}")
    sub = d.get("subcommand")
    if sub not in SUBCOMMANDS:
        _fail(f"subcommand must be one of {SUBCOMMANDS}, got {sub!r}")

    for key in ("h", "dt", "ds", "epsilon"):
        v = d.get(key)
        if v is not None and (not isinstance(v, (int, float)) or v <= 0):
            _fail(f"{key} must be a positive number, got {v!r}")
    sched = d.get("schedule")
    if sched is not None:
        if not isinstance(sched, (list, tuple)) or not sched:
            _fail("schedule must be a nonempty array")
        vals = [float(v) for v in sched]
        if any(not (0.0 < v <= 1.0) for v in vals):
            _fail("schedule values must lie in (0, 1]")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            _fail("schedule must be strictly decreasing")
        sched = tuple(vals)
    seed = d.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        _fail(f"seed must be a nonnegative integer, got {seed!r}")
    box = d.get("box")
    if box is not None:
        if not isinstance(box, (list, tuple)) or len(box) != 4:
            _fail("box must be [t0, t1, xlo, xhi]")
        t0, t1, xlo, xhi = (float(v) for v in box)
        if not (t1 > t0 and xhi > xlo):
            _fail("box needs t1 > t0 and xhi > xlo")
        box = (t0, t1, xlo, xhi)
    fld = d.get("field")
    if fld is not None:
        if not isinstance(fld, dict) or not ({"name", "path"} & set(fld)):
            _fail("field must be an object with 'name' (catalog) or 'path' (sampled)")
    opts = d.get("options", {})
    if not isinstance(opts, dict):
        _fail("options must be an object")

    cfg = RunConfig(
        subcommand=sub, field=fld,
        h=d.get("h"), dt=d.get("dt"), ds=d.get("ds"),
        schedule=sched, epsilon=d.get("epsilon"),
        seed=seed, outdir=d.get("outdir", "."), box=box, options=opts,
    )
    canonical_json(cfg.to_dict())  # reject non-serializable option payloads
    return cfg


def from_file(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as e:
        raise ConfigInvalid(f"cannot read config: {e}")
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"config is not valid JSON: {e}")
    return from_dict(d)


def build_field(cfg: RunConfig) -> fields.FieldSpec:
    if cfg.field is None:
        _fail(f"subcommand {cfg.subcommand!r} needs a field")
    if "path" in cfg.field:
        if cfg.box is not None:
            _fail("sampled fields carry their own box; drop the box override")
        return fields.load_sampled_field(cfg.field["path"])
    name = cfg.field["name"]
    params = cfg.field.get("params", [])
    box = Box(*cfg.box[:2], (cfg.box[2],), (cfg.box[3],)) if cfg.box else None
    try:
        return fields.catalog_field(name, *params, box=box)
    except ValueError as e:
        raise ConfigInvalid(str(e))
