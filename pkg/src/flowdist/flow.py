"""Integral curves, curve families, and forward-backward curves.

The integrator is explicit midpoint (RK2) with a fixed step; the time
component is advanced exactly.  Curve families come from catalog closed
forms when available and are integrated numerically otherwise.  At
points where the spatial velocity vanishes, numeric integration follows
the "stay" branch; catalog rules enumerate the other branches.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from . import fields
from .errors import EmptySubset, ProfileMismatch, SparseFamily, StepTooLarge
from .geometry import Box, point_array


@functools.lru_cache(maxsize=64)
def field_slope_estimate(spec: fields.FieldSpec, density: int = 513) -> float:
    """Lattice estimate of max |vhat(x) - vhat(y)| / |x - y| (one step)."""
    step, prefix = fields._oscillation_profile(spec, density)
    return float(prefix[0] / step)


def default_tol_ode(spec: fields.FieldSpec, ds: float) -> float:
    return 10.0 * ds * max(field_slope_estimate(spec), 1.0)


@dataclass(frozen=True, eq=False)
class IntegralCurve:
    """Samples of one integral curve at uniform parameter step ds."""

    samples: np.ndarray  # (K+1, n+1); samples[:, 0] advances by direction*ds
    ds: float
    direction: int  # +1 or -1
    origin: np.ndarray
    clipped: bool  # True if the curve was cut at the domain boundary
    max_residual: float
    tol_ode: float
    kind: str = "numeric"  # "numeric" | "analytic"
    param: float = None

    @property
    def duration(self) -> float:
        return (len(self.samples) - 1) * self.ds

    def endpoint(self) -> np.ndarray:
        return self.samples[-1]

    def as_fb(self) -> "FBCurve":
        profile = np.full(len(self.samples) - 1, self.direction, dtype=int)
        return FBCurve(self.samples.copy(), self.ds, profile)


@dataclass(frozen=True, eq=False)
class FBCurve:
    """A curve whose velocity is +v or -v on each sample interval."""

    samples: np.ndarray  # (M+1, n+1)
    ds: float
    profile: np.ndarray  # (M,) entries +1 / -1

    def __post_init__(self):
        if len(self.profile) != len(self.samples) - 1:
            raise ValueError("profile must have one entry per sample interval")
        if not np.all(np.isin(self.profile, (-1, 1))):
            raise ValueError("profile entries must be +1 or -1")

    @property
    def duration(self) -> float:
        return len(self.profile) * self.ds

    @property
    def switch_params(self) -> np.ndarray:
        """Parameter values where the direction profile flips sign."""
        flips = np.nonzero(np.diff(self.profile))[0] + 1
        return flips * self.ds

    @classmethod
    def from_legs(cls, legs) -> "FBCurve":
        if not legs:
            raise ValueError("need at least one leg")
        ds = legs[0].ds
        chunks = [legs[0].samples]
        profile = [np.full(len(legs[0].samples) - 1, legs[0].direction, dtype=int)]
        for prev, leg in zip(legs, legs[1:]):
            if abs(leg.ds - ds) > 1e-12:
                raise ValueError("legs must share the parameter step")
            gap = np.max(np.abs(prev.samples[-1] - leg.samples[0]))
            if gap > 1e-9:
                raise ValueError(f"legs do not meet: junction gap {gap:.3g}")
            chunks.append(leg.samples[1:])
            profile.append(np.full(len(leg.samples) - 1, leg.direction, dtype=int))
        return cls(np.vstack(chunks), ds, np.concatenate(profile))


# ---------------------------------------------------------------------------
# integration


def integrate_curve(
    spec: fields.FieldSpec,
    start,
    direction: int,
    duration: float,
    ds: float,
    tol_ode: float = None,
) -> IntegralCurve:
    """March one curve with explicit midpoint steps (time advanced exactly).

    The curve is clipped at the domain boundary (flagged, not raised).
    """
    if direction not in (-1, 1):
        raise ValueError("direction must be +1 or -1")
    if ds <= 0 or duration < 0:
        raise ValueError("need ds > 0 and duration >= 0")
    if tol_ode is None:
        tol_ode = default_tol_ode(spec, ds)
    p0 = point_array(start)
    n = spec.n
    steps = int(round(duration / ds))
    t0, t1 = spec.box.t0, spec.box.t1
    xlo = np.asarray(spec.box.xlo)
    xhi = np.asarray(spec.box.xhi)

    pts = [p0]
    resid = 0.0
    clipped = False
    t = p0[0]
    x = p0[1:].astype(float)
    for _ in range(steps):
        t_next = t + direction * ds
        if t_next < t0 - 1e-12 or t_next > t1 + 1e-12:
            clipped = True
            break
        v0 = fields.raw_vhat(spec, np.array([t]), x[None, :])[0]
        xm = x + 0.5 * direction * ds * v0
        vm = fields.raw_vhat(spec, np.array([t + 0.5 * direction * ds]), xm[None, :])[0]
        x_next = x + direction * ds * vm
        if np.any(x_next < xlo - 1e-12) or np.any(x_next > xhi + 1e-12):
            clipped = True
            break
        # residual against the field at the segment midpoint
        mid_t = t + 0.5 * direction * ds
        mid_x = 0.5 * (x + x_next)
        v_mid = fields.raw_vhat(spec, np.array([mid_t]), mid_x[None, :])[0]
        r = float(np.max(np.abs((x_next - x) / ds - direction * v_mid)))
        resid = max(resid, r)
        t, x = t_next, x_next
        pts.append(np.concatenate([[t], x]))
    if resid > 10.0 * tol_ode:
        raise StepTooLarge(
            f"residual {resid:.3g} exceeds 10 * tol_ode = {10 * tol_ode:.3g}; shrink ds"
        )
    return IntegralCurve(
        samples=np.array(pts),
        ds=ds,
        direction=direction,
        origin=p0,
        clipped=clipped,
        max_residual=resid,
        tol_ode=tol_ode,
    )


def flow_map(
    spec: fields.FieldSpec,
    starts,
    t_start: float,
    t_end: float,
    ds: float,
    method: str = "rk2",
    record: bool = False,
):
    """Vectorized 1-D flow of many starts from t_start to t_end.

    Returns final heights, or the full (K+1, M) trajectory when record
    is set.  Heights are NOT clipped at the spatial boundary; callers
    mask exits themselves.
    """
    if spec.n != 1:
        raise NotImplementedError("flow_map is 1-D only")
    x = np.asarray(starts, dtype=float).copy()
    span = t_end - t_start
    steps = max(1, int(round(abs(span) / ds))) if span != 0.0 else 0
    sgn = 1.0 if span >= 0 else -1.0
    traj = [x.copy()] if record else None
    t = t_start
    for _ in range(steps):
        v0 = fields.raw_vhat(spec, np.full(x.shape, t), x[:, None])[:, 0]
        if method == "euler":
            x = x + sgn * ds * v0
        else:
            xm = x + 0.5 * sgn * ds * v0
            vm = fields.raw_vhat(spec, np.full(x.shape, t + 0.5 * sgn * ds), xm[:, None])[:, 0]
            x = x + sgn * ds * vm
        t = t + sgn * ds
        if record:
            traj.append(x.copy())
    if record:
        return np.array(traj)
    return x


# ---------------------------------------------------------------------------
# curve families


@dataclass(frozen=True, eq=False)
class MultiFlow:
    """A parameterized family of integral curves on a shared time grid."""

    spec: fields.FieldSpec
    params: np.ndarray
    ds: float
    kind: str  # "analytic" | "numeric"
    tgrid: np.ndarray  # (K+1,) absolute times, step ds
    heights: np.ndarray  # (P, K+1); nan where a curve left the box
    dist_dense: float

    def curve(self, i: int) -> IntegralCurve:
        valid = np.isfinite(self.heights[i])
        samples = np.column_stack([self.tgrid[valid], self.heights[i][valid]])
        return IntegralCurve(
            samples=samples,
            ds=self.ds,
            direction=1,
            origin=samples[0],
            clipped=not valid.all(),
            max_residual=0.0,
            tol_ode=default_tol_ode(self.spec, self.ds),
            kind=self.kind,
            param=float(self.params[i]),
        )

    @property
    def curves(self):
        return [self.curve(i) for i in range(len(self.params))]


def build_multiflow(
    spec: fields.FieldSpec,
    params,
    ds: float,
    dense_cap: float = None,
    probe_density: tuple = (33, 65),
) -> MultiFlow:
    """Family of curves over the whole time span, one per parameter.

    Catalog fields use their closed-form rule; otherwise curves are
    integrated from the t = t0 section.  The density proxy dist_dense is
    the worst distance from a probe-lattice node to the family.
    """
    if spec.n != 1:
        raise NotImplementedError("multi-flows are 1-D only")
    params = np.asarray(sorted(float(a) for a in np.atleast_1d(params)))
    K = int(round(spec.box.T / ds))
    tgrid = spec.box.t0 + np.arange(K + 1) * ds
    srel = tgrid - spec.box.t0
    if spec.kind == "catalog":
        kind = "analytic"
        heights = np.array(
            [spec.entry.multiflow_height(spec.params, a, srel) for a in params]
        )
    else:
        kind = "numeric"
        heights = flow_map(spec, params, spec.box.t0, spec.box.t1, ds, record=True).T
    lo, hi = spec.box.xlo[0], spec.box.xhi[0]
    outside = (heights < lo - 1e-12) | (heights > hi + 1e-12)
    # a curve stays dead after it first leaves the box
    dead = np.logical_or.accumulate(outside, axis=1)
    heights = np.where(dead, np.nan, heights)

    dist_dense = _density_proxy(spec.box, tgrid, heights, probe_density)
    if dense_cap is not None and dist_dense > dense_cap:
        raise SparseFamily(
            f"dist_dense {dist_dense:.3g} exceeds the cap {dense_cap:.3g}; add parameters"
        )
    return MultiFlow(spec, params, ds, kind, tgrid, heights, dist_dense)


def _density_proxy(box: Box, tgrid, heights, probe_density) -> float:
    from scipy.spatial import cKDTree

    valid = np.isfinite(heights)
    tt = np.broadcast_to(tgrid, heights.shape)[valid]
    xx = heights[valid]
    if xx.size == 0:
        return float("inf")
    tree = cKDTree(np.column_stack([tt, xx]))
    pt = np.linspace(box.t0, box.t1, probe_density[0])
    px = np.linspace(box.xlo[0], box.xhi[0], probe_density[1])
    probes = np.column_stack([g.ravel() for g in np.meshgrid(pt, px, indexing="ij")])
    d, _ = tree.query(probes)
    return float(np.max(d))


@dataclass(frozen=True, eq=False)
class FlowTube:
    """Point cloud swept by a subset of a curve family."""

    mf: MultiFlow
    param_subset: np.ndarray
    points: np.ndarray  # (M, n+1)
    point_params: np.ndarray  # (M,) parameter of the carrying curve
    bbox_lo: np.ndarray
    bbox_hi: np.ndarray


def build_flowtube(mf: MultiFlow, subset) -> FlowTube:
    subset = np.atleast_1d(np.asarray(subset, dtype=float))
    if subset.size == 0:
        raise EmptySubset("empty parameter subset")
    sel = []
    for a in subset:
        idx = np.nonzero(np.isclose(mf.params, a, rtol=0.0, atol=1e-12))[0]
        if idx.size == 0:
            raise EmptySubset(f"parameter {a} not in the family")
        sel.append(idx[0])
    pts = []
    par = []
    for i in sel:
        valid = np.isfinite(mf.heights[i])
        pts.append(np.column_stack([mf.tgrid[valid], mf.heights[i][valid]]))
        par.append(np.full(int(valid.sum()), mf.params[i]))
    points = np.vstack(pts)
    return FlowTube(
        mf=mf,
        param_subset=np.asarray([mf.params[i] for i in sel]),
        points=points,
        point_params=np.concatenate(par),
        bbox_lo=points.min(axis=0),
        bbox_hi=points.max(axis=0),
    )


# ---------------------------------------------------------------------------
# validation and triviality


@dataclass(frozen=True)
class FBReport:
    max_residual: float
    displacement_gap: float
    tol: float
    passed: bool


def validate_fb_curve(spec: fields.FieldSpec, c: FBCurve, tol: float) -> FBReport:
    """Residuals of a forward-backward curve against the signed field.

    Checks (i) per-interval finite-difference velocity against the
    declared profile and (ii) the displacement identity
    y - x = integral of (profile * v) along the curve.
    Raises ProfileMismatch when a best-fitting sign contradicts the
    declared profile on an interval.
    """
    s = c.samples
    d = np.diff(s, axis=0)
    best = np.sign(d[:, 0]).astype(int)
    disagree = (best != 0) & (best != c.profile)
    if np.any(disagree):
        k = int(np.nonzero(disagree)[0][0])
        raise ProfileMismatch(
            f"interval {k}: declared {c.profile[k]:+d} but the time component moves "
            f"{best[k]:+d}"
        )
    mid = 0.5 * (s[:-1] + s[1:])
    vh = fields.raw_vhat(spec, mid[:, 0], mid[:, 1:])
    v_mid = np.concatenate([np.ones((len(mid), 1)), vh], axis=1)
    resid = np.abs(d / c.ds - c.profile[:, None] * v_mid).max(axis=1)
    max_resid = float(resid.max()) if len(resid) else 0.0
    quad = (c.profile[:, None] * v_mid * c.ds).sum(axis=0)
    gap = float(np.max(np.abs((s[-1] - s[0]) - quad)))
    passed = max_resid <= tol and gap <= tol * max(c.duration, c.ds)
    return FBReport(max_resid, gap, tol, passed)


def _candidate_heights(spec, mf, points):
    """Orbit height functions through the given space-time points."""
    cands = []
    if spec.kind == "catalog":
        for p in points:
            cands.extend(spec.entry.through_heights(spec.params, p[0], p[1]))
        for fn in spec.entry.degenerate_heights(spec.params):
            cands.append(fn)
    return cands


def fb_triviality_check(
    spec: fields.FieldSpec, c: FBCurve, mf: MultiFlow, tol_geom: float = None
) -> str:
    """Decide whether the curve's image sits inside one integral curve.

    Sound but incomplete three-valued check: "trivial" when a single
    stored or on-demand curve covers every sample within tol_geom;
    "nontrivial" when every candidate curve through the endpoints and
    the extremal-time samples misses some sample by more than tol_geom;
    "inconclusive" otherwise.
    """
    if tol_geom is None:
        tol_geom = 3.0 * mf.dist_dense
    if len(c.switch_params) == 0:
        return "trivial"  # a one-direction curve is its own witness
    s = c.samples
    anchor_idx = {0, len(s) - 1, int(np.argmin(s[:, 0])), int(np.argmax(s[:, 0]))}
    anchors = [s[i] for i in sorted(anchor_idx)]
    anchor_fns = _candidate_heights(spec, mf, anchors)

    def worst_gap(height_fn):
        return float(np.max(np.abs(s[:, 1] - height_fn(s[:, 0]))))

    gaps = [worst_gap(fn) for fn in anchor_fns]
    family_gaps = []
    for i in range(len(mf.params)):
        hi = mf.heights[i]
        valid = np.isfinite(hi)
        if valid.sum() < 2:
            continue
        interp = np.interp(s[:, 0], mf.tgrid[valid], hi[valid])
        family_gaps.append(float(np.max(np.abs(s[:, 1] - interp))))
    if min(gaps + family_gaps, default=np.inf) <= tol_geom:
        return "trivial"
    endpoint_fns = _candidate_heights(spec, mf, [s[0], s[-1]])
    if endpoint_fns and all(worst_gap(fn) > tol_geom for fn in endpoint_fns):
        return "nontrivial"
    return "inconclusive"


# ---------------------------------------------------------------------------
# orbit tracing for the curve-network backend


def trace_through(spec: fields.FieldSpec, t_pt: float, w: float, tgrid: np.ndarray):
    """Heights over tgrid of every known integral curve through (t_pt, w).

    Catalog fields enumerate their closed-form branches; other fields
    get a single numeric trace (forward and backward, "stay" branch).
    Samples outside the spatial box are nan.
    """
    lo, hi = spec.box.xlo[0], spec.box.xhi[0]
    out = []
    if spec.kind == "catalog":
        for fn in spec.entry.through_heights(spec.params, t_pt, w):
            h = np.asarray(fn(tgrid), dtype=float)
            out.append(h)
    else:
        k = int(np.argmin(np.abs(tgrid - t_pt)))
        ds = float(tgrid[1] - tgrid[0]) if len(tgrid) > 1 else 1.0
        fwd = flow_map(spec, [w], tgrid[k], tgrid[-1], ds, record=True)[:, 0]
        bwd = flow_map(spec, [w], tgrid[k], tgrid[0], ds, record=True)[:, 0]
        h = np.concatenate([bwd[::-1], fwd[1:]])
        out.append(h)
    cleaned = []
    for h in out:
        h = h.copy()
        h[(h < lo - 1e-12) | (h > hi + 1e-12)] = np.nan
        cleaned.append(h)
    return cleaned


# ---------------------------------------------------------------------------
# forward-backward curve files
#
# header: "# fbcurve ds=<ds> switches=<s1,s2,...>"
# rows:   s x0 x1 .. xn dir   (dir of the interval starting at this sample)


def write_fb_curve(c: FBCurve, path) -> None:
    sw = ",".join(fields._fmt(v) for v in c.switch_params)
    with open(path, "w") as fh:
        fh.write(f"# fbcurve ds={fields._fmt(c.ds)} switches={sw}\n")
        for k, row in enumerate(c.samples):
            d = int(c.profile[min(k, len(c.profile) - 1)]) if len(c.profile) else 0
            cols = [fields._fmt(k * c.ds)] + [fields._fmt(v) for v in row] + [str(d)]
            fh.write(" ".join(cols) + "\n")


def read_fb_curve(path) -> FBCurve:
    with open(path) as fh:
        head = fh.readline().strip()
        if not head.startswith("# fbcurve"):
            raise ValueError("not a forward-backward curve file")
        meta = dict(tok.split("=", 1) for tok in head[2:].split()[1:])
        ds = float(meta["ds"])
        rows = []
        dirs = []
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            rows.append([float(v) for v in parts[1:-1]])
            dirs.append(int(parts[-1]))
        samples = np.asarray(rows)
        profile = np.asarray(dirs[:-1], dtype=int)
        curve = FBCurve(samples, ds, profile)
        declared = meta.get("switches", "")
        if declared:
            got = [float(v) for v in declared.split(",")]
            if not np.allclose(got, curve.switch_params, atol=1e-9):
                raise ValueError("switch list disagrees with the direction column")
        return curve
