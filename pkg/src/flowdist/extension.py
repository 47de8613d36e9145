"""Directional Lipschitz constants on flow tubes and McShane extension.

Lip profiles run on the curve network (exact on analytic families);
the extension runs on the lattice graph at a selected weight, as one
multi-source shortest-path sweep with the sampled values as source
offsets.  Both inherit exact monotonicity from the shared edge set.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from . import flownet, metric
from .errors import DegeneratePair, EmptyDomain, NeedSmallerLambda
from .flow import FBCurve, FlowTube


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Real values on a finite point set, tagged with where it lives."""

    points: np.ndarray  # (m, n+1)
    values: np.ndarray  # (m,)
    provenance: object = None  # FlowTube | MetricGraph | None

    def __post_init__(self):
        object.__setattr__(self, "points", np.atleast_2d(np.asarray(self.points, float)))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if len(self.points) != len(self.values):
            raise ValueError("points and values must have matching lengths")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")


@dataclass(frozen=True)
class LipProfile:
    lambdas: tuple
    lip_values: tuple
    lip0: float
    euclid_lip: float
    extra: dict = dc_field(default_factory=dict)


def branch_indicator(tube: FlowTube, one_params, clearance: float = 0.0) -> SampledFunction:
    """0/1 function on tube samples, constant per carrying curve.

    Samples strictly between the rest set {x1 = 0} and the clearance
    height are dropped; rest-set samples themselves are kept.  The
    clearance keeps the profile's binding pair at the analytic contact
    rather than at a mesh-scale near-miss.
    """
    one = np.atleast_1d(np.asarray(one_params, dtype=float))
    pts = tube.points
    keep = (pts[:, 1] == 0.0) | (np.abs(pts[:, 1]) >= clearance)
    vals = np.isin(tube.point_params, one).astype(float)
    return SampledFunction(pts[keep], vals[keep], provenance=tube)


def coordinate_function(tube: FlowTube) -> SampledFunction:
    """The time coordinate restricted to the tube samples."""
    return SampledFunction(tube.points, tube.points[:, 0].copy(), provenance=tube)


def branch_root_values(points) -> np.ndarray:
    """cbrt(x0 - cbrt(x1)): constant on each cubic-family curve, but only
    1/3-Holder along the rest orbit, where it equals cbrt(x0)."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    return np.cbrt(p[:, 0] - np.cbrt(p[:, 1]))


def _euclid_lip(points, values):
    diff = np.abs(values[:, None] - values[None, :])
    gap = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    off = ~np.eye(len(values), dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(off & (gap > 0.0), diff / gap, 0.0)
    return float(np.max(q))


def lip_profile(phi: SampledFunction, schedule, h: float, dt: float) -> LipProfile:
    """Lip_lambda(phi) along a decreasing schedule, plus Lip_0 and the
    Euclidean constant.

    Distances come from the curve network of the tube's family; Lip_0
    uses the flow-edges-only subgraph (pairs at +inf contribute 0), so
    lip_values >= lip0 exactly on the shared edge set.
    """
    if not isinstance(phi.provenance, FlowTube):
        raise TypeError("lip_profile needs a SampledFunction carried by a FlowTube")
    sched = [float(v) for v in schedule]
    if any(b >= a for a, b in zip(sched, sched[1:])) or not sched:
        raise ValueError("schedule must be nonempty and strictly decreasing")
    if len(phi.points) < 2:
        raise ValueError("need at least two sampled points")
    tube = phi.provenance
    spec = tube.mf.spec

    net = flownet.build_curve_network(spec, h, dt, mf=tube.mf)
    ids, errs = [], []
    for p in phi.points:
        i, e = net.node_at(p)
        ids.append(i)
        errs.append(e)
    if max(errs) > 1e-9:
        # off-family points: add their orbits and resolve them exactly
        net = flownet.build_curve_network(
            spec, h, dt, mf=tube.mf, anchors=[p for p, e in zip(phi.points, errs) if e > 1e-9]
        )
        ids, errs = [], []
        for p in phi.points:
            i, e = net.node_at(p)
            ids.append(i)
            errs.append(e)

    lips = []
    for lam in sched:
        dmat = flownet.network_distance_matrix(net, lam, ids, ids)
        lips.append(metric.lip_constant(phi.values, dmat))

    uniq = sorted(set(ids))
    dist0 = dijkstra(net.fb_csr(), directed=True, indices=uniq)
    row = {i: r for r, i in enumerate(uniq)}
    d0 = np.array([dist0[row[i]][ids] for i in ids])
    lip0 = metric.lip_constant(phi.values, d0)

    return LipProfile(
        lambdas=tuple(sched),
        lip_values=tuple(lips),
        lip0=lip0,
        euclid_lip=_euclid_lip(phi.points, phi.values),
        extra={"max_snap_err": float(max(errs)), "n_points": len(ids)},
    )


def select_lambda_bar(profile: LipProfile, epsilon: float) -> float:
    """Largest scheduled lambda with lip_value <= lip0 + epsilon."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    for lam, lv in zip(profile.lambdas, profile.lip_values):
        if lv <= profile.lip0 + epsilon:
            return lam
    raise NeedSmallerLambda(
        f"no scheduled lambda reaches lip0 + eps = {profile.lip0 + epsilon:.6g}; "
        f"extend the schedule below {profile.lambdas[-1]:.6g}"
    )


def _grid_node_points(g: metric.MetricGraph) -> np.ndarray:
    grids = np.meshgrid(*g.axes, indexing="ij")
    X = np.column_stack([a.ravel() for a in grids])  # (nspace, n)
    nt1 = len(g.times)
    pts = np.empty((nt1 * g.nspace, X.shape[1] + 1))
    pts[:, 0] = np.repeat(g.times, g.nspace)
    pts[:, 1:] = np.tile(X, (nt1, 1))
    return pts


def mcshane_extend(
    phi: SampledFunction, g: metric.MetricGraph, L_ext: float
) -> SampledFunction:
    """Inf-convolution extension phitilde(x) = min_y [phi(y) + L_ext * d(x, y)].

    One label-setting sweep from a virtual source attached to the
    snapped sample nodes with offsets (phi - min phi)/L_ext; the result
    is L_ext-Lipschitz edge-by-edge on the graph, exactly.
    """
    if L_ext <= 0:
        raise ValueError("L_ext must be positive")
    if len(phi.points) == 0:
        raise EmptyDomain("no sampled points to extend")
    seen = {}
    for p, v in zip(phi.points, phi.values):
        i, _ = g.snap_point(p)
        if i in seen and seen[i] != v:
            raise DegeneratePair(
                f"two samples with different values snap to the same node {i}"
            )
        seen[i] = v
    nodes = np.fromiter(seen.keys(), dtype=np.int64)
    vals = np.fromiter(seen.values(), dtype=float)
    vmin = float(vals.min())
    offsets = (vals - vmin) / L_ext

    N = g.n_nodes
    scale = 1.0 / (g.lam * g.vnorm)
    rows = np.concatenate([g.rows, np.full(len(nodes), N, dtype=np.int64)])
    cols = np.concatenate([g.cols, nodes])
    data = np.concatenate([g.flow_cost + g.chord_len * scale, offsets])
    aug = csr_matrix((data, (rows, cols)), shape=(N + 1, N + 1))
    dist = dijkstra(aug, directed=True, indices=N)
    phit = L_ext * dist[:N] + vmin
    return SampledFunction(_grid_node_points(g), phit, provenance=g)


@dataclass(frozen=True)
class ExtensionReport:
    restriction_err: float
    fb_quotient: float
    fb_witness: tuple  # (curve index, sample i, sample j)
    fb_snap_max: float
    euclid_lip: float
    l_ext: float
    lam: float
    slack: float
    passed: bool
    checks: dict

    def to_dict(self) -> dict:
        return {
            "restriction_err": self.restriction_err,
            "fb_quotient": self.fb_quotient,
            "fb_witness": list(self.fb_witness),
            "fb_snap_max": self.fb_snap_max,
            "euclid_lip": self.euclid_lip,
            "l_ext": self.l_ext,
            "lambda": self.lam,
            "slack": self.slack,
            "passed": self.passed,
            "checks": dict(self.checks),
        }


def verify_extension(
    phitilde: SampledFunction,
    phi: SampledFunction,
    fb_samples,
    L_ext: float,
    slack: float = None,
) -> ExtensionReport:
    """Three checks of an extension: restriction, forward-backward
    difference quotients along curves, and the Euclidean Lipschitz
    estimate against the 3 * L_ext / lambda envelope.

    Failures are report entries, never exceptions; the forward-backward
    witness pinpoints the binding curve and sample pair.  Restriction is
    checked at snapped nodes (exact there by construction); off-node
    curve samples are evaluated by bilinear interpolation, exact for
    lattice-aligned curves such as rest orbits, with fb_snap_max
    recording how far samples sat from the nearest node.
    """
    g = phitilde.provenance
    if not isinstance(g, metric.MetricGraph):
        raise TypeError("phitilde must be carried by a MetricGraph")
    if slack is None:
        slack = 2.0 * (g.h + g.dt)
    phit = phitilde.values
    vgrid = phit.reshape(len(g.times), g.nspace)
    axis = g.axes[0]

    def value_interp(pts):
        pts = np.atleast_2d(pts)
        k = np.clip((pts[:, 0] - g.times[0]) / g.dt, 0.0, len(g.times) - 1.0)
        k0 = np.minimum(k.astype(int), len(g.times) - 2)
        f = k - k0
        lo = np.array([np.interp(p[1], axis, vgrid[i]) for p, i in zip(pts, k0)])
        hi = np.array([np.interp(p[1], axis, vgrid[i + 1]) for p, i in zip(pts, k0)])
        return (1.0 - f) * lo + f * hi

    restriction = 0.0
    for p, v in zip(phi.points, phi.values):
        i, _ = g.snap_point(p)
        restriction = max(restriction, abs(phit[i] - v))

    fb_q = 0.0
    fb_witness = (-1, -1, -1)
    fb_snap = 0.0
    for ci, curve in enumerate(fb_samples):
        if not isinstance(curve, FBCurve):
            raise TypeError("fb_samples must contain FBCurve instances")
        vals = value_interp(curve.samples)
        fb_snap = max(fb_snap, max(g.snap_point(p)[1] for p in curve.samples))
        s = np.arange(len(vals)) * curve.ds
        diff = np.abs(vals[:, None] - vals[None, :])
        gap = np.abs(s[:, None] - s[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(gap > 0.0, diff / gap, 0.0)
        k = int(np.argmax(q))
        if q.flat[k] > fb_q:
            fb_q = float(q.flat[k])
            i, j = np.unravel_index(k, q.shape)
            fb_witness = (ci, int(i), int(j))

    rng = np.random.default_rng(20260819)
    m = len(phit)
    take = min(400, m)
    sub = rng.choice(m, size=take, replace=False)
    sub_pts = phitilde.points[sub]
    sub_vals = phit[sub]
    pool_pts = np.vstack([phi.points, sub_pts])
    pool_vals = np.concatenate([phi.values, sub_vals])
    euclid = _euclid_lip(pool_pts, pool_vals)
    euclid_bound = 3.0 * L_ext / g.lam + slack

    checks = {
        "restriction": restriction <= 1e-9,
        "fb_quotient": fb_q <= L_ext + slack,
        "euclid": euclid <= euclid_bound,
    }
    return ExtensionReport(
        restriction_err=restriction,
        fb_quotient=fb_q,
        fb_witness=fb_witness,
        fb_snap_max=fb_snap,
        euclid_lip=euclid,
        l_ext=L_ext,
        lam=g.lam,
        slack=slack,
        passed=all(checks.values()),
        checks=checks,
    )
