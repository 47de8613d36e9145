"""Layered space-time graphs and the flow-adapted distances.

Nodes form a lattice with spatial step h and time step dt.  Flow edges
join each node to the snapped one-step image of the field (cost dt,
both orientations); in-slice edges join lattice neighbors at cost
length/(lambda * vnorm), the mass of a horizontal run at top speed.
Shortest paths are computed with the library label-setting solver
(nonnegative costs, deterministic predecessors), so graph distances are
exact and the triangle inequality holds exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from . import fields
from .errors import DegeneratePair, GraphTooLarge, Unreachable
from .geometry import point_array


@dataclass(frozen=True, eq=False)
class MetricGraph:
    spec: fields.FieldSpec
    h: float
    dt: float
    lam: float
    vnorm: float
    times: np.ndarray  # (nt+1,)
    axes: tuple  # per-dim node coordinates, step h
    rows: np.ndarray
    cols: np.ndarray
    flow_cost: np.ndarray  # dt on flow edges, 0 on in-slice edges
    chord_len: np.ndarray  # 0 on flow edges, length on in-slice edges
    snap_err: float  # worst flow-edge snap displacement

    @property
    def shape(self) -> tuple:
        return tuple(len(ax) for ax in self.axes)

    @property
    def nspace(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_nodes(self) -> int:
        return len(self.times) * self.nspace

    def with_lambda(self, lam: float) -> "MetricGraph":
        """Same node and edge set, new query weight (arrays shared)."""
        _check_lambda(lam)
        return MetricGraph(
            self.spec, self.h, self.dt, lam, self.vnorm, self.times,
            self.axes, self.rows, self.cols, self.flow_cost, self.chord_len,
            self.snap_err,
        )

    def csr(self) -> csr_matrix:
        scale = 1.0 / (self.lam * self.vnorm)
        data = self.flow_cost + self.chord_len * scale
        return csr_matrix(
            (data, (self.rows, self.cols)), shape=(self.n_nodes, self.n_nodes)
        )

    def node_point(self, i: int) -> np.ndarray:
        k, flat = divmod(int(i), self.nspace)
        idx = np.unravel_index(flat, self.shape)
        return np.array(
            [self.times[k]] + [self.axes[d][idx[d]] for d in range(len(self.axes))]
        )

    def snap_point(self, p):
        """Nearest node id and the snap offset."""
        p = point_array(p)
        k = int(np.clip(round((p[0] - self.times[0]) / self.dt), 0, len(self.times) - 1))
        idx = []
        for d, ax in enumerate(self.axes):
            i = int(np.clip(round((p[1 + d] - ax[0]) / self.h), 0, len(ax) - 1))
            idx.append(i)
        node = k * self.nspace + int(np.ravel_multi_index(tuple(idx), self.shape))
        err = float(np.linalg.norm(p - self.node_point(node)))
        return node, err


def _check_lambda(lam: float) -> None:
    if not (0.0 < lam <= 1.0):
        raise ValueError(f"lambda must lie in (0, 1], got {lam}")


def build_metric_graph(
    spec: fields.FieldSpec, h: float, dt: float, lam: float, node_cap: int = 3_000_000
) -> MetricGraph:
    """Deterministic layered graph over the field's box.

    Flow-edge targets are the one-step explicit-midpoint images snapped
    to the nearest lattice node (displacement recorded as snap_err);
    steps whose image leaves the spatial box are omitted.  In-slice
    edges join the 2n axis neighbors and the 2n(n-1) diagonal neighbors.
    """
    _check_lambda(lam)
    if h <= 0 or dt <= 0:
        raise ValueError("need h > 0 and dt > 0")
    box = spec.box
    n = spec.n
    nt = int(round(box.T / dt))
    times = box.t0 + np.arange(nt + 1) * dt
    axes = tuple(
        box.xlo[d] + np.arange(int(round((box.xhi[d] - box.xlo[d]) / h)) + 1) * h
        for d in range(n)
    )
    shape = tuple(len(ax) for ax in axes)
    nspace = int(np.prod(shape))
    n_nodes = (nt + 1) * nspace
    if n_nodes > node_cap:
        raise GraphTooLarge(f"{n_nodes} nodes exceed the cap {node_cap}")
    vnorm = fields.sup_norm(spec)

    grids = np.meshgrid(*axes, indexing="ij")
    X = np.column_stack([g.ravel() for g in grids])  # (nspace, n)
    lo = np.asarray(box.xlo)
    hi = np.asarray(box.xhi)

    rows_l, cols_l, flow_l, chord_l = [], [], [], []

    # flow edges, one vectorized batch per slice
    snap_err = 0.0
    flat = np.arange(nspace)
    for k in range(nt):
        t = times[k]
        v0 = fields.raw_vhat(spec, np.full(nspace, t), X)
        xm = X + 0.5 * dt * v0
        vm = fields.raw_vhat(spec, np.full(nspace, t + 0.5 * dt), xm)
        y = X + dt * vm
        ok = np.all((y >= lo - 1e-12) & (y <= hi + 1e-12), axis=1)
        if not np.any(ok):
            continue
        idx = [
            np.clip(np.round((y[ok, d] - axes[d][0]) / h).astype(int), 0, shape[d] - 1)
            for d in range(n)
        ]
        dst_flat = np.ravel_multi_index(tuple(idx), shape)
        snapped = np.column_stack([axes[d][idx[d]] for d in range(n)])
        disp = np.linalg.norm(y[ok] - snapped, axis=1)
        if disp.size:
            snap_err = max(snap_err, float(disp.max()))
        src = k * nspace + flat[ok]
        dst = (k + 1) * nspace + dst_flat
        rows_l += [src, dst]
        cols_l += [dst, src]
        flow_l += [np.full(src.size, dt), np.full(src.size, dt)]
        chord_l += [np.zeros(src.size), np.zeros(src.size)]

    # in-slice edges: axis neighbors (length h) and diagonals (length h*sqrt(2))
    def add_slice_edges(offsets, length):
        idx_grids = np.meshgrid(*[np.arange(m) for m in shape], indexing="ij")
        base = np.column_stack([g.ravel() for g in idx_grids])
        for off in offsets:
            nb = base + np.asarray(off)
            ok = np.all((nb >= 0) & (nb < np.asarray(shape)), axis=1)
            a = np.ravel_multi_index(tuple(base[ok].T), shape)
            b = np.ravel_multi_index(tuple(nb[ok].T), shape)
            for k in range(nt + 1):
                s = k * nspace
                rows_l.append(s + a)
                cols_l.append(s + b)
                flow_l.append(np.zeros(a.size))
                chord_l.append(np.full(a.size, length))

    axis_offsets = []
    for d in range(n):
        off = np.zeros(n, dtype=int)
        off[d] = 1
        axis_offsets += [off.copy(), -off]
    add_slice_edges(axis_offsets, h)
    if n >= 2:
        diag_offsets = []
        for d1, d2 in itertools.combinations(range(n), 2):
            for s1, s2 in itertools.product((1, -1), repeat=2):
                off = np.zeros(n, dtype=int)
                off[d1], off[d2] = s1, s2
                diag_offsets.append(off)
        add_slice_edges(diag_offsets, h * np.sqrt(2.0))

    rows = np.concatenate(rows_l).astype(np.int64)
    cols = np.concatenate(cols_l).astype(np.int64)
    return MetricGraph(
        spec=spec, h=h, dt=dt, lam=lam, vnorm=vnorm, times=times, axes=axes,
        rows=rows, cols=cols,
        flow_cost=np.concatenate(flow_l),
        chord_len=np.concatenate(chord_l),
        snap_err=snap_err,
    )


@dataclass(frozen=True)
class DistanceResult:
    """A distance value with its witness and discretization stamps."""

    value: float
    lam: float
    h: float
    dt: float
    snap_err: float
    status: str = "ok"
    path: np.ndarray = None  # (m, n+1) witness nodes, single-pair queries only
    edge_kinds: np.ndarray = None  # (m-1,) +1/-1 flow step, 0 horizontal
    extra: dict = dc_field(default_factory=dict)


def _witness(pred, src, dst):
    chain = [dst]
    while chain[-1] != src:
        p = pred[chain[-1]]
        if p < 0:
            return None
        chain.append(int(p))
    chain.reverse()
    return chain


def distance_lambda(g: MetricGraph, x, y) -> DistanceResult:
    """Shortest-path distance between the snapped endpoints.

    Symmetric in x and y; satisfies the triangle inequality exactly on
    the graph; never below |y0 - x0| (flow edges advance time dt at
    cost dt, in-slice edges cost extra).
    """
    sx, ex = g.snap_point(x)
    sy, ey = g.snap_point(y)
    dist, pred = dijkstra(
        g.csr(), directed=True, indices=sx, return_predecessors=True
    )
    value = float(dist[sy])
    if not np.isfinite(value):
        raise Unreachable("graph is disconnected between the snapped endpoints")
    chain = _witness(pred, sx, sy)
    pts = np.array([g.node_point(i) for i in chain])
    kinds = np.sign(np.round(np.diff(pts[:, 0]) / g.dt)).astype(int)
    cost = 0.0
    for a, b, kind in zip(pts, pts[1:], kinds):
        if kind != 0:
            cost += g.dt
        else:
            cost += float(np.linalg.norm(b[1:] - a[1:])) / (g.lam * g.vnorm)
    return DistanceResult(
        value=value,
        lam=g.lam,
        h=g.h,
        dt=g.dt,
        snap_err=max(ex, ey, g.snap_err),
        path=pts,
        edge_kinds=kinds,
        extra={"query_snap": (ex, ey), "edge_snap": g.snap_err, "path_cost": cost},
    )


def distance_matrix(g: MetricGraph, xs, ys) -> np.ndarray:
    """Values only, all sources in one library sweep (no witnesses)."""
    src_ids = []
    src_err = []
    for x in xs:
        i, e = g.snap_point(x)
        src_ids.append(i)
        src_err.append(e)
    dst_ids = [g.snap_point(y)[0] for y in ys]
    uniq = sorted(set(src_ids))
    dist = dijkstra(g.csr(), directed=True, indices=uniq)
    row_of = {i: r for r, i in enumerate(uniq)}
    out = np.empty((len(src_ids), len(dst_ids)))
    for a, i in enumerate(src_ids):
        out[a] = dist[row_of[i]][dst_ids]
    return out


def lip_constant(phi_values, distances) -> float:
    """Best Lipschitz constant of phi on the sampled point set.

    distances is the all-pairs matrix; pairs at +inf contribute 0.
    Raises DegeneratePair when two points at distance 0 carry different
    values (the constant is the +inf sentinel in that case).
    """
    phi = np.asarray(phi_values, dtype=float)
    d = np.asarray(distances, dtype=float)
    m = len(phi)
    if m < 2:
        raise ValueError("need at least two sampled points")
    if d.shape != (m, m):
        raise ValueError("distance matrix shape does not match the values")
    diff = np.abs(phi[:, None] - phi[None, :])
    off = ~np.eye(m, dtype=bool)
    degenerate = off & (d == 0.0) & (diff > 0.0)
    if np.any(degenerate):
        i, j = np.argwhere(degenerate)[0]
        raise DegeneratePair(
            f"points {i} and {j} at distance 0 carry different values"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(off & np.isfinite(d) & (d > 0.0), diff / d, 0.0)
    return float(np.max(q))


def lip_constant_with_pair(phi_values, distances):
    """lip_constant plus the index pair realizing it."""
    phi = np.asarray(phi_values, dtype=float)
    d = np.asarray(distances, dtype=float)
    value = lip_constant(phi, d)
    diff = np.abs(phi[:, None] - phi[None, :])
    off = ~np.eye(len(phi), dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(off & np.isfinite(d) & (d > 0.0), diff / d, 0.0)
    i, j = np.unravel_index(int(np.argmax(q)), q.shape)
    return value, (int(i), int(j))


# ---------------------------------------------------------------------------
# degenerate-limit distances (computed on the analytic curve network)


def distance_zero(spec, mf, x, y, lambda_schedule, h, dt, **kwargs) -> DistanceResult:
    """Monotone limit of d_lambda along a decreasing schedule.

    Runs on the curve network spanned by the family, the orbits through
    the endpoints, and the rest orbits of a degenerate field.  Status is
    "finite" when the tail increment drops below tol_limit, "divergent"
    when values blow up (sustained growth ratios or the cap); otherwise
    ScheduleTooShort is raised.  The finite limit is cross-checked
    against fb_distance (reported in extra["fb"]).
    """
    from .flownet import network_distance_zero

    return network_distance_zero(spec, mf, x, y, lambda_schedule, h, dt, **kwargs)


def fb_distance(spec, x, y, h, dt, **kwargs) -> DistanceResult:
    """Minimal duration of a forward-backward curve joining x and y.

    Shortest path over flow edges only (both orientations, cost dt);
    +inf sentinel when no forward-backward curve exists.  The witness
    converts to an FBCurve via flownet.witness_to_fb.
    """
    from .flownet import network_fb_distance

    return network_fb_distance(spec, x, y, h, dt, **kwargs)
