"""Shortest paths on networks of sampled integral curves (1-D fields).

The lattice graph in metric.py cannot follow degenerate fields near
their rest set: a snapped one-step image stalls once the field moves
less than half a spatial step.  This backend instead samples known
integral curves (a family, the orbits through the query points, and the
rest orbits of a degenerate field) on a shared time grid.  Along-curve
edges cost dt in both orientations; same-slice chords between
height-adjacent nodes cost gap/(lambda * vnorm).  Nodes merge on exact
float equality: the catalog's closed forms hit contact points (curves
meeting the rest set) bit-exactly, so no merge radius is needed.  A
positive merge_tol quantizes heights for fields without exact contacts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from . import fields, flow
from .errors import ScheduleTooShort, Unreachable
from .geometry import point_array
from .metric import DistanceResult


@dataclass(frozen=True, eq=False)
class CurveNetwork:
    spec: fields.FieldSpec
    h: float
    dt: float
    vnorm: float
    tgrid: np.ndarray  # (K+1,)
    node_k: np.ndarray  # (N,) slice index
    node_x: np.ndarray  # (N,) height
    rows: np.ndarray
    cols: np.ndarray
    flow_cost: np.ndarray
    chord_len: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.node_x)

    def node_point(self, i: int) -> np.ndarray:
        return np.array([self.tgrid[self.node_k[i]], self.node_x[i]])

    def csr(self, lam: float) -> csr_matrix:
        data = self.flow_cost + self.chord_len * (1.0 / (lam * self.vnorm))
        return csr_matrix(
            (data, (self.rows, self.cols)), shape=(self.n_nodes, self.n_nodes)
        )

    def fb_csr(self) -> csr_matrix:
        keep = self.chord_len == 0.0
        return csr_matrix(
            (self.flow_cost[keep], (self.rows[keep], self.cols[keep])),
            shape=(self.n_nodes, self.n_nodes),
        )

    def node_at(self, p):
        """Nearest node in the slice closest to p; returns (id, snap_err)."""
        p = point_array(p)
        k = int(np.clip(round((p[0] - self.tgrid[0]) / self.dt), 0, len(self.tgrid) - 1))
        in_slice = np.nonzero(self.node_k == k)[0]
        if in_slice.size == 0:
            raise Unreachable(f"no network nodes in time slice {k}")
        j = in_slice[int(np.argmin(np.abs(self.node_x[in_slice] - p[1])))]
        err = math.hypot(p[0] - self.tgrid[k], p[1] - self.node_x[j])
        return int(j), err


def _family_heights(spec, mf, tgrid):
    """Family curves resampled on tgrid (closed form when available)."""
    if mf is None:
        return []
    srel = tgrid - spec.box.t0
    out = []
    if spec.kind == "catalog" and mf.kind == "analytic":
        for a in mf.params:
            out.append(np.asarray(spec.entry.multiflow_height(spec.params, a, srel), float))
    else:
        for i in range(len(mf.params)):
            valid = np.isfinite(mf.heights[i])
            if valid.sum() < 2:
                continue
            t_lo, t_hi = mf.tgrid[valid][0], mf.tgrid[valid][-1]
            hh = np.interp(tgrid, mf.tgrid[valid], mf.heights[i][valid])
            hh[(tgrid < t_lo - 1e-12) | (tgrid > t_hi + 1e-12)] = np.nan
            out.append(hh)
    return out


def build_curve_network(
    spec: fields.FieldSpec,
    h: float,
    dt: float,
    mf=None,
    anchors=(),
    extra_orbits=(),
    merge_tol: float = 0.0,
) -> CurveNetwork:
    """Assemble the orbit network; see the module docstring.

    anchors are space-time points whose known orbits (all closed-form
    branches for catalog fields) are traced and whose exact heights are
    pinned as nodes in their snapped slice.
    """
    if spec.n != 1:
        raise NotImplementedError("curve networks are 1-D only")
    box = spec.box
    K = int(round(box.T / dt))
    tgrid = box.t0 + np.arange(K + 1) * dt
    lo, hi = box.xlo[0], box.xhi[0]

    orbits = list(_family_heights(spec, mf, tgrid))
    if spec.kind == "catalog":
        for fn in spec.entry.degenerate_heights(spec.params):
            orbits.append(np.asarray(fn(tgrid), dtype=float))
    for p in anchors:
        p = point_array(p)
        k = int(np.clip(round((p[0] - tgrid[0]) / dt), 0, K))
        for hh in flow.trace_through(spec, tgrid[k], p[1], tgrid):
            hh = np.asarray(hh, dtype=float).copy()
            # pin the anchor height exactly (closed forms round-trip
            # through roots and powers, off by an ulp)
            if np.isfinite(hh[k]) and abs(hh[k] - p[1]) < 1e-6:
                hh[k] = p[1]
            orbits.append(hh)
    for hh in extra_orbits:
        orbits.append(np.asarray(hh, dtype=float).copy())

    # mask samples outside the box; a curve stays dead once it leaves
    masked = []
    for hh in orbits:
        bad = ~np.isfinite(hh) | (hh < lo - 1e-12) | (hh > hi + 1e-12)
        alive = hh.copy()
        if bad.any():
            # keep each in-box stretch; curves may exit and re-enter
            alive[:] = np.nan
            for a, b in _valid_runs(~bad):
                alive[a:b] = hh[a:b]
        masked.append(alive)

    ids: dict = {}
    node_k: list = []
    node_x: list = []

    def nid(k, x):
        key = (k, round(x / merge_tol) if merge_tol > 0.0 else x)
        i = ids.get(key)
        if i is None:
            i = len(node_x)
            ids[key] = i
            node_k.append(k)
            node_x.append(x)
        return i

    along = set()
    for hh in masked:
        prev = None
        for k in range(K + 1):
            if not np.isfinite(hh[k]):
                prev = None
                continue
            cur = nid(k, float(hh[k]))
            if prev is not None and prev != cur:
                along.add((prev, cur))
                along.add((cur, prev))
            prev = cur

    node_k_arr = np.asarray(node_k, dtype=np.int64)
    node_x_arr = np.asarray(node_x, dtype=float)

    rows_l, cols_l, flow_l, chord_l = [], [], [], []
    if along:
        e = np.asarray(sorted(along), dtype=np.int64)
        rows_l.append(e[:, 0])
        cols_l.append(e[:, 1])
        flow_l.append(np.full(len(e), dt))
        chord_l.append(np.zeros(len(e)))

    for k in range(K + 1):
        sl = np.nonzero(node_k_arr == k)[0]
        if sl.size < 2:
            continue
        order = sl[np.argsort(node_x_arr[sl], kind="stable")]
        xs = node_x_arr[order]
        gaps = np.diff(xs)
        keep = gaps > 0.0
        a = order[:-1][keep]
        b = order[1:][keep]
        g = gaps[keep]
        rows_l += [a, b]
        cols_l += [b, a]
        flow_l += [np.zeros(len(a)), np.zeros(len(a))]
        chord_l += [g, g]

    return CurveNetwork(
        spec=spec,
        h=h,
        dt=dt,
        vnorm=fields.sup_norm(spec),
        tgrid=tgrid,
        node_k=node_k_arr,
        node_x=node_x_arr,
        rows=np.concatenate(rows_l) if rows_l else np.zeros(0, dtype=np.int64),
        cols=np.concatenate(cols_l) if cols_l else np.zeros(0, dtype=np.int64),
        flow_cost=np.concatenate(flow_l) if flow_l else np.zeros(0),
        chord_len=np.concatenate(chord_l) if chord_l else np.zeros(0),
    )


def _valid_runs(good: np.ndarray):
    """[start, stop) index runs of consecutive True entries."""
    runs = []
    start = None
    for i, g in enumerate(good):
        if g and start is None:
            start = i
        elif not g and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(good)))
    return runs


def _single_pair(net: CurveNetwork, matrix, x, y, lam, status="ok"):
    src, ex = net.node_at(x)
    dst, ey = net.node_at(y)
    dist, pred = dijkstra(matrix, directed=True, indices=src, return_predecessors=True)
    value = float(dist[dst])
    path = None
    kinds = None
    if np.isfinite(value):
        chain = [dst]
        while chain[-1] != src:
            chain.append(int(pred[chain[-1]]))
        chain.reverse()
        path = np.array([net.node_point(i) for i in chain])
        kinds = np.sign(np.round(np.diff(path[:, 0]) / net.dt)).astype(int)
    return value, max(ex, ey), path, kinds


def network_distance(net: CurveNetwork, x, y, lam: float) -> DistanceResult:
    """d_lambda between x and y on the curve network."""
    value, snap, path, kinds = _single_pair(net, net.csr(lam), x, y, lam)
    if not np.isfinite(value):
        raise Unreachable("curve network is disconnected between the endpoints")
    return DistanceResult(
        value=value, lam=lam, h=net.h, dt=net.dt, snap_err=snap,
        path=path, edge_kinds=kinds,
    )


def network_distance_matrix(net: CurveNetwork, lam: float, src_ids, dst_ids):
    uniq = sorted(set(int(i) for i in src_ids))
    dist = dijkstra(net.csr(lam), directed=True, indices=uniq)
    row_of = {i: r for r, i in enumerate(uniq)}
    out = np.empty((len(src_ids), len(dst_ids)))
    for a, i in enumerate(src_ids):
        out[a] = dist[row_of[int(i)]][list(map(int, dst_ids))]
    return out


def network_fb_distance(
    spec, x, y, h, dt, mf=None, merge_tol=0.0, net=None
) -> DistanceResult:
    """Minimal forward-backward duration on the curve network.

    Flow edges only; +inf (status "inf") when no forward-backward curve
    joins the points, which is the degenerate-limit sentinel.
    """
    if net is None:
        net = build_curve_network(spec, h, dt, mf=mf, anchors=(x, y), merge_tol=merge_tol)
    value, snap, path, kinds = _single_pair(net, net.fb_csr(), x, y, lam=1.0)
    status = "finite" if np.isfinite(value) else "inf"
    return DistanceResult(
        value=value if np.isfinite(value) else math.inf,
        lam=0.0, h=h, dt=dt, snap_err=snap, status=status,
        path=path, edge_kinds=kinds,
    )


def witness_to_fb(result: DistanceResult) -> "flow.FBCurve":
    """Convert a forward-backward witness into an FBCurve for validation."""
    if result.path is None or result.edge_kinds is None:
        raise ValueError("result carries no witness path")
    if np.any(result.edge_kinds == 0):
        raise ValueError("witness contains horizontal arcs; not forward-backward")
    return flow.FBCurve(
        samples=result.path.copy(),
        ds=result.dt,
        profile=result.edge_kinds.astype(int),
    )


def network_distance_zero(
    spec,
    mf,
    x,
    y,
    lambda_schedule,
    h,
    dt,
    tol_limit: float = None,
    cap: float = None,
    merge_tol: float = 0.0,
) -> DistanceResult:
    """Classify the monotone d_lambda limit along a decreasing schedule.

    finite: the tail increment falls below tol_limit (default 2(h+dt)).
    divergent: the value passes the cap, or the last three growth
    ratios all exceed 1.6 with nondecreasing increments (the cap alone
    cannot catch chord-dominated blow-up: those values scale like 1/λ
    exactly as the cap does).  Anything else raises ScheduleTooShort.
    """
    sched = [float(v) for v in lambda_schedule]
    if len(sched) < 2:
        raise ScheduleTooShort("need at least two schedule values")
    if any(b >= a for a, b in zip(sched, sched[1:])):
        raise ValueError("schedule must be strictly decreasing")
    if not (0.0 < sched[-1] and sched[0] <= 1.0):
        raise ValueError("schedule must lie in (0, 1]")
    if tol_limit is None:
        tol_limit = 2.0 * (h + dt)
    if cap is None:
        cap = 100.0 * spec.box.T / sched[-1]

    net = build_curve_network(spec, h, dt, mf=mf, anchors=(x, y), merge_tol=merge_tol)
    src, ex = net.node_at(x)
    dst, ey = net.node_at(y)
    values = []
    for lam in sched:
        dist = dijkstra(net.csr(lam), directed=True, indices=src)
        values.append(float(dist[dst]))
    v = np.asarray(values)
    fb = network_fb_distance(spec, x, y, h, dt, mf=mf, merge_tol=merge_tol, net=net)

    extra = {
        "lambdas": sched,
        "values": values,
        "tol_limit": tol_limit,
        "cap": cap,
        "fb": fb.value,
    }
    snap = max(ex, ey)
    if not np.all(np.isfinite(v)):
        return DistanceResult(
            value=math.inf, lam=sched[-1], h=h, dt=dt, snap_err=snap,
            status="divergent", extra=extra,
        )
    incs = np.diff(v)
    if v[-1] == 0.0 or incs[-1] <= tol_limit:
        return DistanceResult(
            value=float(v[-1]), lam=sched[-1], h=h, dt=dt, snap_err=snap,
            status="finite", extra=extra,
        )
    blowing = False
    if v[-1] > cap:
        blowing = True
    elif len(v) >= 4 and np.all(v[:-1] > 0.0):
        ratios = v[1:] / v[:-1]
        growing = incs[-1] >= incs[-2] >= incs[-3] * (1.0 - 1e-12)
        blowing = bool(np.all(ratios[-3:] >= 1.6) and growing)
    if blowing:
        return DistanceResult(
            value=math.inf, lam=sched[-1], h=h, dt=dt, snap_err=snap,
            status="divergent", extra=extra,
        )
    raise ScheduleTooShort(
        f"tail increment {incs[-1]:.3g} above tol_limit {tol_limit:.3g} "
        f"without a divergence signature; extend the schedule (values {values})"
    )
