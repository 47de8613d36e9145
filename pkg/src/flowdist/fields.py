"""Vector fields v = (1, vhat) on a space-time box.

Fields come from a small analytic catalog or from a sampled grid file.
Every evaluation returns a vector whose first component is exactly 1.
The catalog is 1-D in space; each entry also carries the closed-form
data the other modules need: integral-curve families, the curves through
a given point, the spatial derivative magnitude, and the divergence.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import NoModulus, NonFinite, OutOfDomain
from .geometry import DEFAULT_BOX, Box, SpaceTimePoint, point_array

_THIRD = 1.0 / 3.0


# ---------------------------------------------------------------------------
# catalog closed forms (n = 1)


def _sgn(x):
    return np.sign(x)


def _const_vhat(params, x):
    return np.full_like(np.asarray(x, dtype=float), params[0])


def _shear_height(params, a, s):
    return a * np.exp(s)


def _cubic_vhat(params, x):
    return 3.0 * np.cbrt(np.asarray(x, dtype=float) ** 2)


def _cubic_dv(params, x):
    # |d/dx 3|x|^(2/3)| = 2|x|^(-1/3); unbounded at the axis
    ax = np.abs(np.asarray(x, dtype=float))
    with np.errstate(divide="ignore"):
        return 2.0 / np.cbrt(ax)


def _lens_vhat(params, x):
    x = np.asarray(x, dtype=float)
    return -3.0 * _sgn(x) * np.cbrt(x**2)


def _holder_vhat(params, x):
    x = np.asarray(x, dtype=float)
    return np.abs(x) ** params[0]


def _holder_dv(params, x):
    a = params[0]
    ax = np.abs(np.asarray(x, dtype=float))
    with np.errstate(divide="ignore"):
        return a * ax ** (a - 1.0)


def _holder_height(params, a, s):
    # closed form for xdot = |x|^alpha with the "stay at 0" selection
    al = params[0]
    q = 1.0 - al
    s = np.asarray(s, dtype=float)
    if a > 0:
        return (a**q + q * s) ** (1.0 / q)
    if a < 0:
        base = np.maximum((-a) ** q - q * s, 0.0)
        return -(base ** (1.0 / q))
    return np.zeros_like(s)


def _zeros(s):
    return np.zeros_like(np.asarray(s, dtype=float))


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    nparams: int
    formula: str
    param_doc: str
    vhat: callable
    dvhat_mag: callable
    divergence: callable
    multiflow_height: callable
    through_heights: callable
    degenerate: bool  # True if vhat vanishes on the axis {x1 = 0}
    validate: callable = None

    def degenerate_heights(self, params):
        return [_zeros] if self.degenerate else []


def _constant_through(params, t0, w):
    c = params[0]
    return [lambda s, w=w, t0=t0, c=c: w + c * (np.asarray(s, dtype=float) - t0)]


def _shear_through(params, t0, w):
    return [lambda s, w=w, t0=t0: w * np.exp(np.asarray(s, dtype=float) - t0)]


def _cubic_through(params, t0, w):
    shift = np.cbrt(w) - t0
    out = [lambda s, shift=shift: (np.asarray(s, dtype=float) + shift) ** 3]
    if w == 0.0:
        out.append(_zeros)
    return out


def _lens_leg(vertex, sign):
    def h(s, vertex=vertex, sign=sign):
        return sign * np.maximum(vertex - np.asarray(s, dtype=float), 0.0) ** 3

    return h


def _lens_through(params, t0, w):
    if w != 0.0:
        vertex = t0 + np.cbrt(abs(w))
        return [_lens_leg(vertex, _sgn(w))]
    # on the axis: the axis itself plus the two legs arriving at (t0, 0)
    return [_zeros, _lens_leg(t0, 1.0), _lens_leg(t0, -1.0)]


def _lens_height(params, a, s):
    if a == 0.0:
        return _zeros(s)
    return _sgn(a) * np.maximum(abs(a) - np.asarray(s, dtype=float), 0.0) ** 3


def _holder_through(params, t0, w):
    al = params[0]
    q = 1.0 - al

    def h(s, w=w, t0=t0, al=al, q=q):
        u = np.asarray(s, dtype=float) - t0
        if w > 0:
            return (w**q + q * u) ** (1.0 / q)
        if w < 0:
            base = np.maximum((-w) ** q - q * u, 0.0)
            return -(base ** (1.0 / q))
        return np.zeros_like(u)

    return [h]


def _holder_validate(params):
    if not (0.0 < params[0] < 1.0):
        raise ValueError("holder exponent must lie in (0, 1)")


CATALOG = {
    "constant": CatalogEntry(
        name="constant",
        nparams=1,
        formula="v = (1, c)",
        param_doc="c: the constant spatial velocity",
        vhat=_const_vhat,
        dvhat_mag=lambda p, x: np.zeros_like(np.asarray(x, dtype=float)),
        divergence=lambda p, x: np.zeros_like(np.asarray(x, dtype=float)),
        multiflow_height=lambda p, a, s: a + p[0] * np.asarray(s, dtype=float),
        through_heights=_constant_through,
        degenerate=False,
    ),
    "shear": CatalogEntry(
        name="shear",
        nparams=0,
        formula="v = (1, x1)",
        param_doc="",
        vhat=lambda p, x: np.asarray(x, dtype=float).copy(),
        dvhat_mag=lambda p, x: np.ones_like(np.asarray(x, dtype=float)),
        divergence=lambda p, x: np.ones_like(np.asarray(x, dtype=float)),
        multiflow_height=lambda p, a, s: _shear_height(p, a, s),
        through_heights=_shear_through,
        degenerate=False,
    ),
    "cubic": CatalogEntry(
        name="cubic",
        nparams=0,
        formula="v = (1, 3|x1|^(2/3))",
        param_doc="",
        vhat=_cubic_vhat,
        dvhat_mag=_cubic_dv,
        divergence=lambda p, x: _sgn(np.asarray(x, dtype=float)) * _cubic_dv(p, x),
        multiflow_height=lambda p, a, s: (np.asarray(s, dtype=float) + a) ** 3,
        through_heights=_cubic_through,
        degenerate=True,
    ),
    "lens": CatalogEntry(
        name="lens",
        nparams=0,
        formula="v = (1, -3*sign(x1)|x1|^(2/3))",
        param_doc="",
        vhat=_lens_vhat,
        dvhat_mag=_cubic_dv,
        divergence=lambda p, x: -_cubic_dv(p, x),
        multiflow_height=_lens_height,
        through_heights=_lens_through,
        degenerate=True,
    ),
    "holder": CatalogEntry(
        name="holder",
        nparams=1,
        formula="v = (1, |x1|^alpha)",
        param_doc="alpha: Holder exponent in (0, 1)",
        vhat=_holder_vhat,
        dvhat_mag=_holder_dv,
        divergence=lambda p, x: _sgn(np.asarray(x, dtype=float)) * _holder_dv(p, x),
        multiflow_height=_holder_height,
        through_heights=_holder_through,
        degenerate=True,
        validate=_holder_validate,
    ),
}


# ---------------------------------------------------------------------------
# sampled grids


@dataclass(frozen=True, eq=False)
class SampledGrid:
    """Gridded vhat samples: multilinear in space, piecewise-constant in time."""

    box: Box
    counts: tuple
    nt: int
    values: np.ndarray  # shape (nt, *counts, n)

    @property
    def n(self) -> int:
        return self.box.n

    def axes(self):
        return [
            np.linspace(a, b, c)
            for a, b, c in zip(self.box.xlo, self.box.xhi, self.counts)
        ]

    def slice_times(self) -> np.ndarray:
        if self.nt == 1:
            return np.array([self.box.t0])
        return np.linspace(self.box.t0, self.box.t1, self.nt)

    def slice_index(self, t):
        # value on [t_k, t_{k+1}); the last slice extends to t1
        t = np.asarray(t, dtype=float)
        if self.nt == 1:
            return np.zeros(t.shape, dtype=int)
        step = self.box.T / (self.nt - 1)
        k = np.floor((t - self.box.t0) / step).astype(int)
        return np.clip(k, 0, self.nt - 1)

    def vhat_at(self, t, xhat) -> np.ndarray:
        """Interpolated vhat at times t (...,) and positions xhat (..., n)."""
        t = np.asarray(t, dtype=float)
        xhat = np.asarray(xhat, dtype=float)
        ks = self.slice_index(t)
        out = np.empty(xhat.shape, dtype=float)
        axes = self.axes()
        flat_k = ks.reshape(-1)
        flat_x = xhat.reshape(-1, self.n)
        flat_out = out.reshape(-1, self.n)
        for k in np.unique(flat_k):
            sel = flat_k == k
            if self.n == 1:
                for c in range(self.n):
                    flat_out[sel, c] = np.interp(
                        flat_x[sel, 0], axes[0], self.values[k, :, c]
                    )
            else:
                from scipy.interpolate import RegularGridInterpolator

                for c in range(self.n):
                    rgi = RegularGridInterpolator(
                        axes, self.values[k, ..., c], method="linear"
                    )
                    flat_out[sel, c] = rgi(flat_x[sel])
        return out


@dataclass(frozen=True)
class FieldSpec:
    """A vector field: catalog entry + parameters, or a sampled grid."""

    kind: str  # "catalog" | "sampled"
    name: str
    params: tuple
    box: Box
    sup_norm_hint: float
    grid: SampledGrid = dc_field(default=None, compare=False, repr=False)

    @property
    def n(self) -> int:
        return self.box.n

    @property
    def entry(self) -> CatalogEntry:
        return CATALOG[self.name]

    def describe(self) -> str:
        if self.kind == "catalog":
            extra = f" params={list(self.params)}" if self.params else ""
            return f"{self.name}: {self.entry.formula}{extra}"
        return f"sampled grid {self.name} ({self.nt_counts()})"

    def nt_counts(self) -> str:
        g = self.grid
        return f"nt={g.nt}, nx={'x'.join(str(c) for c in g.counts)}"


def catalog_field(name: str, *params, box: Box = None) -> FieldSpec:
    """Build a FieldSpec for a catalog entry."""
    if name not in CATALOG:
        raise ValueError(f"unknown catalog field {name!r}; have {sorted(CATALOG)}")
    entry = CATALOG[name]
    params = tuple(float(p) for p in params)
    if len(params) != entry.nparams:
        raise ValueError(f"{name} takes {entry.nparams} parameter(s), got {len(params)}")
    if entry.validate is not None:
        entry.validate(params)
    box = box or DEFAULT_BOX
    if box.n != 1:
        raise ValueError("catalog fields are 1-D in space")
    spec = FieldSpec("catalog", name, params, box, 1.0)
    hint = sup_norm(spec, 513)
    return FieldSpec("catalog", name, params, box, hint)


def sampled_field(grid: SampledGrid) -> FieldSpec:
    spec = FieldSpec("sampled", "sampled", (), grid.box, 1.0, grid=grid)
    finite = np.isfinite(grid.values)
    hint = 1.0
    if finite.any():
        vh2 = np.where(finite, grid.values, 0.0) ** 2
        hint = float(np.sqrt(1.0 + vh2.sum(axis=-1).max()))
    return FieldSpec("sampled", "sampled", (), grid.box, hint, grid=grid)


def catalog_table():
    """All catalog entries with formulas, for the CLI listing."""
    rows = []
    for name in sorted(CATALOG):
        e = CATALOG[name]
        rows.append({"name": name, "formula": e.formula, "params": e.param_doc})
    return rows


# ---------------------------------------------------------------------------
# evaluation


def raw_vhat(spec: FieldSpec, t, xhat) -> np.ndarray:
    """vhat without the domain check (catalog formulas are total).

    t has shape (...,), xhat has shape (..., n); result matches xhat.
    Sampled grids clamp queries onto the grid hull.
    """
    xhat = np.asarray(xhat, dtype=float)
    if spec.kind == "catalog":
        return spec.entry.vhat(spec.params, xhat[..., 0])[..., None]
    lo = np.asarray(spec.box.xlo)
    hi = np.asarray(spec.box.xhi)
    return spec.grid.vhat_at(t, np.clip(xhat, lo, hi))


def eval_field(spec: FieldSpec, p) -> np.ndarray:
    """Evaluate v = (1, vhat) at p (a SpaceTimePoint or array (..., n+1))."""
    pts = p.as_array() if isinstance(p, SpaceTimePoint) else np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != spec.n + 1:
        raise ValueError(f"points must have {spec.n + 1} components")
    inside = spec.box.contains(pts)
    if not np.all(inside):
        bad = pts[~inside][0]
        raise OutOfDomain(f"point {bad.tolist()} outside box {spec.box.as_dict()}")
    vh = raw_vhat(spec, pts[..., 0], pts[..., 1:])
    if not np.all(np.isfinite(vh)):
        raise NonFinite("field evaluation hit non-finite samples")
    out = np.concatenate([np.ones(pts.shape[:-1] + (1,)), vh], axis=-1)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# sup norm and continuity modulus


def _space_lattice(spec: FieldSpec, density: int):
    axes = [np.linspace(a, b, density) for a, b in zip(spec.box.xlo, spec.box.xhi)]
    if spec.n == 1:
        return axes[0][:, None]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack(grids, axis=-1).reshape(-1, spec.n)


def _eval_times(spec: FieldSpec) -> np.ndarray:
    if spec.kind == "sampled" and spec.grid.nt > 1:
        return spec.grid.slice_times()
    return np.array([spec.box.t0])


@functools.lru_cache(maxsize=128)
def sup_norm(spec: FieldSpec, sample_density: int = 513) -> float:
    """Lattice maximum of |v| = sqrt(1 + |vhat|^2) over the domain box."""
    if sample_density < 2:
        raise ValueError("sample_density must be >= 2")
    xs = _space_lattice(spec, sample_density)
    best = 1.0
    for t in _eval_times(spec):
        vh = raw_vhat(spec, np.full(xs.shape[0], t), xs)
        if not np.all(np.isfinite(vh)):
            raise NonFinite("non-finite field values on the sample lattice")
        m = float(np.max(np.sum(vh * vh, axis=-1)))
        best = max(best, np.sqrt(1.0 + m))
    return float(best)


@functools.lru_cache(maxsize=32)
def _oscillation_profile(spec: FieldSpec, density: int):
    """Max |vhat(x) - vhat(y)| over same-time pairs at each lattice lag.

    1-D spatial grids only.  Returns (step, osc) with osc[k-1] the max
    oscillation at lag k; the prefix max of osc is the worst case within
    distance k*step.
    """
    if spec.n != 1:
        raise NotImplementedError("modulus scan implemented for 1-D spatial grids")
    xs = np.linspace(spec.box.xlo[0], spec.box.xhi[0], density)
    step = xs[1] - xs[0]
    osc = np.zeros(density - 1)
    for t in _eval_times(spec):
        v = raw_vhat(spec, np.full(density, t), xs[:, None])[:, 0]
        if not np.all(np.isfinite(v)):
            raise NonFinite("non-finite field values on the sample lattice")
        for k in range(1, density):
            d = float(np.max(np.abs(v[k:] - v[:-k])))
            if d > osc[k - 1]:
                osc[k - 1] = d
    return step, np.maximum.accumulate(osc)


def continuity_modulus(spec: FieldSpec, rho: float, sample_density: int = 513) -> float:
    """Largest lattice-certified delta with oscillation <= rho inside delta.

    Certified lower bound for the true modulus up to lattice resolution:
    every sampled same-time pair within the returned delta oscillates by
    at most rho.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    step, prefix = _oscillation_profile(spec, sample_density)
    ok = prefix <= rho
    if not ok[0]:
        raise NoModulus(f"oscillation {prefix[0]:.3g} at one lattice step exceeds rho={rho}")
    if ok.all():
        return float(step * len(prefix))
    k_star = int(np.argmin(ok))  # first violating lag
    return float(step * k_star)


@dataclass(frozen=True)
class ContinuityModulus:
    """Monotone table of (rho, delta) pairs certified on a lattice."""

    rhos: tuple
    deltas: tuple

    def delta(self, rho: float) -> float:
        i = int(np.searchsorted(np.asarray(self.rhos), rho, side="right")) - 1
        if i < 0:
            raise KeyError(f"rho={rho} below the tabulated range")
        return self.deltas[i]


def modulus_table(spec: FieldSpec, rhos, sample_density: int = 513) -> ContinuityModulus:
    rhos = tuple(sorted(float(r) for r in rhos))
    deltas = tuple(continuity_modulus(spec, r, sample_density) for r in rhos)
    return ContinuityModulus(rhos, deltas)


# ---------------------------------------------------------------------------
# sampled-field file format
#
# header: n T nx1 .. nxn nt a1 b1 .. an bn
# rows:   t i1 .. in v1 .. vn          (one per slice time and grid index)


def save_sampled_field(grid: SampledGrid, path) -> None:
    with open(path, "w") as fh:
        head = [str(grid.n), _fmt(grid.box.T)]
        head += [str(c) for c in grid.counts]
        head.append(str(grid.nt))
        for a, b in zip(grid.box.xlo, grid.box.xhi):
            head += [_fmt(a), _fmt(b)]
        fh.write(" ".join(head) + "\n")
        times = grid.slice_times()
        for k in range(grid.nt):
            for idx in np.ndindex(*grid.counts):
                row = [_fmt(times[k])]
                row += [str(i) for i in idx]
                row += [_fmt(v) for v in np.atleast_1d(grid.values[(k, *idx)])]
                fh.write(" ".join(row) + "\n")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def load_sampled_field(path) -> FieldSpec:
    with open(path) as fh:
        head = fh.readline().split()
        n = int(head[0])
        T = float(head[1])
        counts = tuple(int(c) for c in head[2 : 2 + n])
        nt = int(head[2 + n])
        bounds = [float(v) for v in head[3 + n : 3 + n + 2 * n]]
        xlo = tuple(bounds[0::2])
        xhi = tuple(bounds[1::2])
        box = Box(0.0, T, xlo, xhi)
        values = np.full((nt, *counts, n), np.nan)
        seen = 0
        times = (
            np.linspace(0.0, T, nt) if nt > 1 else np.array([0.0])
        )
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            t = float(parts[0])
            idx = tuple(int(i) for i in parts[1 : 1 + n])
            v = [float(x) for x in parts[1 + n : 1 + 2 * n]]
            k = int(np.argmin(np.abs(times - t)))
            values[(k, *idx)] = v
            seen += 1
        if seen < nt * int(np.prod(counts)):
            raise ValueError(
                f"incomplete grid file: {seen} rows, expected {nt * int(np.prod(counts))}"
            )
    return sampled_field(SampledGrid(box, counts, nt, values))


def sample_catalog_to_grid(spec: FieldSpec, counts, nt: int) -> SampledGrid:
    """Evaluate a catalog field onto a grid (for file round-trips and tests)."""
    counts = tuple(int(c) for c in np.atleast_1d(counts))
    axes = [np.linspace(a, b, c) for a, b, c in zip(spec.box.xlo, spec.box.xhi, counts)]
    mesh = np.meshgrid(*axes, indexing="ij") if spec.n > 1 else [axes[0]]
    xs = np.stack(mesh, axis=-1) if spec.n > 1 else axes[0][:, None]
    times = np.linspace(spec.box.t0, spec.box.t1, nt) if nt > 1 else [spec.box.t0]
    vals = np.stack(
        [raw_vhat(spec, np.full(xs.shape[:-1], t), xs) for t in times], axis=0
    )
    return SampledGrid(spec.box, counts, nt, vals)


# derivative data used by the sobolev and transport modules


def dvhat_mag(spec: FieldSpec, xhat) -> np.ndarray:
    """|d vhat / dx| (1-D): analytic for catalog, centered differences else."""
    xhat = np.asarray(xhat, dtype=float)
    if spec.kind == "catalog":
        return spec.entry.dvhat_mag(spec.params, xhat)
    return np.abs(_fd_derivative(spec, xhat))


def divergence(spec: FieldSpec, t, xhat) -> np.ndarray:
    """div vhat (1-D signed derivative): analytic for catalog fields."""
    xhat = np.asarray(xhat, dtype=float)
    if spec.kind == "catalog":
        return spec.entry.divergence(spec.params, xhat)
    return _fd_derivative(spec, xhat, t=t)


def _fd_derivative(spec: FieldSpec, xhat, t=0.0):
    if spec.n != 1:
        raise NotImplementedError("finite-difference derivative is 1-D only")
    eps = max(1e-6, (spec.box.xhi[0] - spec.box.xlo[0]) / 4096.0)
    tt = np.broadcast_to(np.asarray(t, dtype=float), xhat.shape)
    hi = raw_vhat(spec, tt, (xhat + eps)[..., None])[..., 0]
    lo = raw_vhat(spec, tt, (xhat - eps)[..., None])[..., 0]
    return (hi - lo) / (2.0 * eps)
