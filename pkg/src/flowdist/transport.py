"""Continuity-equation solvers and the weak-form residual.

Two independent routes to the same density: semi-Lagrangian pushforward
along backward characteristics (with the Jacobian realized through the
divergence integral) and a conservative first-order upwind scheme.  The
distributional residual against polynomial bump tests is the common
yardstick; neither route is ever tuned against the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import fields
from .errors import CFLViolation, LatticeMismatch, SupportLeak
from .sobolev import GridScalarField


@dataclass(frozen=True, eq=False)
class DensityField:
    """Per-time-slice densities on a cell-centered lattice of step h."""

    axis: np.ndarray  # (nx,) cell centers
    times: np.ndarray  # (K,)
    values: np.ndarray  # (K, nx)
    extra: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=float))
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.shape != (len(self.times), len(self.axis)):
            raise ValueError("values must be (n_times, n_cells)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("density values must be finite")

    @property
    def h(self) -> float:
        return float(self.axis[1] - self.axis[0])

    @property
    def masses(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.h


def density_lattice(box, h: float) -> np.ndarray:
    """Cell centers of step h filling the spatial box."""
    lo, hi = box.xlo[0], box.xhi[0]
    ncell = int(round((hi - lo) / h))
    return lo + (np.arange(ncell) + 0.5) * h


def bump_values(axis, center: float, radius: float, degree: int = 3) -> np.ndarray:
    """(1 - r^2)^degree profile, zero outside |x - center| < radius."""
    r = (np.asarray(axis, dtype=float) - center) / radius
    return np.where(np.abs(r) < 1.0, (1.0 - r**2) ** degree, 0.0)


def _vmax(spec: fields.FieldSpec) -> float:
    s = fields.sup_norm(spec)
    return math.sqrt(max(s * s - 1.0, 0.0))


def lagrangian_solve(
    spec: fields.FieldSpec, u0: GridScalarField, times, ds: float
) -> DensityField:
    """Backward-characteristic pushforward u(t, x) = u0(X_back) * exp(-I),
    I the left-rectangle integral of div along the backward path.

    Euler steps keep the whole route first order, matching the O(ds + h)
    contract; cells whose backward path leaves the spatial box are
    masked (value 0, recorded in extra["mask"]).
    """
    if spec.n != 1:
        raise NotImplementedError("transport solvers are 1-D only")
    box = spec.box
    lo, hi = box.xlo[0], box.xhi[0]
    times = np.asarray(sorted(float(t) for t in times))
    if times[0] < box.t0 - 1e-12 or times[-1] > box.t1 + 1e-12:
        raise ValueError("output times must lie in the field's time range")
    axis = u0.axis
    out = np.empty((len(times), len(axis)))
    masks = np.zeros((len(times), len(axis)), dtype=bool)
    for k, t in enumerate(times):
        steps = max(0, int(round((t - box.t0) / ds)))
        step = (t - box.t0) / steps if steps else 0.0
        x = axis.copy()
        left = np.zeros(len(axis), dtype=bool)
        div_int = np.zeros(len(axis))
        s = t
        for _ in range(steps):
            v = fields.raw_vhat(spec, np.full(x.shape, s), x[:, None])[:, 0]
            x = x - step * v
            s = s - step
            left |= (x < lo) | (x > hi)
            div_int += step * fields.divergence(spec, s, x)
        u = np.interp(x, axis, u0.values) * np.exp(-div_int)
        out[k] = np.where(left, 0.0, u)
        masks[k] = left
    return DensityField(axis, times, out, extra={"mask": masks, "ds": float(ds)})


def eulerian_solve(
    spec: fields.FieldSpec, u0: GridScalarField, h: float, dt_cfl: float, times=None
) -> DensityField:
    """Conservative first-order upwind finite volume.

    Face velocities come from the field at face centers; output times
    are hit exactly by subdividing each interval into uniform steps no
    longer than dt_cfl.  extra["boundary_flux"] holds the per-slice
    accumulated edge outflow, so mass(t_k) - mass(t_0) + flux(t_k) = 0
    up to roundoff.
    """
    if spec.n != 1:
        raise NotImplementedError("transport solvers are 1-D only")
    box = spec.box
    if abs(u0.h - h) > 1e-12 * h:
        raise LatticeMismatch(f"u0 lattice step {u0.h} != h = {h}")
    vmax = _vmax(spec)
    if vmax > 0.0 and dt_cfl > h / (2.0 * vmax) * (1.0 + 1e-12):
        raise CFLViolation(f"dt_cfl = {dt_cfl} exceeds h/(2 vmax) = {h / (2 * vmax)}")
    if times is None:
        times = (box.t0, box.t1)
    times = np.asarray(sorted(float(t) for t in times))
    if abs(times[0] - box.t0) > 1e-12:
        raise ValueError("the first output time must be the initial time")

    axis = u0.axis
    faces = np.concatenate([[axis[0] - 0.5 * h], axis + 0.5 * h])  # (nx+1,)
    u = u0.values.copy()
    out = [u.copy()]
    flux_acc = 0.0
    flux_out = [0.0]
    t = times[0]
    for t_next in times[1:]:
        m = max(1, int(math.ceil((t_next - t) / dt_cfl - 1e-12)))
        dt = (t_next - t) / m
        for _ in range(m):
            vf = fields.raw_vhat(spec, np.full(faces.shape, t + 0.5 * dt), faces[:, None])[:, 0]
            up = np.concatenate([[0.0], u])  # ghost zeros outside
            dn = np.concatenate([u, [0.0]])
            F = np.where(vf > 0.0, vf * up, vf * dn)
            u = u - (dt / h) * (F[1:] - F[:-1])
            flux_acc += dt * (F[-1] - F[0])
            t += dt
        t = t_next
        out.append(u.copy())
        flux_out.append(flux_acc)
    return DensityField(
        axis, times, np.array(out),
        extra={"boundary_flux": np.array(flux_out), "dt_cfl": float(dt_cfl)},
    )


@dataclass(frozen=True)
class TestFunction:
    """Product bump (1 - s^2)^d (1 - r^2)^d, s = (t - tc)/rt, r = (x - xc)/rx.

    degree >= 2 keeps it C^1 with exact derivative formulas.
    """

    t_center: float
    x_center: float
    t_radius: float
    x_radius: float
    degree: int = 3

    def __post_init__(self):
        if self.degree < 2:
            raise ValueError("bump degree must be >= 2")
        if self.t_radius <= 0 or self.x_radius <= 0:
            raise ValueError("radii must be positive")

    def _parts(self, t, x):
        s = (np.asarray(t, dtype=float) - self.t_center) / self.t_radius
        r = (np.asarray(x, dtype=float) - self.x_center) / self.x_radius
        bs = np.where(np.abs(s) < 1.0, 1.0 - s**2, 0.0)
        br = np.where(np.abs(r) < 1.0, 1.0 - r**2, 0.0)
        return s, r, bs, br

    def value(self, t, x):
        _, _, bs, br = self._parts(t, x)
        return bs**self.degree * br**self.degree

    def dt(self, t, x):
        s, _, bs, br = self._parts(t, x)
        d = self.degree
        return (-2.0 * d * s / self.t_radius) * bs ** (d - 1) * br**d

    def dx(self, t, x):
        _, r, bs, br = self._parts(t, x)
        d = self.degree
        return bs**d * (-2.0 * d * r / self.x_radius) * br ** (d - 1)


def weak_residual(
    u: DensityField, spec: fields.FieldSpec, u0: GridScalarField, tests
) -> np.ndarray:
    """|LHS - RHS| per test of the distributional identity
    int u (d_t phi + v d_x phi) dx dt = - int u0 phi(t0, .) dx.

    Time quadrature is composite midpoint on u's slice intervals (u
    averaged onto midpoints); space is the cell-centered sum.  Tests
    whose spatial support reaches the box edge, or whose time support
    reaches past the final time, raise SupportLeak.
    """
    box = spec.box
    lo, hi = box.xlo[0], box.xhi[0]
    h = u.h
    out = []
    for tf in tests:
        if not isinstance(tf, TestFunction):
            raise TypeError("tests must be TestFunction instances")
        if tf.x_center - tf.x_radius <= lo or tf.x_center + tf.x_radius >= hi:
            raise SupportLeak("test bump touches the spatial boundary")
        if tf.t_center + tf.t_radius >= box.t1 + 1e-12:
            raise SupportLeak("test bump reaches the final time")
        lhs = 0.0
        for k in range(len(u.times) - 1):
            dt = u.times[k + 1] - u.times[k]
            tm = u.times[k] + 0.5 * dt
            um = 0.5 * (u.values[k] + u.values[k + 1])
            v = fields.raw_vhat(spec, np.full(u.axis.shape, tm), u.axis[:, None])[:, 0]
            integ = um * (tf.dt(tm, u.axis) + v * tf.dx(tm, u.axis))
            lhs += dt * h * integ.sum()
        rhs = -h * float(np.sum(u0.values * tf.value(box.t0, u.axis)))
        out.append(abs(lhs - rhs))
    return np.array(out)


def compare_solutions(a: DensityField, b: DensityField) -> np.ndarray:
    """Slice-wise L1 distance h * sum |a - b|; lattices must agree."""
    if len(a.axis) != len(b.axis) or np.max(np.abs(a.axis - b.axis)) > 1e-12:
        raise LatticeMismatch("density fields live on different lattices")
    if len(a.times) != len(b.times) or np.max(np.abs(a.times - b.times)) > 1e-12:
        raise LatticeMismatch("density fields have different time slices")
    return np.sum(np.abs(a.values - b.values), axis=1) * a.h
