"""Cross-validation of the two continuity-equation solvers."""

import numpy as np
import pytest

from flowdist import fields, transport
from flowdist.errors import CFLViolation, LatticeMismatch, SupportLeak
from flowdist.sobolev import GridScalarField

SHEAR = fields.catalog_field("shear")
VMAX = 1.5  # sup |vhat| for the shear field on the default box


def _u0(spec, h, center=0.0, radius=0.5):
    ax = transport.density_lattice(spec.box, h)
    return GridScalarField(ax, transport.bump_values(ax, center, radius, degree=3))


def _shear_exact(ax, t):
    # under vhat = x the density contracts: u(t, x) = u0(x e^-t) e^-t
    return transport.bump_values(ax * np.exp(-t), 0.0, 0.5, 3) * np.exp(-t)


def test_density_lattice_is_cell_centered():
    ax = transport.density_lattice(SHEAR.box, 0.25)
    assert len(ax) == 12
    assert ax[0] == -1.375 and ax[-1] == 1.375


def test_density_field_validation():
    ax = transport.density_lattice(SHEAR.box, 0.5)
    with pytest.raises(ValueError):
        transport.DensityField(ax, [0.0, 1.0], np.zeros((3, len(ax))))
    with pytest.raises(ValueError):
        transport.DensityField(ax, [0.0], np.full((1, len(ax)), np.inf))


def test_lagrangian_first_order_against_closed_form():
    errs = []
    for k in (5, 6, 7):
        h = 2.0**-k
        u0 = _u0(SHEAR, h)
        sol = transport.lagrangian_solve(SHEAR, u0, [0.0, 1.0], ds=h)
        errs.append(np.sum(np.abs(sol.values[-1] - _shear_exact(u0.axis, 1.0))) * h)
    assert errs[0] == pytest.approx(0.00773, abs=5e-5)
    assert errs[2] == pytest.approx(0.00181, abs=5e-5)
    for a, b in zip(errs, errs[1:]):
        assert 1.6 <= a / b <= 2.4


def test_eulerian_first_order_against_closed_form():
    errs = []
    for k in (5, 6, 7):
        h = 2.0**-k
        u0 = _u0(SHEAR, h)
        sol = transport.eulerian_solve(SHEAR, u0, h, h / (2 * VMAX), times=[0.0, 1.0])
        errs.append(np.sum(np.abs(sol.values[-1] - _shear_exact(u0.axis, 1.0))) * h)
    assert errs[2] == pytest.approx(0.00781, abs=5e-5)
    for a, b in zip(errs, errs[1:]):
        assert 1.6 <= a / b <= 2.4


def test_eulerian_mass_plus_boundary_flux_is_conserved():
    h = 2.0**-6
    u0 = _u0(SHEAR, h)
    sol = transport.eulerian_solve(
        SHEAR, u0, h, h / (2 * VMAX), times=np.linspace(0.0, 1.0, 9)
    )
    drift = sol.masses - sol.masses[0] + sol.extra["boundary_flux"]
    assert np.max(np.abs(drift)) < 1e-14


def test_solvers_converge_to_each_other():
    cross = []
    for k in (5, 6, 7):
        h = 2.0**-k
        u0 = _u0(SHEAR, h)
        la = transport.lagrangian_solve(SHEAR, u0, [0.0, 0.5], ds=h)
        eu = transport.eulerian_solve(SHEAR, u0, h, h / (2 * VMAX), times=[0.0, 0.5])
        cross.append(transport.compare_solutions(la, eu)[-1])
    assert cross[0] == pytest.approx(0.01889, abs=1e-4)
    assert cross[2] == pytest.approx(0.00501, abs=1e-4)
    assert cross[0] > cross[1] > cross[2]


def test_zero_velocity_is_exact_for_both_solvers():
    z = fields.catalog_field("constant", 0.0)
    h = 2.0**-6
    u0 = _u0(z, h, center=0.1, radius=0.4)
    la = transport.lagrangian_solve(z, u0, [0.0, 0.5, 1.0], ds=h)
    eu = transport.eulerian_solve(z, u0, h, 0.01, times=[0.0, 0.5, 1.0])
    assert np.array_equal(la.values, np.tile(u0.values, (3, 1)))
    assert np.array_equal(eu.values, np.tile(u0.values, (3, 1)))


def test_lattice_aligned_translation_is_exact():
    const = fields.catalog_field("constant", 0.5)
    h = 2.0**-6
    u0 = _u0(const, h, center=-0.4, radius=0.3)
    sol = transport.lagrangian_solve(const, u0, [0.0, 1.0], ds=h)
    # displacement 0.5 is a whole number of cells, so interpolation is exact
    expect = transport.bump_values(u0.axis - 0.5, -0.4, 0.3, 3)
    assert np.max(np.abs(sol.values[-1] - expect)) < 1e-15


def test_cfl_guard():
    h = 2.0**-5
    u0 = _u0(SHEAR, h)
    with pytest.raises(CFLViolation):
        transport.eulerian_solve(SHEAR, u0, h, h / VMAX, times=[0.0, 1.0])


def test_eulerian_input_validation():
    h = 2.0**-5
    u0 = _u0(SHEAR, h)
    with pytest.raises(LatticeMismatch):
        transport.eulerian_solve(SHEAR, u0, h / 2, h / 8, times=[0.0, 1.0])
    with pytest.raises(ValueError):
        transport.eulerian_solve(SHEAR, u0, h, h / 4, times=[0.5, 1.0])


def _five_bumps():
    centers = [(0.30, 0.00), (0.50, 0.30), (0.50, -0.30), (0.70, 0.15), (0.40, -0.15)]
    return [transport.TestFunction(tc, xc, 0.25, 0.4) for tc, xc in centers]


def test_weak_residual_small_for_a_real_solution():
    h = 2.0**-7
    u0 = _u0(SHEAR, h)
    times = np.arange(0.0, 1.0 + h / 2, h)
    sol = transport.eulerian_solve(SHEAR, u0, h, h / (2 * VMAX), times=times)
    res = transport.weak_residual(sol, SHEAR, u0, _five_bumps())
    assert res.shape == (5,)
    assert res.max() == pytest.approx(0.000531, abs=5e-5)
    assert res.max() <= 0.02


def test_weak_residual_flags_a_frozen_density():
    h = 2.0**-7
    u0 = _u0(SHEAR, h)
    times = np.arange(0.0, 1.0 + h / 2, h)
    frozen = transport.DensityField(u0.axis, times, np.tile(u0.values, (len(times), 1)))
    res = transport.weak_residual(frozen, SHEAR, u0, _five_bumps())
    assert res.min() > 0.01
    assert res.max() > 0.04


def test_weak_residual_zero_density_zero_data():
    h = 2.0**-6
    ax = transport.density_lattice(SHEAR.box, h)
    zero = GridScalarField(ax, np.zeros(len(ax)))
    sol = transport.DensityField(ax, [0.0, 0.5, 1.0], np.zeros((3, len(ax))))
    res = transport.weak_residual(sol, SHEAR, zero, [transport.TestFunction(0.3, 0.0, 0.2, 0.3)])
    assert np.array_equal(res, [0.0])


def test_weak_residual_rejects_leaking_supports():
    h = 2.0**-6
    u0 = _u0(SHEAR, h)
    sol = transport.lagrangian_solve(SHEAR, u0, [0.0, 0.5, 1.0], ds=h)
    with pytest.raises(SupportLeak):
        transport.weak_residual(sol, SHEAR, u0, [transport.TestFunction(0.3, 1.3, 0.2, 0.4)])
    with pytest.raises(SupportLeak):
        transport.weak_residual(sol, SHEAR, u0, [transport.TestFunction(0.9, 0.0, 0.2, 0.4)])
    with pytest.raises(TypeError):
        transport.weak_residual(sol, SHEAR, u0, [lambda t, x: 0.0])


def test_compare_solutions_is_a_pseudometric():
    h = 2.0**-5
    u0 = _u0(SHEAR, h)
    times = [0.0, 0.5]
    la = transport.lagrangian_solve(SHEAR, u0, times, ds=h)
    eu = transport.eulerian_solve(SHEAR, u0, h, h / (2 * VMAX), times=times)
    mid = transport.DensityField(u0.axis, times, 0.5 * (la.values + eu.values))
    dab = transport.compare_solutions(la, eu)
    assert np.array_equal(dab, transport.compare_solutions(eu, la))
    assert np.array_equal(transport.compare_solutions(la, la), np.zeros(2))
    tri = transport.compare_solutions(la, mid) + transport.compare_solutions(mid, eu)
    assert np.all(dab <= tri + 1e-12)


def test_compare_solutions_rejects_mismatched_lattices():
    h = 2.0**-5
    u0 = _u0(SHEAR, h)
    la = transport.lagrangian_solve(SHEAR, u0, [0.0, 1.0], ds=h)
    u0b = _u0(SHEAR, h / 2)
    lb = transport.lagrangian_solve(SHEAR, u0b, [0.0, 1.0], ds=h)
    with pytest.raises(LatticeMismatch):
        transport.compare_solutions(la, lb)
    lc = transport.lagrangian_solve(SHEAR, u0, [0.0, 0.5], ds=h)
    with pytest.raises(LatticeMismatch):
        transport.compare_solutions(la, lc)


def test_bump_derivatives_match_finite_differences():
    tf = transport.TestFunction(0.4, -0.1, 0.3, 0.5, degree=3)
    ts = np.linspace(0.15, 0.65, 11)
    xs = np.linspace(-0.55, 0.35, 11)
    eps = 1e-6
    for t in ts:
        for x in xs:
            num_t = (tf.value(t + eps, x) - tf.value(t - eps, x)) / (2 * eps)
            num_x = (tf.value(t, x + eps) - tf.value(t, x - eps)) / (2 * eps)
            assert tf.dt(t, x) == pytest.approx(num_t, abs=1e-8)
            assert tf.dx(t, x) == pytest.approx(num_x, abs=1e-8)
    assert tf.value(0.4, 2.0) == 0.0 and tf.dx(0.4, 2.0) == 0.0


def test_bump_validation():
    with pytest.raises(ValueError):
        transport.TestFunction(0.5, 0.0, 0.2, 0.3, degree=1)
    with pytest.raises(ValueError):
        transport.TestFunction(0.5, 0.0, -0.2, 0.3)
