"""Integral curves, curve families, and forward-backward curve handling."""

import numpy as np
import pytest

from flowdist import fields, flow
from flowdist.errors import EmptySubset, ProfileMismatch, SparseFamily, StepTooLarge
from flowdist.geometry import Box

CUBIC = fields.catalog_field("cubic")
LENS = fields.catalog_field("lens")
SHEAR = fields.catalog_field("shear")


def test_integrate_cubic_second_order_convergence():
    # x' = 3|x|^(2/3) from x(0) = 0.008 = 0.2^3 has x(t) = (0.2 + t)^3
    exact = 0.6**3
    errs = []
    for k in (6, 7, 8):
        c = flow.integrate_curve(CUBIC, (0.0, 0.008), 1, 0.4, ds=0.4 / 2**k)
        assert not c.clipped
        errs.append(abs(c.endpoint()[1] - exact))
    assert errs[0] > errs[1] > errs[2]
    for a, b in zip(errs, errs[1:]):
        assert 3.5 <= a / b <= 4.5


def test_integrate_time_grid_is_exact():
    ds = 1.0 / 64
    c = flow.integrate_curve(CUBIC, (0.0, 0.008), 1, 0.5, ds=ds)
    k = np.arange(len(c.samples))
    assert np.array_equal(c.samples[:, 0], k * ds)
    assert c.duration == pytest.approx(0.5, abs=0)


def test_integrate_clips_at_spatial_boundary():
    c = flow.integrate_curve(fields.catalog_field("constant", 4.0), (0.0, 0.0), 1, 1.0, ds=1 / 64)
    assert c.clipped
    assert c.samples[-1, 1] <= 1.5 + 1e-12
    assert c.duration < 1.0


def test_integrate_clips_at_time_boundary():
    c = flow.integrate_curve(CUBIC, (0.0, 0.0), -1, 0.5, ds=1 / 32)
    assert c.clipped
    assert len(c.samples) == 1


def test_integrate_rejects_bad_arguments():
    with pytest.raises(ValueError):
        flow.integrate_curve(CUBIC, (0.0, 0.0), 0, 0.5, ds=1 / 32)
    with pytest.raises(ValueError):
        flow.integrate_curve(CUBIC, (0.0, 0.0), 1, 0.5, ds=-1.0)


def test_integrate_residual_guard_fires_on_forced_tiny_tol():
    with pytest.raises(StepTooLarge):
        flow.integrate_curve(CUBIC, (0.0, 0.5), 1, 0.5, ds=0.25, tol_ode=1e-9)


def test_flow_map_shear_exponential():
    starts = np.array([-0.4, -0.1, 0.2, 0.5])
    out = flow.flow_map(SHEAR, starts, 0.0, 1.0, ds=1 / 512)
    assert np.max(np.abs(out - starts * np.e)) < 1e-5
    # euler is consistent but visibly less accurate
    eul = flow.flow_map(SHEAR, starts, 0.0, 1.0, ds=1 / 512, method="euler")
    assert 1e-5 < np.max(np.abs(eul - starts * np.e)) < 2e-3


def test_flow_map_records_full_trajectory():
    traj = flow.flow_map(SHEAR, [0.3], 0.0, 0.5, ds=1 / 32, record=True)
    assert traj.shape == (17, 1)
    assert traj[0, 0] == 0.3


def test_flow_map_backward_inverts_forward():
    starts = np.array([-0.2, 0.1, 0.4])
    fwd = flow.flow_map(SHEAR, starts, 0.0, 0.7, ds=1 / 256)
    back = flow.flow_map(SHEAR, fwd, 0.7, 0.0, ds=1 / 256)
    assert np.max(np.abs(back - starts)) < 1e-6


def test_multiflow_analytic_cubic_heights_exact():
    mf = flow.build_multiflow(CUBIC, [-0.5, 0.0, 0.3], ds=1 / 32)
    assert mf.kind == "analytic"
    # the family parameter is the cube-root shift: height(s) = (s + a)^3
    for i, a in enumerate(mf.params):
        expect = (mf.tgrid + a) ** 3
        live = np.isfinite(mf.heights[i])
        assert np.array_equal(mf.heights[i][live], expect[live])
        # once outside the box a curve stays dead
        dead = ~live
        if dead.any():
            k0 = int(np.argmax(dead))
            assert dead[k0:].all()
            assert expect[k0] > 1.5 or expect[k0] < -1.5


def test_multiflow_numeric_on_sampled_shear():
    grid = fields.sample_catalog_to_grid(SHEAR, (97,), 2)
    samp = fields.sampled_field(grid)
    mf = flow.build_multiflow(samp, [-0.3, 0.2], ds=1 / 128)
    assert mf.kind == "numeric"
    for i, a in enumerate(mf.params):
        assert np.max(np.abs(mf.heights[i] - a * np.exp(mf.tgrid))) < 1e-3


def test_multiflow_density_proxy_and_sparse_guard():
    dense = flow.build_multiflow(LENS, np.linspace(-1.5, 1.5, 61), ds=1 / 64)
    sparse = flow.build_multiflow(LENS, [-1.0, 1.0], ds=1 / 64)
    assert dense.dist_dense < sparse.dist_dense
    with pytest.raises(SparseFamily):
        flow.build_multiflow(LENS, [-1.0, 1.0], ds=1 / 64, dense_cap=dense.dist_dense)


def test_flowtube_subset_selection():
    mf = flow.build_multiflow(CUBIC, [-0.5, 0.0, 0.3], ds=1 / 32)
    tube = flow.build_flowtube(mf, [0.0, 0.3])
    assert set(np.unique(tube.point_params)) == {0.0, 0.3}
    assert tube.points.shape[1] == 2
    assert np.all(tube.bbox_lo <= tube.points.min(axis=0))
    with pytest.raises(EmptySubset):
        flow.build_flowtube(mf, [])
    with pytest.raises(EmptySubset):
        flow.build_flowtube(mf, [0.123])


def test_fb_curve_from_legs_and_validation():
    ds = 1 / 256
    fwd = flow.integrate_curve(LENS, (0.0, 1.0), 1, 0.3, ds=ds)
    back = flow.integrate_curve(LENS, fwd.endpoint(), -1, 0.3, ds=ds)
    fb = flow.FBCurve.from_legs([fwd, back])
    assert len(fb.switch_params) == 1
    assert fb.switch_params[0] == pytest.approx(fwd.duration, abs=1e-12)
    rep = flow.validate_fb_curve(LENS, fb, tol=flow.default_tol_ode(LENS, ds))
    assert rep.passed
    assert rep.max_residual < rep.tol
    # retracing the same orbit returns near the start
    assert abs(fb.samples[-1, 1] - 1.0) < 1e-4


def test_fb_curve_rejects_disconnected_legs():
    ds = 1 / 64
    a = flow.integrate_curve(LENS, (0.0, 1.0), 1, 0.25, ds=ds)
    b = flow.integrate_curve(LENS, (0.5, -0.5), 1, 0.25, ds=ds)
    with pytest.raises(ValueError):
        flow.FBCurve.from_legs([a, b])


def test_fb_profile_mismatch_detected():
    samples = np.array([[0.1, 0.0], [0.0, 0.0]])
    fb = flow.FBCurve(samples, ds=0.1, profile=np.array([1]))
    with pytest.raises(ProfileMismatch):
        flow.validate_fb_curve(LENS, fb, tol=1.0)


def _branch_switch_curve(ds=0.01):
    """Forward along the orbit with vertex 0.4, then backward down the
    negative branch leaving the axis: a genuinely two-orbit curve."""
    s = np.arange(101) * ds
    t = np.where(s <= 0.5, s, 1.0 - s)
    x = np.where(s <= 0.5, np.clip(0.4 - s, 0.0, None) ** 3, -((s - 0.5) ** 3))
    profile = np.concatenate([np.ones(50, dtype=int), -np.ones(50, dtype=int)])
    return flow.FBCurve(np.column_stack([t, x]), ds, profile)


def test_branch_switch_curve_is_a_valid_fb_curve():
    fb = _branch_switch_curve()
    rep = flow.validate_fb_curve(LENS, fb, tol=flow.default_tol_ode(LENS, 0.01))
    assert rep.passed


def test_triviality_trichotomy():
    mf = flow.build_multiflow(LENS, np.linspace(-1.5, 1.5, 41), ds=1 / 64)

    one_way = flow.integrate_curve(LENS, (0.0, 1.0), 1, 0.3, ds=1 / 64).as_fb()
    assert flow.fb_triviality_check(LENS, one_way, mf) == "trivial"

    # forward then backward along one orbit stays trivial
    ds = 1 / 256
    fwd = flow.integrate_curve(LENS, (0.0, 1.0), 1, 0.3, ds=ds)
    back = flow.integrate_curve(LENS, fwd.endpoint(), -1, 0.3, ds=ds)
    retrace = flow.FBCurve.from_legs([fwd, back])
    assert flow.fb_triviality_check(LENS, retrace, mf, tol_geom=0.05) == "trivial"

    # switching branches through the degenerate axis is not coverable
    fb = _branch_switch_curve()
    assert flow.fb_triviality_check(LENS, fb, mf, tol_geom=0.05) == "nontrivial"


def test_fb_curve_file_round_trip(tmp_path):
    fb = _branch_switch_curve()
    path = tmp_path / "curve.fb"
    flow.write_fb_curve(fb, path)
    back = flow.read_fb_curve(path)
    assert np.array_equal(back.samples, fb.samples)
    assert np.array_equal(back.profile, fb.profile)
    assert back.ds == fb.ds
    with pytest.raises(ValueError):
        flow.read_fb_curve(__file__)


def test_default_tol_tracks_field_slope():
    # the shear profile has unit slope, so the lattice estimate is exact
    assert flow.field_slope_estimate(SHEAR) == pytest.approx(1.0, rel=1e-12)
    assert flow.default_tol_ode(SHEAR, 1 / 64) == pytest.approx(10 / 64, rel=1e-12)


def test_trace_through_covers_known_orbits():
    tgrid = np.arange(25) / 32  # stop before the orbit exits the box
    traced = flow.trace_through(CUBIC, 0.0, 0.008, tgrid)
    best = min(np.max(np.abs(h - (tgrid + 0.2) ** 3)) for h in traced)
    assert best < 1e-12
