"""Distance backends: the lattice graph and the curve network."""

import math

import numpy as np
import pytest

from flowdist import fields, flow, flownet, metric
from flowdist.errors import (
    DegeneratePair,
    GraphTooLarge,
    ScheduleTooShort,
    Unreachable,
)
from flowdist.geometry import Box

SMALL = Box(0.0, 1.0, (-1.0,), (1.0,))
CUBIC_S = fields.catalog_field("cubic", box=SMALL)
LENS = fields.catalog_field("lens")


def test_lambda_validation():
    for bad in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            metric.build_metric_graph(CUBIC_S, 1 / 8, 1 / 8, bad)


def test_node_cap_guard():
    with pytest.raises(GraphTooLarge):
        metric.build_metric_graph(CUBIC_S, 1 / 8, 1 / 8, 1.0, node_cap=10)


def test_snap_point_round_trip():
    g = metric.build_metric_graph(CUBIC_S, 1 / 8, 1 / 8, 1.0)
    i, err = g.snap_point((0.25, 0.5))
    assert err == 0.0
    assert np.array_equal(g.node_point(i), [0.25, 0.5])
    _, err2 = g.snap_point((0.25, 0.52))
    assert 0.0 < err2 <= math.hypot(1 / 16, 1 / 16)


def test_in_slice_chord_cost_is_exact():
    # sup|v| = sqrt(1 + 3^2) on [-1, 1], attained at the lattice endpoint
    h, dt = 1 / 16, 1 / 16
    g = metric.build_metric_graph(CUBIC_S, h, dt, 1.0)
    assert g.vnorm == pytest.approx(math.sqrt(10.0), rel=1e-15)
    r = metric.distance_lambda(g, (0.0, -0.5), (0.0, -0.5 + h))
    assert r.value == pytest.approx(h / math.sqrt(10.0), rel=1e-14)
    assert r.extra["path_cost"] == pytest.approx(r.value, rel=1e-12)


def test_degenerate_axis_is_a_unit_cost_flow_path():
    g = metric.build_metric_graph(CUBIC_S, 1 / 16, 1 / 16, 1.0)
    r = metric.distance_lambda(g, (0.0, 0.0), (1.0, 0.0))
    assert r.value == 1.0
    assert np.all(r.edge_kinds == 1)
    assert r.extra["query_snap"] == (0.0, 0.0)


def test_distance_symmetry_exact():
    g = metric.build_metric_graph(CUBIC_S, 1 / 16, 1 / 16, 0.5)
    pairs = [((0.0, -0.75), (0.5, 0.25)), ((0.25, 0.5), (0.75, -0.5))]
    for x, y in pairs:
        assert metric.distance_lambda(g, x, y).value == metric.distance_lambda(g, y, x).value


def test_distance_monotone_in_lambda():
    g1 = metric.build_metric_graph(CUBIC_S, 1 / 16, 1 / 16, 1.0)
    pairs = [((0.0, -0.75), (0.5, 0.25)), ((0.0, 0.5), (0.25, -0.5)), ((0.5, 0.0), (0.5, 1.0))]
    prev = None
    for lam in (1.0, 0.5, 0.25, 0.125):
        g = g1.with_lambda(lam)
        vals = np.array([metric.distance_lambda(g, x, y).value for x, y in pairs])
        if prev is not None:
            assert np.all(vals >= prev)  # shrinking lambda can only lengthen paths
        prev = vals


def test_distance_dominates_time_gap():
    g = metric.build_metric_graph(CUBIC_S, 1 / 16, 1 / 16, 0.5)
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = (rng.choice([0.0, 0.25, 0.5]), rng.uniform(-1, 1))
        y = (rng.choice([0.5, 0.75, 1.0]), rng.uniform(-1, 1))
        assert metric.distance_lambda(g, x, y).value >= abs(y[0] - x[0]) - 1e-15


def test_triangle_inequality_at_nodes():
    g = metric.build_metric_graph(CUBIC_S, 1 / 8, 1 / 8, 0.5)
    pts = [(0.0, -0.5), (0.5, 0.25), (1.0, 0.75), (0.25, 0.0)]
    d = metric.distance_matrix(g, pts, pts)
    assert np.max(np.abs(d - d.T)) == 0.0
    for i in range(4):
        for j in range(4):
            for k in range(4):
                assert d[i, j] <= d[i, k] + d[k, j] + 1e-12


def test_distance_matrix_matches_single_queries():
    g = metric.build_metric_graph(CUBIC_S, 1 / 16, 1 / 16, 0.5)
    xs = [(0.0, -0.5), (0.25, 0.25)]
    ys = [(0.5, 0.5), (1.0, 0.0)]
    d = metric.distance_matrix(g, xs, ys)
    for a, x in enumerate(xs):
        for b, y in enumerate(ys):
            assert d[a, b] == metric.distance_lambda(g, x, y).value


def test_lattice_and_network_agree_on_a_pure_flow_pair():
    spec = fields.catalog_field("constant", 0.5, box=SMALL)
    # one midpoint step moves exactly one lattice cell: no snap error
    g = metric.build_metric_graph(spec, 1 / 32, 1 / 16, 1.0)
    r = metric.distance_lambda(g, (0.0, 0.0), (0.5, 0.25))
    assert r.value == 0.5
    mf = flow.build_multiflow(spec, [0.0], ds=1 / 16)
    net = flownet.build_curve_network(spec, 1 / 32, 1 / 16, mf=mf)
    rn = flownet.network_distance(net, (0.0, 0.0), (0.5, 0.25), lam=1.0)
    assert rn.value == 0.5


def test_lip_constant_and_degenerate_pair():
    d = np.array([[0.0, 2.0], [2.0, 0.0]])
    assert metric.lip_constant([0.0, 1.0], d) == 0.5
    v, pair = metric.lip_constant_with_pair([0.0, 1.0], d)
    assert v == 0.5 and set(pair) == {0, 1}
    with pytest.raises(DegeneratePair):
        metric.lip_constant([0.0, 1.0], np.zeros((2, 2)))
    with pytest.raises(ValueError):
        metric.lip_constant([1.0], np.zeros((1, 1)))
    # +inf distances contribute nothing
    dinf = np.array([[0.0, np.inf], [np.inf, 0.0]])
    assert metric.lip_constant([0.0, 5.0], dinf) == 0.0


def test_network_same_orbit_pair_costs_exactly_the_time_gap():
    spec = fields.catalog_field("cubic")
    mf = flow.build_multiflow(spec, [0.2], ds=1 / 64)
    x = (0.0, float(mf.heights[0][0]))
    y = (0.5, float(mf.heights[0][32]))
    net = flownet.build_curve_network(spec, 1 / 64, 1 / 64, mf=mf, anchors=(x, y))
    r = flownet.network_distance(net, x, y, lam=0.25)
    assert r.value == 0.5
    assert r.snap_err == 0.0


def test_fb_distance_lens_branch_pair():
    r = metric.fb_distance(LENS, (0.0, 1.0), (0.0, -1.0), h=1 / 32, dt=1 / 64)
    assert r.status == "finite"
    assert r.value == 2.0
    fb = flownet.witness_to_fb(r)
    assert len(fb.switch_params) >= 1
    rep = flow.validate_fb_curve(LENS, fb, tol=flow.default_tol_ode(LENS, 1 / 64))
    assert rep.passed


def test_fb_distance_cubic_axis_and_identity():
    spec = fields.catalog_field("cubic")
    r = metric.fb_distance(spec, (0.0, 0.0), (1.0, 0.0), h=1 / 32, dt=1 / 32)
    assert r.status == "finite" and r.value == 1.0
    r0 = metric.fb_distance(spec, (0.5, 0.0), (0.5, 0.0), h=1 / 32, dt=1 / 32)
    assert r0.value == 0.0


def test_fb_distance_inf_without_branching():
    spec = fields.catalog_field("constant", 0.0)
    mf = flow.build_multiflow(spec, [0.0, 0.3], ds=1 / 32)
    r = metric.fb_distance(spec, (0.0, 0.0), (0.0, 0.3), h=1 / 32, dt=1 / 32, mf=mf)
    assert r.status == "inf"
    assert math.isinf(r.value)
    with pytest.raises(ValueError):
        flownet.witness_to_fb(r)


def test_distance_zero_finite_on_the_cubic_axis():
    spec = fields.catalog_field("cubic")
    mf = flow.build_multiflow(spec, np.linspace(-1.1, 1.1, 12), ds=1 / 32)
    sched = [1.0, 0.5, 0.25, 0.125, 0.0625]
    r = metric.distance_zero(spec, mf, (0.0, 0.0), (1.0, 0.0), sched, h=1 / 32, dt=1 / 32)
    assert r.status == "finite"
    assert r.value == 1.0
    assert r.extra["values"] == [1.0] * 5
    assert r.extra["fb"] == 1.0


def test_distance_zero_divergent_doubles_exactly():
    spec = fields.catalog_field("constant", 0.0)
    mf = flow.build_multiflow(spec, [0.0, 0.3], ds=1 / 32)
    sched = [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125]
    r = metric.distance_zero(spec, mf, (0.0, 0.0), (0.0, 0.3), sched, h=1 / 32, dt=1 / 32)
    assert r.status == "divergent"
    assert math.isinf(r.value)
    assert r.extra["values"] == [0.3, 0.6, 1.2, 2.4, 4.8, 9.6]
    assert math.isinf(r.extra["fb"])


def test_distance_zero_short_schedule_raises():
    mf = flow.build_multiflow(LENS, np.linspace(-1.1, 1.1, 12), ds=1 / 16)
    with pytest.raises(ScheduleTooShort):
        metric.distance_zero(
            LENS, mf, (0.0, 1.0), (0.0, -1.0), [1.0, 0.5], h=1 / 16, dt=1 / 16
        )
    with pytest.raises(ScheduleTooShort):
        metric.distance_zero(
            LENS, mf, (0.0, 1.0), (0.0, -1.0), [1.0], h=1 / 16, dt=1 / 16
        )
    with pytest.raises(ValueError):
        metric.distance_zero(
            LENS, mf, (0.0, 1.0), (0.0, -1.0), [0.5, 1.0], h=1 / 16, dt=1 / 16
        )


def test_distance_zero_lens_branch_pair_is_finite():
    mf = flow.build_multiflow(LENS, np.linspace(-1.1, 1.1, 23), ds=1 / 64)
    sched = [2.0**-k for k in range(11)]
    r = metric.distance_zero(
        LENS, mf, (0.0, 1.0), (0.0, -1.0), sched, h=1 / 64, dt=1 / 64
    )
    assert r.status == "finite"
    assert abs(r.value - 2.0) <= 0.1
    assert r.extra["fb"] == 2.0
    vals = r.extra["values"]
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))


def test_network_node_at_missing_slice():
    # a single family curve that exits early leaves later slices empty
    spec = fields.catalog_field("constant", 1.0)
    mf = flow.build_multiflow(spec, [1.4], ds=1 / 16)
    net = flownet.build_curve_network(spec, 1 / 16, 1 / 16, mf=mf)
    with pytest.raises(Unreachable):
        net.node_at((1.0, 0.0))
