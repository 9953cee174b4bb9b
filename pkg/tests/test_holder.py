"""Decay traces over nested intrinsic cylinders, the power-law fit, and
the sampled two-point modulus."""

import csv

import numpy as np
import pytest

from anisolab import (
    Box,
    DecayTrace,
    ExponentVector,
    Grid,
    GridFunction,
    IntrinsicCylinder,
    IntrinsicMetricContext,
    Normalization,
    boundary_p_distance,
    holder_fit,
    intrinsic_cylinder,
    modulus_check,
    oscillation_decay,
)

P22 = ExponentVector((2.0, 2.0))
P24 = ExponentVector((2.0, 4.0))


# ---------------------------------------------------------------- cylinders


def test_cylinder_radii_frozen():
    cyl = IntrinsicCylinder(
        center=(0.0, 0.0), omega=0.5, q=1, rho=0.25, exponents=P24
    )
    # (omega/2) rho^{4/p_j} = 0.25 * (0.0625, 0.25)
    assert cyl.radii() == (0.015625, 0.0625)
    assert cyl.box().half_widths == (0.015625, 0.0625)


def test_cylinder_distance_scale_frozen():
    cyl = IntrinsicCylinder(
        center=(0.0, 0.0), omega=0.5, q=1, rho=0.25, exponents=P24
    )
    ctx = IntrinsicMetricContext(sup_norm=16.0, exponents=P24)
    # weights (16^{1/2}, 1) = (4, 1); corner terms 4*0.015625^{1/2} + 0.0625
    assert cyl.distance_scale(ctx) == pytest.approx(0.5625, rel=1e-14)


def test_cylinder_validation():
    with pytest.raises(ValueError):
        IntrinsicCylinder((0.0, 0.0), omega=-1.0, q=1, rho=0.5, exponents=P22)
    with pytest.raises(ValueError):
        IntrinsicCylinder((0.0, 0.0), omega=float("nan"), q=1, rho=0.5,
                          exponents=P22)
    with pytest.raises(ValueError):
        IntrinsicCylinder((0.0, 0.0), omega=1.0, q=-1, rho=0.5, exponents=P22)
    with pytest.raises(ValueError):
        IntrinsicCylinder((0.0, 0.0), omega=1.0, q=1, rho=1.5, exponents=P22)
    with pytest.raises(ValueError):
        IntrinsicCylinder((0.0, 0.0), omega=1.0, q=1, rho=0.5, exponents=P22,
                          alpha=1.0)
    with pytest.raises(ValueError):
        IntrinsicCylinder((0.0,), omega=1.0, q=1, rho=0.5, exponents=P22)


def test_cylinder_degenerate_has_no_box():
    cyl = intrinsic_cylinder(0.0, 1, None, 0.5, P22, (0.0, 0.0))
    assert cyl.degenerate
    with pytest.raises(ValueError):
        cyl.box()


# ---------------------------------------------------------------- trace


def test_synthetic_trace_recovers_power_law():
    # exact model: oscillation = gamma * sup * (d/D)^alpha
    alpha, gamma, sup = 0.6, 0.8, 2.0
    scales = [2.0 ** (-m) for m in range(9)]
    oscs = [gamma * sup * d ** alpha for d in scales]
    trace = DecayTrace.synthetic(scales, oscs, sup_scale=sup,
                                 boundary_distance=1.0)
    fit = holder_fit(trace)
    assert fit.alpha == pytest.approx(alpha, abs=1e-10)
    assert fit.gamma == pytest.approx(gamma, rel=1e-10)
    assert fit.residual < 1e-10


def test_synthetic_trace_recovery_seeded_sweep():
    rng = np.random.default_rng(314)
    for _ in range(25):
        alpha = float(rng.uniform(0.1, 1.5))
        gamma = float(rng.uniform(0.2, 3.0))
        sup = float(rng.uniform(0.5, 4.0))
        scales = [0.9 * 2.0 ** (-m) for m in range(6)]
        oscs = [gamma * sup * d ** alpha for d in scales]
        trace = DecayTrace.synthetic(scales, oscs, sup_scale=sup)
        fit = holder_fit(trace)
        assert fit.alpha == pytest.approx(alpha, abs=1e-10)
        assert fit.gamma == pytest.approx(gamma, rel=1e-9)
        assert fit.residual < 1e-10


def test_trace_requires_decreasing_scales():
    with pytest.raises(ValueError, match="strictly decreasing"):
        DecayTrace.synthetic([1.0, 1.0, 0.5], [1.0, 0.5, 0.25])
    with pytest.raises(ValueError, match="seed row"):
        DecayTrace(rows=[], sup_scale=1.0, boundary_distance=1.0,
                   under_resolved=False, degenerate=False,
                   normalization=Normalization())


def test_trace_report_states():
    good = DecayTrace.synthetic([1.0, 0.5, 0.25], [1.0, 0.6, 0.3])
    rep = good.report()
    assert rep.check_name == "oscillation_decay"
    assert rep.anchor == "decay-trace"
    assert rep.state == "pass"
    assert (rep.lhs, rep.rhs) == (0.3, 1.0)
    bad = DecayTrace.synthetic([1.0, 0.5, 0.25], [1.0, 0.6, 0.7])
    assert bad.report().state == "fail"
    zero = DecayTrace.synthetic([1.0, 0.5], [0.0, 0.0])
    assert zero.report().state == "degenerate"


def test_trace_report_carries_fit():
    trace = DecayTrace.synthetic([1.0, 0.5, 0.25], [0.8, 0.4, 0.2])
    fit = holder_fit(trace)
    rep = trace.report(fit=fit)
    assert rep.empirical_gamma == fit.alpha
    assert rep.details["fit"]["alpha"] == fit.alpha


def test_trace_csv_round_trip(tmp_path):
    trace = DecayTrace.synthetic([1.0, 0.5, 0.25], [0.9, 0.45, 0.2])
    path = tmp_path / "decay.csv"
    trace.write_csv(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["m", "rho_m", "omega_m"]
    assert len(rows) == 4
    assert float(rows[1][1]) == 1.0
    assert float(rows[3][2]) == 0.2


def test_fit_validation():
    with pytest.raises(ValueError, match="degenerate"):
        holder_fit(DecayTrace.synthetic([1.0, 0.5], [0.0, 0.0]))
    with pytest.raises(ValueError, match="vanishing"):
        holder_fit(DecayTrace.synthetic([1.0, 0.5, 0.25], [1.0, 0.5, 0.0]))
    with pytest.raises(ValueError, match="at least 3"):
        holder_fit(DecayTrace.synthetic([1.0, 0.5], [1.0, 0.5]))
    short = DecayTrace.synthetic([1.0, 0.5, 0.25], [1.0, 0.5, 0.25],
                                 sup_scale=0.0)
    with pytest.raises(ValueError, match="normalizers"):
        holder_fit(short)


# ---------------------------------------------------------------- distances


def test_boundary_distance_frozen():
    region = Box.cube((0.0, 0.0), 0.25)
    domain = Box.cube((0.0, 0.0), 1.0)
    ctx = IntrinsicMetricContext(sup_norm=16.0, exponents=P24)
    # weights (4, 1), gaps 0.75: min(4 * 0.75^{1/2}, 0.75) = 0.75
    assert boundary_p_distance(region, domain, ctx) == 0.75


def test_boundary_distance_picks_nearest_face():
    domain = Box.cube((0.0, 0.0), 1.0)
    ctx = IntrinsicMetricContext(sup_norm=1.0, exponents=P22)
    shifted = Box.cube((0.6, 0.0), 0.25)
    # gaps: x faces (1.35, 0.15), y faces (0.75, 0.75)
    assert boundary_p_distance(shifted, domain, ctx) == pytest.approx(0.15)
    touching = Box.cube((0.75, 0.0), 0.25)
    assert boundary_p_distance(touching, domain, ctx) == 0.0


# ---------------------------------------------------------------- decay


def test_decay_validation():
    grid = Grid(Box.cube((0.0, 0.0), 1.0), (33, 33))
    u = GridFunction.from_callable(grid, lambda x, y: x)
    with pytest.raises(ValueError):
        oscillation_decay(u, P22, (0.0, 0.0), rho0=0.6)
    with pytest.raises(ValueError):
        oscillation_decay(u, P22, (0.0, 0.0), rho0=0.0)
    with pytest.raises(ValueError):
        oscillation_decay(u, P22, (0.0, 0.0), rho0=0.25, m_max=0)
    with pytest.raises(ValueError, match="2x margin"):
        oscillation_decay(u, P22, (0.8, 0.0), rho0=0.2)
    # reference cube spanning the whole domain leaves no boundary gap
    with pytest.raises(ValueError, match="touches the domain boundary"):
        oscillation_decay(u, P22, (0.0, 0.0), rho0=0.5)


def test_decay_constant_field_degenerate():
    grid = Grid(Box.cube((0.0, 0.0), 1.0), (33, 33))
    u = GridFunction(grid, np.full((33, 33), 4.0))
    trace = oscillation_decay(u, P22, (0.0, 0.0), rho0=0.25)
    assert trace.degenerate
    assert len(trace.rows) == 1
    assert trace.rows[0].oscillation == 0.0
    assert trace.report().state == "degenerate"


def test_decay_seed_row_and_normalization():
    grid = Grid(Box.cube((0.0, 0.0), 1.0), (129, 129))
    u = GridFunction.from_callable(grid, lambda x, y: 3.0 * x + 1.0)
    trace = oscillation_decay(u, P22, (0.0, 0.0), rho0=0.45, q=0)
    seed = trace.rows[0]
    assert seed.index == 0
    assert seed.oscillation == 1.0  # normalized reference oscillation
    assert seed.rho_scale == 0.9
    # outermost nodes inside the cube sit at +-57/64, and the dyadic
    # arithmetic below is exact: osc = 3 * 2 * 0.890625
    assert trace.normalization.scale == 5.34375
    assert trace.normalization.shift == -1.671875
    scales = [r.distance_scale for r in trace.rows]
    assert all(b < a for a, b in zip(scales, scales[1:]))


def test_decay_affine_field_exponent_near_one():
    grid = Grid(Box.cube((0.0, 0.0), 1.0), (129, 129))
    u = GridFunction.from_callable(grid, lambda x, y: 0.7 * x + 0.2 * y)
    trace = oscillation_decay(u, P22, (0.0, 0.0), rho0=0.45, q=0)
    assert len(trace.rows) >= 3
    fit = holder_fit(trace)
    assert fit.alpha == pytest.approx(1.0, abs=0.05)
    assert fit.residual < 0.05
    assert trace.report(fit=fit).state == "pass"


def test_decay_under_resolution_is_flagged():
    # coarse grid: the second intrinsic cylinder falls under 4 nodes
    grid = Grid(Box.cube((0.0, 0.0), 1.0), (17, 17))
    u = GridFunction.from_callable(grid, lambda x, y: x + 0.3 * np.sin(2 * y))
    trace = oscillation_decay(u, P22, (0.0, 0.0), rho0=0.25, q=1)
    assert trace.under_resolved
    assert all(r.min_nodes >= 4 for r in trace.rows[1:])


def test_decay_on_solved_field_smoke(holder_iso):
    u = holder_iso["report"].solution
    trace = oscillation_decay(u, holder_iso["p"], (0.0, 0.0), rho0=0.45, q=0)
    assert len(trace.rows) >= 3
    fit = holder_fit(trace)
    assert fit.alpha > 0.0
    assert trace.report(fit=fit).state == "pass"


# ---------------------------------------------------------------- modulus


def test_modulus_validation():
    grid = Grid(Box.cube((0.0, 0.0), 1.0), (33, 33))
    u = GridFunction.from_callable(grid, lambda x, y: x)
    big = Box.cube((0.0, 0.0), 2.0)
    with pytest.raises(ValueError, match="escapes"):
        modulus_check(u, P22, big, alpha=1.0, gamma=1.0)
    region = Box.cube((0.0, 0.0), 0.5)
    with pytest.raises(ValueError):
        modulus_check(u, P22, region, alpha=1.0, gamma=1.0, threshold=0.0)
    touching = Box.cube((0.0, 0.0), 1.0)
    with pytest.raises(ValueError, match="touches"):
        modulus_check(u, P22, touching, alpha=1.0, gamma=1.0)
    with pytest.raises(ValueError, match="shape"):
        modulus_check(u, P22, region, alpha=1.0, gamma=1.0,
                      points=np.zeros((5, 3, 2)))
    outside = np.full((1, 2, 2), 0.9)
    with pytest.raises(ValueError, match="outside"):
        modulus_check(u, P22, region, alpha=1.0, gamma=1.0, points=outside)


def test_modulus_zero_field_degenerate():
    grid = Grid(Box.cube((0.0, 0.0), 1.0), (17, 17))
    u = GridFunction(grid, np.zeros((17, 17)))
    rep = modulus_check(u, P22, Box.cube((0.0, 0.0), 0.5), alpha=1.0,
                        gamma=1.0)
    assert rep.state == "degenerate"


def test_modulus_affine_field_exact_constant():
    # u = x with p = (2,2): |u(x)-u(y)| = |x1-y1| <= d(x,y), and the
    # claim with gamma*sup/D = 1 holds with equality on axis pairs
    grid = Grid(Box.cube((0.0, 0.0), 1.0), (65, 65))
    u = GridFunction.from_callable(grid, lambda x, y: x)
    region = Box.cube((0.0, 0.0), 0.5)
    # sup = 1, D = 0.5: choose gamma = 0.5 so gamma*sup/D^alpha... use
    # alpha=1: rhs = gamma * 1 * (d/0.5) = 2 gamma d; lhs <= d
    rep = modulus_check(u, P22, region, alpha=1.0, gamma=0.5, pairs=4000,
                        seed=1)
    assert rep.state == "pass"
    assert rep.details["pass_fraction"] == 1.0
    tight = modulus_check(u, P22, region, alpha=1.0, gamma=0.25, pairs=4000,
                          seed=1)
    assert tight.state == "fail"


def test_modulus_calibrate_then_verify(holder_iso):
    u = holder_iso["report"].solution
    p = holder_iso["p"]
    region = Box.cube((0.0, 0.0), 0.5)
    cal = modulus_check(u, p, region, alpha=1.0, gamma=1.0, pairs=6000,
                        seed=0)
    gamma = 1.05 * cal.details["implied_gamma"]
    rep = modulus_check(u, p, region, alpha=1.0, gamma=gamma, pairs=6000,
                        seed=11)
    assert rep.state == "pass"
    assert rep.details["pass_fraction"] >= 0.99
    neg = modulus_check(u, p, region, alpha=1.0, gamma=gamma / 3.0,
                        pairs=6000, seed=11)
    assert neg.state == "fail"


def test_modulus_deterministic_given_seed(holder_iso):
    u = holder_iso["report"].solution
    p = holder_iso["p"]
    region = Box.cube((0.0, 0.0), 0.5)
    a = modulus_check(u, p, region, alpha=1.0, gamma=0.5, pairs=500, seed=7)
    b = modulus_check(u, p, region, alpha=1.0, gamma=0.5, pairs=500, seed=7)
    assert a.to_dict() == b.to_dict()


def test_modulus_explicit_points_bypass_sampling():
    grid = Grid(Box.cube((0.0, 0.0), 1.0), (33, 33))
    u = GridFunction.from_callable(grid, lambda x, y: x)
    region = Box.cube((0.0, 0.0), 0.5)
    pts = np.array([[[0.0, 0.0], [0.25, 0.0]], [[-0.1, 0.2], [0.3, -0.4]]])
    rep = modulus_check(u, P22, region, alpha=1.0, gamma=0.5, points=pts)
    assert rep.details["pairs"] == 2
    assert rep.state == "pass"
