import numpy as np
import pytest

from anisolab import (
    Box,
    CutoffProfile,
    ExponentVector,
    Grid,
    GridFunction,
    integrate,
    level_set_measure,
    oscillation,
    partial_difference,
    region_measure,
    troisi_check,
    truncate,
)
from anisolab.lattice import (
    cutoff,
    export_csv,
    load_field,
    lp_seminorm,
    save_field,
    set_reduction_mode,
)


def unit_grid_1d(n=33):
    return Grid(Box.cube((0.5,), 0.5), (n,))


def sym_grid_2d(n=33):
    return Grid(Box.cube((0.0, 0.0), 1.0), (n, n))


# -- boxes and grids ---------------------------------------------------------


def test_box_geometry():
    b = Box((0.0, 1.0), (1.0, 2.0))
    assert b.ndim == 2
    assert b.volume == pytest.approx(2.0 * 4.0)
    assert np.allclose(b.lo, [-1.0, -1.0]) and np.allclose(b.hi, [1.0, 3.0])


def test_box_shrunk_scales_half_widths():
    b = Box.cube((0.0, 0.0), 1.0).shrunk(0.5)
    assert np.allclose(b.half_widths, [0.5, 0.5])
    with pytest.raises(ValueError):
        Box.cube((0.0,), 1.0).shrunk(0.0)


def test_box_contains_with_snap_tolerance():
    outer = Box.cube((0.0, 0.0), 1.0)
    assert outer.contains(Box.cube((0.0, 0.0), 1.0))
    assert outer.contains(Box.cube((0.0, 0.0), 1.0 + 1e-10))
    assert not outer.contains(Box.cube((0.0, 0.0), 1.01))


def test_box_requires_positive_half_widths():
    with pytest.raises(ValueError):
        Box((0.0,), (0.0,))


def test_grid_spacing_and_axes():
    g = sym_grid_2d(33)
    assert g.spacing == pytest.approx((2.0 / 32.0, 2.0 / 32.0))
    assert g.axes[0][0] == -1.0 and g.axes[0][-1] == 1.0
    assert g.shape == (33, 33)
    with pytest.raises(ValueError):
        Grid(Box.cube((0.0,), 1.0), (1,))


def test_grid_refined_doubles_resolution():
    g = sym_grid_2d(33).refined()
    assert g.shape == (65, 65)
    assert g.box.volume == pytest.approx(4.0)


def test_axis_weights_partition_axis_length():
    g = sym_grid_2d(17)
    w = g.axis_weights(0, None)
    assert w.sum() == pytest.approx(2.0, rel=1e-14)
    # faces carry half cells
    assert w[0] == pytest.approx(w[1] / 2.0)


def test_region_measure_full_box_exact():
    g = sym_grid_2d(33)
    assert region_measure(g, g.box) == pytest.approx(4.0, rel=1e-14)
    assert region_measure(g, Box.cube((0.0, 0.0), 0.5)) == pytest.approx(
        1.0, rel=1e-12
    )


# -- calculus ----------------------------------------------------------------


def test_integrate_exact_on_affine():
    g = sym_grid_2d(33)
    f = GridFunction.from_callable(g, lambda x, y: 0.3 + 1.7 * x - 0.4 * y)
    assert integrate(f) == pytest.approx(0.3 * 4.0, abs=1e-12)


def test_partial_difference_exact_on_affine():
    g = sym_grid_2d(17)
    f = GridFunction.from_callable(g, lambda x, y: 2.0 * x - 3.0 * y + 1.0)
    dx = partial_difference(f, 0).values
    dy = partial_difference(f, 1).values
    assert np.allclose(dx, 2.0, atol=1e-12)
    assert np.allclose(dy, -3.0, atol=1e-12)


def test_truncate_decomposition_identity():
    g = sym_grid_2d(21)
    rng = np.random.default_rng(5)
    # dyadic values keep every +/- step exact, so equality is bitwise
    f = GridFunction(g, rng.integers(-8, 8, size=g.shape).astype(float) * 0.25)
    k = 0.5
    plus = truncate(f, k, "plus").values
    minus = truncate(f, k, "minus").values
    assert np.array_equal(k + plus - minus, f.values)
    assert np.all(plus >= 0.0) and np.all(minus >= 0.0)
    with pytest.raises(ValueError):
        truncate(f, 0.0, "sideways")


def test_truncate_kinked_integral_dyadic_exact():
    g = unit_grid_1d(33)  # node at exactly 0.5
    f = GridFunction.from_callable(g, lambda x: x)
    t = truncate(f, 0.5, "plus")
    assert integrate(t) == pytest.approx(0.125, abs=1e-15)
    assert integrate(truncate(f, 2.0, "plus")) == 0.0
    assert integrate(truncate(f, -1.0, "minus")) == 0.0


def test_level_set_measure_halfspace():
    g = Grid(Box.cube((0.5, 0.5), 0.5), (33, 33))
    f = GridFunction.from_callable(g, lambda x, y: x)
    m = level_set_measure(f, 0.25, "above", g.box)
    assert abs(m - 0.75) <= g.spacing[0]
    assert level_set_measure(GridFunction.constant(g, 0.0), -1.0, "above") == (
        pytest.approx(1.0)
    )
    assert level_set_measure(GridFunction.constant(g, 0.0), 1.0, "above") == 0.0


def test_level_set_partition_is_exact():
    g = Grid(Box.cube((0.5, 0.5), 0.5), (33, 33))
    f = GridFunction.from_callable(g, lambda x, y: x)
    k = 0.25  # a node value: all three classes populated
    above = level_set_measure(f, k, "above", g.box)
    below = level_set_measure(f, k, "below", g.box)
    equal = level_set_measure(f, k, "equal", g.box)
    assert above + below + equal == pytest.approx(region_measure(g, g.box), rel=1e-14)
    assert equal > 0.0


def test_level_set_monotone_in_level():
    g = sym_grid_2d(33)
    rng = np.random.default_rng(11)
    f = GridFunction(g, rng.normal(size=g.shape))
    levels = np.linspace(-2, 2, 21)
    measures = [level_set_measure(f, k, "above", g.box) for k in levels]
    assert all(b <= a + 1e-14 for a, b in zip(measures, measures[1:]))


def test_oscillation_values():
    g = sym_grid_2d(33)
    c = GridFunction.constant(g, 3.25)
    assert oscillation(c, g.box) == (3.25, 3.25, 0.0)
    f = GridFunction.from_callable(g, lambda x, y: x)
    assert oscillation(f, Box.cube((0.0, 0.0), 0.5))[2] == pytest.approx(1.0)
    xy = GridFunction.from_callable(g, lambda x, y: x * y)
    mu_p, mu_m, om = oscillation(xy, g.box)
    assert (mu_p, mu_m, om) == (1.0, -1.0, 2.0)


def test_oscillation_shift_and_scale():
    g = sym_grid_2d(17)
    rng = np.random.default_rng(2)
    f = GridFunction(g, rng.normal(size=g.shape))
    _, _, om = oscillation(f)
    _, _, om_shift = oscillation(GridFunction(g, f.values + 5.0))
    _, _, om_scaled = oscillation(GridFunction(g, 3.0 * f.values))
    assert om_shift == pytest.approx(om, rel=1e-14)
    assert om_scaled == pytest.approx(3.0 * om, rel=1e-14)


# -- cutoffs -----------------------------------------------------------------


def test_cutoff_ramp_value_1d():
    g = unit_grid_1d(33)
    outer = Box.cube((0.5,), 0.5)
    inner = outer.shrunk(0.5)
    prof = CutoffProfile(outer, inner, ExponentVector((3.0,)))
    z = prof.evaluate(g)
    # x = 0.875 sits halfway down the ramp [0.75, 1.0]: value 0.5^3
    idx = int(np.argmin(np.abs(g.axes[0] - 0.875)))
    assert g.axes[0][idx] == pytest.approx(0.875)
    assert z.values[idx] == pytest.approx(0.125, rel=1e-12)
    # 1 on the inner box, 0 at the outer faces
    assert z.values[len(g.axes[0]) // 2] == 1.0
    assert z.values[0] == 0.0 and z.values[-1] == 0.0


def test_cutoff_range_and_slope_bound():
    g = sym_grid_2d(33)
    outer = Box.cube((0.0, 0.0), 0.8)
    inner = outer.shrunk(0.25)
    p = ExponentVector((1.9, 2.4))
    prof = CutoffProfile(outer, inner, p)
    z = cutoff(g, outer, inner, p)
    assert np.all(z.values >= 0.0) and np.all(z.values <= 1.0)
    for axis in range(2):
        raw = prof.axis_profile(axis, g.axes[axis])
        slopes = np.abs(np.diff(raw)) / g.spacing[axis]
        assert np.all(slopes <= prof.slope_bound(axis) * (1.0 + 1e-12))


def test_cutoff_rejects_touching_inner_box():
    outer = Box.cube((0.0, 0.0), 1.0)
    with pytest.raises(ValueError):
        CutoffProfile(outer, outer, ExponentVector((2.0, 2.0)))


def test_cutoff_root_recovers_axis_power():
    g = unit_grid_1d(65)
    outer = Box.cube((0.5,), 0.5)
    prof = CutoffProfile(outer, outer.shrunk(0.5), ExponentVector((3.0,)))
    z = prof.evaluate(g).values
    r = prof.evaluate_root(g, 3.0).values
    assert np.allclose(r ** 3.0, z, atol=1e-13)


# -- seminorms and the embedding check ---------------------------------------


def test_lp_seminorm_closed_forms():
    g = Grid(Box.cube((0.5, 0.5), 0.5), (33, 33))
    const = GridFunction.constant(g, 4.0)
    assert lp_seminorm(const, 0, 2.0) == 0.0
    lin = GridFunction.from_callable(g, lambda x, y: x)
    assert lp_seminorm(lin, 0, 3.5) == pytest.approx(1.0, rel=1e-12)
    steep = GridFunction.from_callable(g, lambda x, y: 2.0 * x)
    assert lp_seminorm(steep, 0, 3.0) == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(ValueError):
        lp_seminorm(lin, 0, 0.5)


def _hat_3d(grid):
    prof = CutoffProfile(
        grid.box, grid.box.shrunk(1e-9 + 1e-12), ExponentVector((2.0, 2.0, 2.0))
    )
    # tensor hat: shrinking the flat region to a point leaves pure ramps
    vals = np.ones(grid.shape)
    for j in range(3):
        ramp = 1.0 - np.abs(grid.axes[j]) / grid.box.half_widths[j]
        vals = vals * ramp.reshape([-1 if a == j else 1 for a in range(3)])
    del prof
    return GridFunction(grid, vals)


def test_troisi_finite_ratio_and_homogeneity():
    g = Grid(Box.cube((0.0, 0.0, 0.0), 1.0), (17, 17, 17))
    f = _hat_3d(g)
    rep = troisi_check(f, ExponentVector((2.0, 2.0, 2.0)), seed=0)
    assert rep.state == "pass"
    base = rep.empirical_gamma
    assert np.isfinite(base) and base > 0.0
    rng = np.random.default_rng(20)
    for lam in rng.uniform(0.01, 100.0, 20):
        scaled = troisi_check(
            GridFunction(g, lam * f.values), ExponentVector((2.0, 2.0, 2.0))
        )
        assert scaled.empirical_gamma == pytest.approx(base, rel=1e-10)


def test_troisi_degenerate_and_errors():
    g = Grid(Box.cube((0.0, 0.0, 0.0), 1.0), (9, 9, 9))
    zero = GridFunction.constant(g, 0.0)
    assert troisi_check(zero, ExponentVector((2.0, 2.0, 2.0))).state == "degenerate"
    bad_trace = GridFunction.constant(g, 1.0)
    with pytest.raises(ValueError, match="boundary"):
        troisi_check(bad_trace, ExponentVector((2.0, 2.0, 2.0)))
    with pytest.raises(ValueError, match="pbar"):
        troisi_check(zero, ExponentVector((4.0, 4.0, 4.0)))


# -- sampling, reduction modes, serialization ---------------------------------


def test_sample_multilinear_exact_on_bilinear():
    g = sym_grid_2d(17)
    f = GridFunction.from_callable(g, lambda x, y: x * y + 0.5 * x - 0.3)
    rng = np.random.default_rng(8)
    pts = rng.uniform(-1.0, 1.0, size=(64, 2))
    got = f.sample(pts)
    want = pts[:, 0] * pts[:, 1] + 0.5 * pts[:, 0] - 0.3
    assert np.allclose(got, want, atol=1e-13)


def test_reduction_modes_agree():
    g = sym_grid_2d(65)
    rng = np.random.default_rng(13)
    f = GridFunction(g, rng.normal(size=g.shape))
    try:
        set_reduction_mode("fixed")
        a = integrate(f)
        set_reduction_mode("blocked")
        b = integrate(f)
    finally:
        set_reduction_mode("fixed")
    assert b == pytest.approx(a, rel=1e-12)
    with pytest.raises(ValueError):
        set_reduction_mode("vectorized-ish")


def test_field_round_trip(tmp_path):
    g = sym_grid_2d(9)
    f = GridFunction.from_callable(g, lambda x, y: np.sin(x) + y)
    path = tmp_path / "field.bin"
    save_field(f, path)
    g2 = load_field(path)
    assert g2.grid.shape == g.shape
    assert np.array_equal(g2.values, f.values)
    assert np.allclose(g2.grid.box.half_widths, g.box.half_widths)


def test_export_csv_smoke(tmp_path):
    g = sym_grid_2d(5)
    f = GridFunction.from_callable(g, lambda x, y: x + y)
    path = tmp_path / "slice.csv"
    export_csv(f, path)
    text = path.read_text().strip().splitlines()
    assert len(text) == 5 * 5 + 1  # header + rows


def test_grid_function_rejects_nonfinite():
    g = sym_grid_2d(5)
    vals = np.zeros(g.shape)
    vals[2, 2] = np.nan
    with pytest.raises(ValueError):
        GridFunction(g, vals)
