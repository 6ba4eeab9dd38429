import time

import numpy as np
import pytest

from nngp import (
    Activation,
    GridParameterError,
    NonFiniteActivationError,
    TableRangeError,
    build_grid,
    default_grid,
    expectation_direct,
    interpolate,
    load_table,
    populate,
    save_table,
)
from nngp.lookup import cache_path, load_or_build

from .oracles import gh_expectation, gh_moment, relu_f_closed


# ---------------------------------------------------------------------------
# grid construction
# ---------------------------------------------------------------------------

def test_default_grid_constants():
    g = default_grid()
    assert g.n_g == 501 and g.n_v == 501 and g.n_c == 500
    assert g.s_max == 100.0
    assert g.u_max == pytest.approx(10.0 * np.sqrt(2.0))


def test_tiny_grid_linear_spacing():
    g = build_grid(3, 2, 2, 2.0, 1.0)
    np.testing.assert_array_equal(g.u, [-2.0, 0.0, 2.0])
    np.testing.assert_array_equal(g.s, [0.0, 1.0])


def test_grid_u_symmetric_s_increasing_c_interior():
    g = build_grid(51, 11, 10, 4.0, 9.0)
    np.testing.assert_allclose(g.u, -g.u[::-1], atol=0)
    assert np.all(np.diff(g.u) > 0)
    assert g.s[0] == 0.0 and np.all(np.diff(g.s) > 0)
    assert np.all(np.diff(g.c) > 0)
    assert g.c[0] > -1.0 and g.c[-1] < 1.0
    # centers of n_c equal subintervals, symmetric about 0
    np.testing.assert_allclose(g.c, -g.c[::-1], atol=1e-15)


def test_grid_rejects_smax_at_least_umax_squared():
    with pytest.raises(GridParameterError, match="s_max < u_max"):
        build_grid(2, 2, 2, 1.0, 2.0)


@pytest.mark.parametrize("kwargs", [
    dict(n_g=1, n_v=2, n_c=2, u_max=2.0, s_max=1.0),
    dict(n_g=3, n_v=1, n_c=2, u_max=2.0, s_max=1.0),
    dict(n_g=3, n_v=2, n_c=1, u_max=2.0, s_max=1.0),
    dict(n_g=3, n_v=2, n_c=2, u_max=-2.0, s_max=1.0),
    dict(n_g=3, n_v=2, n_c=2, u_max=2.0, s_max=0.0),
])
def test_grid_rejects_bad_parameters(kwargs):
    with pytest.raises(GridParameterError):
        build_grid(**kwargs)


# ---------------------------------------------------------------------------
# population: FFT-structured sums equal the naive double sum
# ---------------------------------------------------------------------------

def _naive_cell(phi_fn, u, s, c):
    det = s * s * (1.0 - c * c)
    quad = (s * (u[:, None] ** 2 + u[None, :] ** 2)
            - 2.0 * s * c * u[:, None] * u[None, :]) / det
    w = np.exp(-0.5 * quad)
    f = phi_fn(u)
    return float(f @ w @ f / w.sum())


@pytest.mark.parametrize("phi_name,phi_fn", [("relu", lambda u: np.maximum(u, 0.0)),
                                             ("tanh", np.tanh)])
def test_populate_equals_naive_double_sum(phi_name, phi_fn):
    grid = build_grid(101, 21, 24, 10.0, 25.0)
    table = populate(grid, phi_name)
    rng = np.random.default_rng(0)
    for i in rng.integers(1, grid.n_v, size=6):
        for j in rng.integers(0, grid.n_c, size=6):
            want = _naive_cell(phi_fn, grid.u, grid.s[i], grid.c[j])
            assert table.f2d[i, j] == pytest.approx(want, rel=1e-10, abs=1e-13)


def test_zero_variance_row_is_phi_of_zero_squared(small_relu_table, small_tanh_table):
    assert np.all(small_relu_table.f2d[0] == 0.0)
    assert np.all(small_tanh_table.f2d[0] == 0.0)
    assert small_relu_table.f1d[0] == 0.0


def test_populate_rejects_nonfinite_activation():
    exploding = Activation("bad", lambda u: np.where(np.abs(u) > 3, np.inf, u), odd=False)
    with pytest.raises(NonFiniteActivationError, match="grid point"):
        populate(build_grid(51, 5, 6, 4.0, 9.0), exploding)


def test_custom_activation_table_usable_in_session():
    softsign = Activation("softsign", lambda u: u / (1.0 + np.abs(u)), odd=True)
    grid = build_grid(101, 21, 24, 10.0, 25.0)
    table = populate(grid, softsign)
    got = interpolate(table, 0.5, 2.5)  # on a variance grid node
    want = expectation_direct(softsign, 0.5, 2.5, 2.5, grid)
    assert got == pytest.approx(want, rel=5e-3)
    # the on-disk format only carries a tag; unregistered tags refuse to load
    import tempfile

    with tempfile.NamedTemporaryFile(suffix=".lut") as fh:
        save_table(table, fh.name)
        with pytest.raises(ValueError, match="softsign"):
            load_table(fh.name)


# ---------------------------------------------------------------------------
# oracle values on the default grid
# ---------------------------------------------------------------------------

def test_relu_second_moment_is_half_variance(relu_table):
    # E[relu(u)^2] = s/2 under N(0, s); diagonal (c -> 1) entry at s = 4
    assert interpolate(relu_table, 4.0, 4.0) == pytest.approx(2.0, abs=1e-8)
    assert gh_moment(lambda u: np.maximum(u, 0.0), 4.0) == pytest.approx(2.0, abs=1e-12)


def test_relu_independent_case_matches_closed_form(relu_table):
    # c = 0: E[relu(u)]^2 = s / (2 pi)
    want = 4.0 / (2.0 * np.pi)
    assert interpolate(relu_table, 0.0, 4.0) == pytest.approx(want, rel=1e-3)
    assert relu_f_closed(0.0, 4.0, 4.0) == pytest.approx(want, rel=1e-12)


def test_tanh_zero_variance_expectation_is_zero(tanh_table):
    assert interpolate(tanh_table, 0.0, 0.0) == 0.0


def test_interpolate_zero_variance_returns_phi0_squared(small_relu_table):
    out = interpolate(small_relu_table, np.array([0.0, 0.0]), 0.0)
    np.testing.assert_array_equal(out, [0.0, 0.0])


def test_interpolate_range_error_mentions_rebuild(small_relu_table):
    with pytest.raises(TableRangeError, match="s_max"):
        interpolate(small_relu_table, 0.0, 17.0)


def test_interpolate_rejects_covariance_above_variance(small_relu_table):
    with pytest.raises(ValueError, match="k_xy"):
        interpolate(small_relu_table, 3.0, 2.0)


def test_interpolate_scalar_and_vector_agree(small_tanh_table):
    vec = interpolate(small_tanh_table, np.array([0.3, -0.2, 0.9]), 1.0)
    for k_xy, want in zip([0.3, -0.2, 0.9], vec):
        assert interpolate(small_tanh_table, k_xy, 1.0) == pytest.approx(want)


# ---------------------------------------------------------------------------
# invariants
# ---------------------------------------------------------------------------

def test_cauchy_schwarz_bound(relu_table, tanh_table):
    for table in (relu_table, tanh_table):
        bound = table.f1d[:, None] + 1e-9
        assert np.all(np.abs(table.f2d) <= bound)


def test_f1d_nonnegative(relu_table, tanh_table):
    assert np.all(relu_table.f1d >= 0.0)
    assert np.all(tanh_table.f1d >= 0.0)


def test_tanh_antisymmetry_in_correlation(tanh_table):
    # symmetric u grid makes the quadrature exactly antisymmetric in c
    flipped = tanh_table.f2d[:, ::-1]
    np.testing.assert_allclose(tanh_table.f2d, -flipped, atol=1e-9)


def test_relu_monotone_in_correlation(relu_table):
    assert np.all(np.diff(relu_table.f2d, axis=1) >= -1e-12)


@pytest.mark.parametrize("phi", ["relu", "tanh"])
def test_interpolation_matches_offgrid_quadrature(phi, relu_table, tanh_table):
    # bilinear interpolation vs the same quadrature evaluated off-grid
    table = relu_table if phi == "relu" else tanh_table
    rng = np.random.default_rng(5)
    s_vals = rng.uniform(0.5, 90.0, size=12)
    c_vals = rng.uniform(-0.95, 0.95, size=12)
    for s, c in zip(s_vals, c_vals):
        direct = expectation_direct(phi, c * s, s, s, table.grid)
        approx = interpolate(table, c * s, s)
        assert approx == pytest.approx(direct, rel=1e-3, abs=1e-9)


def test_direct_quadrature_matches_relu_closed_form():
    # Gauss-Hermite converges poorly across ReLU's kink, so the exact
    # arccosine expectation is the independent reference here
    grid = default_grid()
    rng = np.random.default_rng(9)
    for _ in range(8):
        k_xx = rng.uniform(0.2, 8.0)
        k_yy = rng.uniform(0.2, 8.0)
        rho = rng.uniform(-0.98, 0.98)
        k_xy = rho * np.sqrt(k_xx * k_yy)
        a = expectation_direct("relu", k_xy, k_xx, k_yy, grid)
        b = relu_f_closed(k_xy, k_xx, k_yy)
        assert a == pytest.approx(b, rel=2e-3, abs=1e-9)


def test_direct_quadrature_matches_gauss_hermite_for_tanh():
    grid = default_grid()
    rng = np.random.default_rng(9)
    for _ in range(8):
        k_xx = rng.uniform(0.2, 8.0)
        k_yy = rng.uniform(0.2, 8.0)
        rho = rng.uniform(-0.98, 0.98)
        k_xy = rho * np.sqrt(k_xx * k_yy)
        a = expectation_direct("tanh", k_xy, k_xx, k_yy, grid)
        b = gh_expectation(np.tanh, k_xy, k_xx, k_yy)
        assert a == pytest.approx(b, rel=2e-4, abs=1e-9)


def test_populate_cost_linear_in_variance_count():
    # doubling n_v should roughly double the build time
    grid_a = build_grid(201, 41, 40, 16.0, 16.0)
    grid_b = build_grid(201, 161, 40, 16.0, 16.0)
    t0 = time.perf_counter()
    populate(grid_a, "tanh")
    dt_a = time.perf_counter() - t0
    t0 = time.perf_counter()
    populate(grid_b, "tanh")
    dt_b = time.perf_counter() - t0
    # 4x the variance rows; allow generous wall-clock slop
    assert dt_b / dt_a > 1.5


def test_interpolate_is_constant_time(relu_table, small_relu_table):
    def once(table):
        t0 = time.perf_counter()
        for _ in range(200):
            interpolate(table, 0.7, 2.0)
        return time.perf_counter() - t0

    once(relu_table)  # warm
    big, small = once(relu_table), once(small_relu_table)
    assert big < 50 * max(small, 1e-9)


# ---------------------------------------------------------------------------
# serialization and cache
# ---------------------------------------------------------------------------

def test_save_load_roundtrip(tmp_path, small_tanh_table):
    path = tmp_path / "t.lut"
    save_table(small_tanh_table, path)
    back = load_table(path)
    np.testing.assert_array_equal(back.f2d, small_tanh_table.f2d)
    np.testing.assert_array_equal(back.f1d, small_tanh_table.f1d)
    assert back.nonlinearity == "tanh"
    assert back.grid.u_max == small_tanh_table.grid.u_max
    assert back.grid.s_max == small_tanh_table.grid.s_max


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.lut"
    path.write_bytes(b"NOTALUT!" + b"\0" * 64)
    with pytest.raises(ValueError, match="magic"):
        load_table(path)


def test_load_rejects_truncated_file(tmp_path, small_relu_table):
    path = tmp_path / "trunc.lut"
    save_table(small_relu_table, path)
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(ValueError, match="bytes"):
        load_table(path)


def test_cache_roundtrip(tmp_path):
    grid = build_grid(51, 5, 6, 4.0, 9.0)
    first = load_or_build("relu", grid, directory=tmp_path)
    assert cache_path("relu", grid, tmp_path).exists()
    second = load_or_build("relu", grid, directory=tmp_path)
    np.testing.assert_array_equal(first.f2d, second.f2d)
