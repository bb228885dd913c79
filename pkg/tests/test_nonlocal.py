import numpy as np
import pytest

from charflow.model import CharState, uniform_grid, validate_params
from charflow.nonlocal_ops import (
    GridTooLargeForOracle,
    IntegrandPair,
    convolution_bound_check,
    eval_nonlocal_fast,
    eval_nonlocal_naive,
    integrand_pair,
    metric_profile,
)
from charflow.transform import GaussianBump, PeakonSum, initialize_state

from conftest import random_valid_state

FIELDS = ("P", "Px", "Q", "Qx")


def rel_maxnorm(a, b):
    denom = np.max(np.abs(b))
    if denom == 0.0:
        return 0.0 if np.max(np.abs(a)) == 0.0 else np.inf
    return np.max(np.abs(a - b)) / denom


def make_grid_state(N, dy, u, v, xi):
    grid = uniform_grid(0.0, dy * (N - 1), N)
    return grid, CharState(T=0.0, u=u, v=v, xi=xi, x=grid.nodes.copy())


def test_metric_fully_degenerate():
    p = validate_params(1, 10.0, 64)
    g, st = make_grid_state(64, 0.1, np.zeros(64), np.full(64, np.pi), np.full(64, 1.3))
    X = metric_profile(st, p, g).X
    assert np.max(np.abs(X)) < 1e-30


def test_metric_constant_integrand_exact():
    p = validate_params(2, 10.0, 128)
    g, st = make_grid_state(128, 0.05, np.zeros(128), np.zeros(128), np.ones(128))
    X = metric_profile(st, p, g).X
    assert np.max(np.abs(X - 0.05 * np.arange(128))) < 1e-13


def test_metric_matches_initial_positions():
    residuals = []
    for N in (512, 1024):
        p = validate_params(1, 10.0, N)
        grid, st = initialize_state(GaussianBump(amplitude=1.0, width=0.8), p)
        X = metric_profile(st, p, grid).X
        residuals.append(np.max(np.abs(X - (st.x - st.x[0]))))
    assert residuals[0] < 1e-4
    assert np.log2(residuals[0] / residuals[1]) > 1.9


def test_metric_continuous_across_seams():
    # duplicated corner labels produce a zero-width panel with zero increment
    p = validate_params(0, 20.0, 512)
    grid, st = initialize_state(PeakonSum(peaks=((1.0, -2.0), (-0.5, 3.0))), p)
    assert grid.n_segments == 3
    X = metric_profile(st, p, grid).X
    for j in grid.seam_panels():
        assert X[j + 1] == X[j]
    assert np.all(np.diff(X) >= 0)


def test_metric_nondecreasing_on_random_states(rng):
    p = validate_params(2, 10.0, 256)
    for _ in range(20):
        g, st = random_valid_state(rng, p, 0.05)
        X = metric_profile(st, p, g).X
        assert X[0] == 0.0
        assert np.all(np.diff(X) >= 0.0)


def test_integrands_zero_q_for_camassa_holm(rng):
    p = validate_params(0, 10.0, 128)
    g, st = random_valid_state(rng, p, 0.07)
    ig = integrand_pair(st, p)
    assert ig.a_Q is None
    m = metric_profile(st, p, g)
    f = eval_nonlocal_fast(m, ig, p, g)
    assert not np.any(f.Q) and not np.any(f.Qx)  # exactly zero, not approximately
    fn = eval_nonlocal_naive(m, ig, p, g)
    assert not np.any(fn.Q) and not np.any(fn.Qx)


def test_zero_integrand_gives_zero_fields():
    p = validate_params(1, 10.0, 64)
    g, st = make_grid_state(64, 0.1, np.zeros(64), np.zeros(64), np.ones(64))
    m = metric_profile(st, p, g)
    f = eval_nonlocal_fast(m, integrand_pair(st, p), p, g)
    for name in FIELDS:
        assert not np.any(getattr(f, name))


@pytest.mark.parametrize("N", [64, 256, 1024])
def test_fast_naive_equivalence(rng, N):
    p1 = validate_params(1, 10.0, N)
    p2 = validate_params(2, 10.0, N)
    dy = 12.0 / (N - 1)
    for _ in range(8):
        g, st = random_valid_state(rng, p1, dy)
        for p in (p1, p2):
            m = metric_profile(st, p, g)
            ig = integrand_pair(st, p)
            f = eval_nonlocal_fast(m, ig, p, g)
            fn = eval_nonlocal_naive(m, ig, p, g)
            for name in FIELDS:
                assert rel_maxnorm(getattr(f, name), getattr(fn, name)) < 1e-10


def test_fast_naive_equivalence_segmented():
    # the equivalence must survive seam panels
    p = validate_params(0, 20.0, 300)
    grid, st = initialize_state(PeakonSum(peaks=((1.0, -2.0), (-0.5, 3.0))), p)
    m = metric_profile(st, p, grid)
    ig = integrand_pair(st, p)
    f = eval_nonlocal_fast(m, ig, p, grid)
    fn = eval_nonlocal_naive(m, ig, p, grid)
    for name in ("P", "Px"):
        assert rel_maxnorm(getattr(f, name), getattr(fn, name)) < 1e-10


def test_compensated_path_agrees(rng):
    p = validate_params(1, 10.0, 512)
    dy = 10.0 / 511
    g, st = random_valid_state(rng, p, dy)
    m = metric_profile(st, p, g)
    ig = integrand_pair(st, p)
    f1 = eval_nonlocal_fast(m, ig, p, g)
    f2 = eval_nonlocal_fast(m, ig, p, g, compensated=True)
    for name in FIELDS:
        assert rel_maxnorm(getattr(f1, name), getattr(f2, name)) < 1e-12


def test_single_spike_reproduces_kernel_shape():
    # a one-node spike smooths to ~ (dy a0 / 2) exp(-|X - X0|) away from the
    # interpolation stencil of the spike
    N = 512
    p = validate_params(0, 10.0, N)
    dy = 14.0 / (N - 1)
    g, st = make_grid_state(N, dy, np.zeros(N), np.zeros(N), np.ones(N))
    m = metric_profile(st, p, g)
    a = np.zeros(N)
    j0 = 201
    a[j0] = 1.7
    f = eval_nonlocal_fast(m, IntegrandPair(a_P=a, a_Q=None), p, g)
    X = m.X
    expected = 0.5 * dy * a[j0] * np.exp(-np.abs(X - X[j0]))
    mask = np.abs(np.arange(N) - j0) > 6
    err = np.max(np.abs(f.P[mask] - expected[mask])) / (0.5 * dy * a[j0])
    assert err < 1e-3


def test_endpoint_degeneration(rng):
    # at y_min the left integral vanishes: P = Px there; mirrored at y_max
    p = validate_params(1, 10.0, 256)
    dy = 9.0 / 255
    g, st = random_valid_state(rng, p, dy)
    m = metric_profile(st, p, g)
    ig = integrand_pair(st, p)
    f = eval_nonlocal_fast(m, ig, p, g)
    assert f.P[0] == f.Px[0]
    assert f.P[-1] == -f.Px[-1]
    fn = eval_nonlocal_naive(m, ig, p, g)
    assert fn.P[0] == fn.Px[0]
    assert fn.P[-1] == -fn.Px[-1]


def test_parity_of_symmetric_state():
    # u even, v odd, xi even under Y -> -Y gives even P and odd Px
    N = 401
    p = validate_params(1, 10.0, N)
    dy = 12.0 / (N - 1)
    Y = np.linspace(-6, 6, N)
    u = np.exp(-(Y**2) / 3)
    v = 1.4 * Y * np.exp(-(Y**2) / 4)
    xi = 1.0 + 0.5 * np.exp(-(Y**2) / 5)
    g, st = make_grid_state(N, dy, u, v, xi)
    m = metric_profile(st, p, g)
    f = eval_nonlocal_fast(m, integrand_pair(st, p), p, g)
    scale = np.max(np.abs(f.P))
    assert np.max(np.abs(f.P - f.P[::-1])) < 1e-10 * scale
    assert np.max(np.abs(f.Px + f.Px[::-1])) < 1e-10 * scale


def test_oracle_grid_guard():
    N = 16384
    p = validate_params(0, 10.0, N)
    g, st = make_grid_state(N, 0.001, np.zeros(N), np.zeros(N), np.ones(N))
    m = metric_profile(st, p, g)
    with pytest.raises(GridTooLargeForOracle):
        eval_nonlocal_naive(m, integrand_pair(st, p), p, g)


def test_convolution_bound_zero_state():
    p = validate_params(1, 10.0, 64)
    g, st = make_grid_state(64, 0.1, np.zeros(64), np.zeros(64), np.ones(64))
    m = metric_profile(st, p, g)
    f = eval_nonlocal_fast(m, integrand_pair(st, p), p, g)
    ok, report = convolution_bound_check(f, st, p, g)
    assert ok


def test_convolution_bound_kernel_mass_constant():
    # ||g||_L1 = 9 B^2 + 2^(lam+2)/C-: for B = 1, C- = 1, lam = 1 this is 17
    N = 129
    p = validate_params(1, 10.0, N)
    dy = 8.0 / (N - 1)
    v = np.full(N, 0.1)
    v *= 1.0 / np.sqrt(np.trapezoid(v * v, dx=dy))  # discrete L2 norm exactly 1
    u = np.exp(-np.linspace(-4, 4, N) ** 2)
    g, st = make_grid_state(N, dy, u, v, np.ones(N))
    m = metric_profile(st, p, g)
    ig = integrand_pair(st, p)
    f = eval_nonlocal_fast(m, ig, p, g)
    ok, report = convolution_bound_check(f, st, p, g)
    assert ok
    sup_f, bound, margin = report["P"]
    assert abs(bound - 0.5 * 17.0 * np.max(np.abs(ig.a_P))) < 1e-12 * bound


def test_convolution_bound_on_random_states(rng):
    for lam in (0, 1, 3):
        p = validate_params(lam, 10.0, 256)
        dy = 11.0 / 255
        for _ in range(10):
            g, st = random_valid_state(rng, p, dy)
            f = eval_nonlocal_fast(metric_profile(st, p, g), integrand_pair(st, p), p, g)
            ok, report = convolution_bound_check(f, st, p, g)
            assert ok, report
