import numpy as np
import pytest

from charflow.evolve import RunConfig, energy, higher_functional, run
from charflow.model import CharState, uniform_grid, validate_params
from charflow.reconstruct import (
    BumpTestFunction,
    InsufficientSamples,
    NoCuspDetected,
    SampleOutsideDomain,
    SupportExceedsWindow,
    find_cusp,
    holder_exponent_estimate,
    lipschitz_in_Lk_check,
    measure_decompose,
    physical_energy,
    to_physical,
    weak_form_residual,
    PhysicalSolution,
)
from charflow.transform import GaussianBump, Zero, initialize_state


def collapsed_state(N=257, u_c=0.4):
    """Synthetic state with one fully collapsed label interval."""
    Y = np.linspace(-5, 5, N)
    v = np.zeros(N)
    x = Y.copy()
    core = (Y > -0.5) & (Y < 0.5)
    v[core] = np.pi  # cusp interval
    x[core] = 0.0
    x[Y >= 0.5] -= 0.5
    x[Y <= -0.5] += 0.5
    u = np.full(N, 0.0)
    u[core] = u_c
    # make u continuous into the collapsed zone
    u = u_c * np.exp(-2 * np.abs(x))
    return CharState(T=0.0, u=u, v=v, xi=np.ones(N), x=x)


def test_roundtrip_at_initial_time():
    errs = []
    for N in (512, 1024):
        p = validate_params(1, 12.0, N)
        grid, st = initialize_state(GaussianBump(amplitude=1.0, width=0.8), p)
        xs = np.linspace(-11, 11, 3001)
        phys = to_physical(st, p, xs)
        u_exact = GaussianBump(amplitude=1.0, width=0.8).value(xs)
        errs.append(np.max(np.abs(phys.u_s - u_exact)))
    assert np.log2(errs[0] / errs[1]) > 1.7  # interpolation error O(dy^2)
    assert errs[1] < 2e-4


def test_flat_panel_constant_u():
    p = validate_params(0, 10.0, 257)
    st = collapsed_state()
    xs = np.array([-1e-12, 0.0, 1e-12])
    phys = to_physical(st, p, xs)
    assert np.allclose(phys.u_s, 0.4, atol=1e-9)
    assert phys.singular_mask.all()
    assert np.isnan(phys.ux_s).all()


def test_sample_outside_domain():
    p = validate_params(0, 10.0, 257)
    st = collapsed_state()
    with pytest.raises(SampleOutsideDomain):
        to_physical(st, p, np.array([100.0]))


def test_measure_smooth_state_no_atoms():
    p = validate_params(1, 12.0, 2048)
    grid, st = initialize_state(GaussianBump(amplitude=1.0, width=0.8), p)
    xs = np.linspace(-11.9, 11.9, 8001)
    md = measure_decompose(st, p, grid, x_samples=xs)
    assert md.atoms == ()
    assert md.ac_total == md.total
    # total equals the physical quadrature of u_x^k (change of variables)
    phys_total = np.trapezoid(md.ac_density, xs)
    assert abs(phys_total - md.total) < 1e-3 * md.total
    assert abs(md.total - higher_functional(st, p, grid)) < 1e-14 * md.total


def test_measure_collapsed_state_atom():
    p = validate_params(0, 10.0, 257)
    st = collapsed_state()
    g = uniform_grid(-5.0, 5.0, 257)
    md = measure_decompose(st, p, g)
    assert len(md.atoms) == 1
    atom = md.atoms[0]
    assert abs(atom.x) < 1e-12
    assert abs(atom.u - 0.4) < 1e-12
    # mass + ac part partitions the total exactly
    assert abs((md.ac_total + atom.mass) - md.total) < 1e-15 * md.total
    # the collapsed interval carries xi sin^k = 1 over |Y| < 0.5
    assert abs(atom.mass - 1.0) < 0.05


def test_energy_equality_smooth():
    p = validate_params(1, 12.0, 2048)
    grid, st = initialize_state(GaussianBump(amplitude=1.0, width=0.8), p)
    xs = np.linspace(-11.99, 11.99, 8001)
    phys = to_physical(st, p, xs)
    E_char = energy(st, p, grid)
    E_phys = physical_energy(phys)
    assert abs(E_phys - E_char) < 2e-3 * E_char


def test_holder_fit_synthetic_power_laws():
    # estimator self-calibration on exact |x|^beta profiles
    for beta in (0.5, 0.75, 5.0 / 6.0):
        xs = np.concatenate([-np.geomspace(1e-6, 0.5, 200)[::-1], [0.0],
                             np.geomspace(1e-6, 0.5, 200)])
        u = np.abs(xs) ** beta
        phys = PhysicalSolution(
            x_s=xs, u_s=u, ux_s=np.zeros_like(xs),
            singular_mask=np.zeros(xs.size, dtype=bool),
        )
        fit = holder_exponent_estimate(phys, 0.0, window=(1e-5, 0.4))
        assert abs(fit.exponent - beta) < 0.01
        assert abs(fit.side_exponents[0] - fit.side_exponents[1]) < 1e-8


def test_holder_insufficient_samples():
    xs = np.linspace(-1, 1, 21)
    phys = PhysicalSolution(
        x_s=xs, u_s=np.abs(xs) ** 0.5, ux_s=np.zeros_like(xs),
        singular_mask=np.zeros(xs.size, dtype=bool),
    )
    with pytest.raises(InsufficientSamples):
        holder_exponent_estimate(phys, 0.0, window=(1e-3, 0.9))


def test_find_cusp():
    st = collapsed_state()
    x_star, i = find_cusp(st)
    assert abs(x_star) < 1e-12
    p = validate_params(1, 12.0, 256)
    grid, smooth = initialize_state(GaussianBump(amplitude=0.5, width=2.0), p)
    with pytest.raises(NoCuspDetected):
        find_cusp(smooth)


def test_lipschitz_zero_trajectory():
    p = validate_params(1, 10.0, 128)
    grid, st = initialize_state(Zero(), p)
    states = [CharState(T=t, u=st.u, v=st.v, xi=st.xi, x=st.x) for t in (0.0, 0.5, 1.0)]
    rep = lipschitz_in_Lk_check(states, p, np.linspace(-9, 9, 512))
    assert rep["max_ratio"] == 0.0
    assert rep["ok"]


def test_lipschitz_smooth_trajectory_stable():
    p = validate_params(1, 15.0, 512)
    u0 = GaussianBump(amplitude=0.5, width=2.0)
    cfg = RunConfig(dt=2e-3, T_end=1.0, snapshot_every=100, check_every=10**9)
    r = run(u0, p, cfg)
    states = [s.state for s in r.snapshots]
    rep = lipschitz_in_Lk_check(states, p, np.linspace(-14, 14, 2048))
    assert rep["ok"]
    assert rep["max_ratio"] < 10 * rep["ratios"][0]


def test_bump_test_function():
    b = BumpTestFunction(t_center=1.0, t_halfwidth=0.5, x_center=0.0, x_halfwidth=2.0)
    assert b.phi(1.0, 0.0) == 1.0
    assert b.phi(0.49, 0.0) == 0.0
    assert b.phi(1.0, 2.01) == 0.0
    # analytic derivatives match finite differences
    h = 1e-6
    t, x = 1.1, 0.7
    assert abs((b.phi(t + h, x) - b.phi(t - h, x)) / (2 * h) - b.phi_t(t, x)) < 1e-8
    assert abs((b.phi(t, x + h) - b.phi(t, x - h)) / (2 * h) - b.phi_x(t, x)) < 1e-8


def test_weak_residual_zero_solution():
    p = validate_params(1, 10.0, 128)
    grid, st = initialize_state(Zero(), p)
    states = [CharState(T=t, u=st.u, v=st.v, xi=st.xi, x=st.x)
              for t in np.linspace(0.0, 1.0, 11)]
    bump = BumpTestFunction(t_center=0.5, t_halfwidth=0.4, x_center=0.0, x_halfwidth=3.0)
    r_pde, r_mu = weak_form_residual(states, p, grid, bump, np.linspace(-9, 9, 512))
    assert r_pde == 0.0 and r_mu == 0.0


def test_weak_residual_support_check():
    p = validate_params(1, 10.0, 128)
    grid, st = initialize_state(Zero(), p)
    states = [CharState(T=t, u=st.u, v=st.v, xi=st.xi, x=st.x) for t in (0.0, 0.5, 1.0)]
    bump = BumpTestFunction(t_center=0.9, t_halfwidth=0.5, x_center=0.0, x_halfwidth=3.0)
    with pytest.raises(SupportExceedsWindow):
        weak_form_residual(states, p, grid, bump, np.linspace(-9, 9, 256))


def test_weak_residual_smooth_small():
    p = validate_params(1, 15.0, 1024)
    u0 = GaussianBump(amplitude=0.5, width=2.0)
    cfg = RunConfig(dt=2e-3, T_end=1.0, snapshot_every=25, check_every=10**9)
    r = run(u0, p, cfg)
    states = [s.state for s in r.snapshots]
    bump = BumpTestFunction(t_center=0.5, t_halfwidth=0.4, x_center=0.0, x_halfwidth=4.0)
    r_pde, r_mu = weak_form_residual(states, p, r.grid, bump, np.linspace(-14, 14, 2049))
    assert abs(r_pde) < 2e-3
    assert abs(r_mu) < 2e-3
