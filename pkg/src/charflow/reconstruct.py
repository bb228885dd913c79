"""Mapping label-space snapshots back to physical space.

The map Y -> x is monotone but not injective once characteristics collapse
(cusps); u is still single-valued there, u_x is not.  Sampling, the
energy-measure decomposition into absolutely continuous part (density u_x^k)
plus atoms on collapsed intervals, cusp Holder-exponent fitting, and the weak
form residuals all live here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .model import CharflowError, CharGrid, CharState, ModelParams, int_pow, node_weights
from .nonlocal_ops import physical_convolution

EPSILON_SING = 1e-6  # cos^2(v/2) below this marks a sample as singular
CUSP_THRESHOLD = 1e-4  # min cos^2(v/2) below this counts as a detected cusp


class SampleOutsideDomain(CharflowError):
    pass


class InsufficientSamples(CharflowError):
    pass


class NoCuspDetected(CharflowError):
    pass


class SupportExceedsWindow(CharflowError):
    pass


@dataclass(frozen=True)
class PhysicalSolution:
    """Sampled physical profile; ux_s is NaN where the sample is singular."""

    x_s: np.ndarray
    u_s: np.ndarray
    ux_s: np.ndarray
    singular_mask: np.ndarray


def to_physical(
    state: CharState,
    params: ModelParams,
    x_samples: np.ndarray,
    epsilon_sing: float = EPSILON_SING,
) -> PhysicalSolution:
    """Sample u and u_x at the requested physical positions.

    For each target the bracketing label panel is found by binary search; u
    and v interpolate linearly inside the panel, u_x = tan(v/2) where
    cos^2(v/2) >= epsilon_sing.  Across collapsed panels (x flat) u is taken
    constant, which matches the single-valuedness of the physical profile.
    """
    xs = np.asarray(x_samples, dtype=float)
    x = np.maximum.accumulate(state.x)  # absorb round-off dips of the evolved x
    tol = 1e-9 * (1.0 + float(x[-1] - x[0]))
    if xs.min() < x[0] - tol or xs.max() > x[-1] + tol:
        raise SampleOutsideDomain(
            f"samples must lie in [{x[0]:.6g}, {x[-1]:.6g}]"
        )
    idx = np.clip(np.searchsorted(x, xs, side="right") - 1, 0, params.N - 2)
    denom = x[idx + 1] - x[idx]
    theta = np.where(denom > 0, (xs - x[idx]) / np.where(denom > 0, denom, 1.0), 0.0)
    theta = np.clip(theta, 0.0, 1.0)
    u = state.u[idx] + theta * (state.u[idx + 1] - state.u[idx])
    v = state.v[idx] + theta * (state.v[idx + 1] - state.v[idx])
    ch = np.cos(0.5 * v)
    singular = ch * ch < epsilon_sing
    with np.errstate(divide="ignore", invalid="ignore"):
        ux = np.where(singular, np.nan, np.tan(0.5 * v))
    return PhysicalSolution(x_s=xs, u_s=u, ux_s=ux, singular_mask=singular)


def physical_energy(phys: PhysicalSolution) -> float:
    """Quadrature of u^2 + u_x^2 over the samples, singular samples excluded."""
    ux = np.where(phys.singular_mask, 0.0, phys.ux_s)
    return float(np.trapezoid(phys.u_s * phys.u_s + ux * ux, phys.x_s))


# ---------------------------------------------------------------------------
# energy-measure decomposition


@dataclass(frozen=True)
class Atom:
    x: float
    mass: float
    u: float


@dataclass(frozen=True)
class MeasureDecomposition:
    """Split of the k-th order energy measure into ac part and atoms.

    total is the full label-space quadrature of xi sin^k(v/2); ac_total and
    the atom masses partition exactly the same node weights, so
    ac_total + sum(masses) == total by construction.
    """

    atoms: Tuple[Atom, ...]
    ac_total: float
    total: float
    singular_nodes: np.ndarray  # boolean mask over the label grid
    ac_density: Optional[np.ndarray] = None  # u_x^k on the requested samples
    x_s: Optional[np.ndarray] = None


def measure_decompose(
    state: CharState,
    params: ModelParams,
    grid: CharGrid,
    epsilon_sing: float = EPSILON_SING,
    x_samples: np.ndarray = None,
) -> MeasureDecomposition:
    ch = np.cos(0.5 * state.v)
    flagged = ch * ch < epsilon_sing
    sh = np.sin(0.5 * state.v)
    node_mass = state.xi * int_pow(sh, params.k) * node_weights(grid)
    total = float(node_mass.sum())

    atoms = []
    n = params.N
    i = 0
    while i < n:
        if not flagged[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and flagged[j + 1]:
            j += 1
        run = slice(i, j + 1)
        deepest = i + int(np.argmin(ch[run] * ch[run]))
        atoms.append(
            Atom(
                x=float(state.x[deepest]),
                mass=float(node_mass[run].sum()),
                u=float(state.u[deepest]),
            )
        )
        i = j + 1

    ac_total = total - sum(a.mass for a in atoms)
    density = None
    xs = None
    if x_samples is not None:
        phys = to_physical(state, params, x_samples, epsilon_sing)
        ux = np.where(phys.singular_mask, 0.0, phys.ux_s)
        density = int_pow(ux, params.k)
        xs = phys.x_s
    return MeasureDecomposition(
        atoms=tuple(atoms),
        ac_total=ac_total,
        total=total,
        singular_nodes=flagged,
        ac_density=density,
        x_s=xs,
    )


# ---------------------------------------------------------------------------
# cusp detection and Holder-exponent fitting


def find_cusp(state: CharState, threshold: float = CUSP_THRESHOLD) -> Tuple[float, int]:
    """Location (x, node index) of the deepest cusp, if one is present."""
    ch = np.cos(0.5 * state.v)
    ch2 = ch * ch
    i = int(np.argmin(ch2))
    if ch2[i] >= threshold:
        raise NoCuspDetected(f"min cos^2(v/2) = {ch2[i]:.3e} >= threshold {threshold:g}")
    return float(state.x[i]), i


@dataclass(frozen=True)
class HolderFit:
    exponent: float
    side_exponents: Tuple[float, float]
    rms_residual: float
    n_points: Tuple[int, int]
    inner: float
    outer: float


def holder_exponent_estimate(
    phys: PhysicalSolution,
    x_star: float,
    window: Tuple[float, float],
    min_per_side: int = 20,
) -> HolderFit:
    """Least-squares slope of log|u - u*| against log|x - x*|, per side.

    window = (inner, outer) radii; samples inside `inner` are excluded (the
    grid rounds the cusp tip below that scale).
    """
    inner, outer = window
    u_star = float(np.interp(x_star, phys.x_s, phys.u_s))
    delta = phys.x_s - x_star
    du = np.abs(phys.u_s - u_star)
    sides = []
    counts = []
    residuals = []
    for sgn in (-1.0, 1.0):
        m = (sgn * delta >= inner) & (sgn * delta <= outer) & (du > 1e-14)
        counts.append(int(m.sum()))
        if counts[-1] < min_per_side:
            raise InsufficientSamples(
                f"only {counts[-1]} usable samples on one side; need >= {min_per_side}"
            )
        lx = np.log(np.abs(delta[m]))
        ly = np.log(du[m])
        slope, intercept = np.polyfit(lx, ly, 1)
        residuals.append(float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2))))
        sides.append(float(slope))
    return HolderFit(
        exponent=0.5 * (sides[0] + sides[1]),
        side_exponents=(sides[0], sides[1]),
        rms_residual=max(residuals),
        n_points=(counts[0], counts[1]),
        inner=inner,
        outer=outer,
    )


def holder_fit_at_cusp(
    state: CharState,
    params: ModelParams,
    outer: float = 0.25,
    n_per_side: int = 60,
    threshold: float = CUSP_THRESHOLD,
) -> HolderFit:
    """Detect the deepest cusp and fit the two-sided profile exponent.

    The inner exclusion radius combines the local panel resolution with the
    saturation scale below which the still-finite max slope flattens the
    profile; both would otherwise bias the fit toward exponent 1.
    """
    x_star, i = find_cusp(state, threshold)
    k = params.k
    n = params.N
    lo, hi = max(i - 3, 0), min(i + 3, n - 1)
    dx_eff = (state.x[hi] - state.x[lo]) / max(hi - lo, 1)
    ux_max = abs(math.tan(0.5 * state.v[i]))
    # probe the outer scale to calibrate the cusp coefficient
    probes = np.array([x_star - outer, x_star + outer])
    u_star = float(state.u[i])
    pp = to_physical(state, params, probes, epsilon_sing=0.0)
    c_est = float(np.mean(np.abs(pp.u_s - u_star))) / outer ** (1.0 - 1.0 / k)
    sat = ((1.0 - 1.0 / k) * max(c_est, 1e-12) / max(ux_max, 1.0)) ** k
    inner = max(2.0 * dx_eff, 3.0 * sat, 1e-13)
    offs = np.geomspace(inner, outer, n_per_side)
    xs = np.concatenate([x_star - offs[::-1], [x_star], x_star + offs])
    phys = to_physical(state, params, xs)
    return holder_exponent_estimate(phys, x_star, (inner, outer))


# ---------------------------------------------------------------------------
# Lipschitz-in-time check of the k-norm


def lipschitz_in_Lk_check(
    states: Sequence[CharState],
    params: ModelParams,
    x_grid: np.ndarray,
    factor: float = 10.0,
):
    """Max ratio ||u(t+h) - u(t)||_Lk / h over consecutive snapshot pairs.

    The first pair calibrates the admissible constant; the check asserts no
    later pair exceeds `factor` times it.  Returns a report dict.
    """
    if len(states) < 3:
        raise InsufficientSamples("need at least 3 snapshots")
    k = params.k
    profiles = [to_physical(s, params, x_grid).u_s for s in states]
    ratios = []
    for (sa, ua), (sb, ub) in zip(
        zip(states[:-1], profiles[:-1]), zip(states[1:], profiles[1:])
    ):
        h = sb.T - sa.T
        d = np.abs(ub - ua)
        lk = float(np.trapezoid(int_pow(d, k), x_grid)) ** (1.0 / k)
        ratios.append(lk / h)
    ref = ratios[0]
    bound = factor * ref
    max_ratio = max(ratios)
    return {
        "ratios": ratios,
        "max_ratio": max_ratio,
        "reference": ref,
        "bound": bound,
        "ok": bool(max_ratio <= bound or max_ratio == 0.0),
    }


# ---------------------------------------------------------------------------
# weak-form residuals


@dataclass(frozen=True)
class BumpTestFunction:
    """Tensor-product C^1 bump (1 - s^2)^3 in both t and x."""

    t_center: float
    t_halfwidth: float
    x_center: float
    x_halfwidth: float

    def _b(self, s):
        out = np.where(np.abs(s) < 1.0, (1.0 - s * s) ** 3, 0.0)
        return out

    def _db(self, s):
        return np.where(np.abs(s) < 1.0, -6.0 * s * (1.0 - s * s) ** 2, 0.0)

    def phi(self, t, x):
        st = (t - self.t_center) / self.t_halfwidth
        sx = (x - self.x_center) / self.x_halfwidth
        return self._b(st) * self._b(sx)

    def phi_t(self, t, x):
        st = (t - self.t_center) / self.t_halfwidth
        sx = (x - self.x_center) / self.x_halfwidth
        return self._db(st) / self.t_halfwidth * self._b(sx)

    def phi_x(self, t, x):
        st = (t - self.t_center) / self.t_halfwidth
        sx = (x - self.x_center) / self.x_halfwidth
        return self._b(st) * self._db(sx) / self.x_halfwidth


def weak_form_residual(
    states: Sequence[CharState],
    params: ModelParams,
    grid: CharGrid,
    bump: BumpTestFunction,
    x_grid: np.ndarray,
    epsilon_sing: float = EPSILON_SING,
):
    """Normalized residuals of the weak momentum equation and the measure balance.

    Both space-time integrals are evaluated on the reconstructed physical
    profiles, with the kernel fields re-evaluated by the physical-space
    convolution (an independent path from the label-space solver).  Singular
    samples contribute nothing, consistently with their vanishing measure.
    Returns (pde_residual, measure_residual), each normalized by the integral
    of the absolute values of its terms.
    """
    times = np.array([s.T for s in states])
    if bump.t_center - bump.t_halfwidth < times[0] or bump.t_center + bump.t_halfwidth > times[-1]:
        raise SupportExceedsWindow("test function support exceeds the snapshot time range")
    if (
        bump.x_center - bump.x_halfwidth < x_grid[0]
        or bump.x_center + bump.x_halfwidth > x_grid[-1]
    ):
        raise SupportExceedsWindow("test function support exceeds the spatial window")
    dts = np.diff(times)
    if np.max(np.abs(dts - dts[0])) > 1e-9 * dts[0]:
        raise ValueError("snapshots must be uniformly spaced in time")

    lam, k = params.lam, params.k
    g_pde = np.zeros(times.size)
    gabs_pde = np.zeros(times.size)
    g_mu = np.zeros(times.size)
    gabs_mu = np.zeros(times.size)
    for j, s in enumerate(states):
        phys = to_physical(s, params, x_grid, epsilon_sing)
        u = phys.u_s
        ux = np.where(phys.singular_mask, 0.0, phys.ux_s)
        phi = bump.phi(s.T, x_grid)
        phit = bump.phi_t(s.T, x_grid)
        phix = bump.phi_x(s.T, x_grid)
        u_lam = int_pow(u, lam)
        u_lam1 = u_lam * u
        u_lam2 = u_lam1 * u
        aP = (2 * lam + 1) / 2.0 * u_lam * ux * ux + u_lam2
        P, _ = physical_convolution(x_grid, aP)
        if lam == 0:
            Qx = np.zeros_like(P)
        else:
            aQ = (lam / 2.0) * int_pow(u, lam - 1) * ux * ux * ux
            _, Qx = physical_convolution(x_grid, aQ)

        t1 = ux * phit
        t2 = u_lam1 * ux * phix
        t3 = ((2 * lam + 1) / 2.0 * u_lam * ux * ux + u_lam2 - P - Qx) * phi
        g_pde[j] = np.trapezoid(t1 + t2 + t3, x_grid)
        gabs_pde[j] = np.trapezoid(np.abs(t1) + np.abs(t2) + np.abs(t3), x_grid)

        md = measure_decompose(s, params, grid, epsilon_sing)
        conv = phit + u_lam1 * phix
        uxk = int_pow(ux, k)
        m1 = conv * uxk
        m2 = k * (u_lam2 - P - Qx) * int_pow(ux, k - 1) * phi
        mu_ac = np.trapezoid(m1 + m2, x_grid)
        mu_abs = np.trapezoid(np.abs(m1) + np.abs(m2), x_grid)
        atom_term = 0.0
        for a in md.atoms:
            conv_at = bump.phi_t(s.T, a.x) + int_pow(a.u, lam + 1) * bump.phi_x(s.T, a.x)
            atom_term += a.mass * conv_at
        g_mu[j] = mu_ac + atom_term
        gabs_mu[j] = mu_abs + abs(atom_term)

    r_pde = float(np.trapezoid(g_pde, times))
    n_pde = float(np.trapezoid(gabs_pde, times))
    r_mu = float(np.trapezoid(g_mu, times))
    n_mu = float(np.trapezoid(gabs_mu, times))
    return r_pde / max(n_pde, 1e-300), r_mu / max(n_mu, 1e-300)
