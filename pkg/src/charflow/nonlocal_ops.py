"""The four smoothing-kernel fields P, Px, Q, Qx on the label grid.

Each field is a convolution against exp(-|X(Y) - X(Y')|) where X is the
state-dependent cumulative metric (the physical arc length of the label
interval).  Because the kernel is exponential in X, splitting at Y and
sweeping once from each side evaluates all nodes in O(N):

    I-(Y) = int_{ymin}^{Y} exp(-(X(Y)-X(Y'))) a(Y') dY'
    I+(Y) = int_{Y}^{ymax} exp(-(X(Y')-X(Y))) a(Y') dY'

    P  = (I- + I+)/2 with the P integrand,   Px = (I+ - I-)/2,
    Q  = (I- + I+)/2 with the Q integrand,   Qx = (I+ - I-)/2.

Panel quadrature: three Gauss-Legendre points per panel with the integrand
and the metric interpolated by local quintics (6th order overall; plain
trapezoid panels leave an O(dy^2) secular drift in the conserved energy that
is far too large at production grids, and post-breaking solutions develop
narrow label-space features that also defeat 4th order at the target grids).
Kernel factors are carried exactly through the sweep recurrence, and the
O(N^2) reference path evaluates the same panel rule with directly computed
kernels, so the two paths agree to round-off, not merely to discretization
order.  All kernel weights stay <= 1, so neither recurrence can blow up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    CharflowError,
    CharGrid,
    CharState,
    ModelParams,
    NonlocalFields,
    grid_quad,
    int_pow,
    trig_powers,
    uniform_grid,
)
from .quadrature import PanelInterpolator, cumulative_integral

NAIVE_MAX_N = 8192
_CHUNK_CAP = 80.0  # max metric width of one rescaled scan chunk (exp stays far from overflow)

_GL3_FRAC = np.array([0.5 - 0.5 * np.sqrt(3.0 / 5.0), 0.5, 0.5 + 0.5 * np.sqrt(3.0 / 5.0)])
_GL3_WEIGHT = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])
_PANEL_INTERP = PanelInterpolator(_GL3_FRAC, p=6)


class GridTooLargeForOracle(CharflowError):
    pass


class BoundViolated(CharflowError):
    pass


@dataclass(frozen=True)
class MetricProfile:
    """Cumulative metric X(Y_i), nondecreasing with X[0] = 0."""

    X: np.ndarray


@dataclass(frozen=True)
class IntegrandPair:
    """Kernel integrands: a_P drives P/Px, a_Q drives Q/Qx (None when lam = 0)."""

    a_P: np.ndarray
    a_Q: np.ndarray  # None for lam = 0; Q and Qx are then exactly zero


def metric_profile(state: CharState, params: ModelParams, grid: CharGrid) -> MetricProfile:
    """Cumulative integral of cos^k(v/2) * xi, 6th order, increments >= 0.

    The integrand is nonnegative, and the kernel logic requires X to be
    nondecreasing, so the stencil-rule increments are clamped at zero (this
    only triggers inside fully degenerate flat regions where the true
    increment vanishes anyway).  Each grid segment integrates separately; the
    metric is continuous across seams because seam labels are duplicated.
    """
    tp = trig_powers(state.v, params.lam)
    f = tp.cos_k * state.xi
    X = np.empty(f.size)
    off = 0.0
    for start, stop, dy_s in grid.segments:
        Xs = cumulative_integral(f[start:stop], dy_s, order=6)
        inc = np.maximum(np.diff(Xs), 0.0)
        Xs[1:] = np.cumsum(inc)
        X[start:stop] = off + Xs
        off = X[stop - 1]
    return MetricProfile(X=X)


def integrand_pair(state: CharState, params: ModelParams) -> IntegrandPair:
    lam = params.lam
    tp = trig_powers(state.v, lam)
    u_lam = int_pow(state.u, lam)
    u_lam2 = u_lam * state.u * state.u
    a_P = ((2 * lam + 1) / 2.0 * u_lam * tp.sin2_cosk2 + u_lam2 * tp.cos_k) * state.xi
    if lam == 0:
        a_Q = None
    else:
        a_Q = (lam / 2.0) * int_pow(state.u, lam - 1) * tp.sin3_cosk3 * state.xi
    return IntegrandPair(a_P=a_P, a_Q=a_Q)


# ---------------------------------------------------------------------------
# panel quadrature scheme (shared by the fast and the reference path)


@dataclass(frozen=True)
class PanelScheme:
    """State-dependent kernel geometry reused by every integrand this step.

    Zero-width seam panels between grid segments carry no quadrature mass and
    a kernel damping factor of exactly 1, so the sweeps chain straight through
    them.
    """

    grid: CharGrid
    X: np.ndarray  # node metric (n,)
    Xg: np.ndarray  # Gauss-point metric, clamped into the panel (n-1, 3)
    damp: np.ndarray  # exp(-dX) per panel (n-1,)
    Wl: np.ndarray  # exp(-(X[j+1] - Xg)) (n-1, 3)
    Wr: np.ndarray  # exp(-(Xg - X[j])) (n-1, 3)

    def panel_values(self, a: np.ndarray):
        """Left- and right-anchored panel integrals of integrand a."""
        vals = np.zeros_like(self.Xg)
        for start, stop, dy_s in self.grid.segments:
            vals[start : stop - 1] = (_GL3_WEIGHT * dy_s) * _PANEL_INTERP(a[start:stop])
        p_l = (self.Wl * vals).sum(axis=1)
        p_r = (self.Wr * vals).sum(axis=1)
        return p_l, p_r, vals


def build_panel_scheme(metric: MetricProfile, grid: CharGrid) -> PanelScheme:
    X = metric.X
    Xg = np.empty((X.size - 1, _GL3_FRAC.size))
    for start, stop, _ in grid.segments:
        Xg[start : stop - 1] = _PANEL_INTERP(X[start:stop])
    for j in grid.seam_panels():
        Xg[j] = X[j]
    # monotone clamp: keeps every kernel weight <= 1 and kernel distances signed
    np.clip(Xg, X[:-1, None], X[1:, None], out=Xg)
    damp = np.exp(-np.diff(X))
    Wl = np.exp(-(X[1:, None] - Xg))
    Wr = np.exp(-(Xg - X[:-1, None]))
    return PanelScheme(grid=grid, X=X, Xg=Xg, damp=damp, Wl=Wl, Wr=Wr)


# ---------------------------------------------------------------------------
# O(N) sweeps


def _scan_forward(X, damp, panels, dtype=np.float64) -> np.ndarray:
    """I[0] = 0; I[i+1] = damp[i] I[i] + panels[i], vectorized.

    Within a chunk of bounded metric width the recurrence unrolls to a
    rescaled cumulative sum; chunk boundaries carry the running value, so the
    result matches the sequential recurrence to round-off.
    """
    n = X.size
    I = np.zeros(n, dtype=dtype)
    X = X.astype(dtype, copy=False)
    panels = panels.astype(dtype, copy=False)
    s = 0
    while s < n - 1:
        e = int(np.searchsorted(X, X[s] + _CHUNK_CAP, side="right")) - 1
        if e <= s:  # one panel wider than the cap: direct single step
            I[s + 1] = damp[s] * I[s] + panels[s]
            s += 1
            continue
        e = min(e, n - 1)
        w = X[s + 1 : e + 1] - X[s]
        acc = I[s] + np.cumsum(panels[s:e] * np.exp(w))
        I[s + 1 : e + 1] = np.exp(-w) * acc
        s = e
    return I


def _scan_backward(X, damp, panels, dtype=np.float64) -> np.ndarray:
    """I[n-1] = 0; I[i] = damp[i] I[i+1] + panels[i]."""
    n = X.size
    I = np.zeros(n, dtype=dtype)
    X = X.astype(dtype, copy=False)
    panels = panels.astype(dtype, copy=False)
    e = n - 1
    while e > 0:
        s = int(np.searchsorted(X, X[e] - _CHUNK_CAP, side="left"))
        if s >= e:  # one panel wider than the cap
            I[e - 1] = damp[e - 1] * I[e] + panels[e - 1]
            e -= 1
            continue
        w = X[e] - X[s:e]
        q = panels[s:e] * np.exp(w)
        acc = I[e] + np.cumsum(q[::-1])[::-1]
        I[s:e] = np.exp(-w) * acc
        e = s
    return I


def _sweep_pair(scheme: PanelScheme, a: np.ndarray, compensated: bool = False):
    dtype = np.longdouble if compensated else np.float64
    p_l, p_r, _ = scheme.panel_values(a)
    Im = _scan_forward(scheme.X, scheme.damp, p_l, dtype=dtype)
    Ip = _scan_backward(scheme.X, scheme.damp, p_r, dtype=dtype)
    return Im.astype(np.float64), Ip.astype(np.float64)


def eval_nonlocal_fast(
    metric: MetricProfile,
    integrands: IntegrandPair,
    params: ModelParams,
    grid: CharGrid,
    compensated: bool = False,
    scheme: PanelScheme = None,
) -> NonlocalFields:
    """All four fields in O(N) via the two-pass sweeps."""
    if scheme is None:
        scheme = build_panel_scheme(metric, grid)
    Im, Ip = _sweep_pair(scheme, integrands.a_P, compensated)
    P = 0.5 * (Im + Ip)
    Px = 0.5 * (Ip - Im)
    if integrands.a_Q is None:
        z = np.zeros(params.N)
        return NonlocalFields(P=P, Px=Px, Q=z, Qx=z.copy())
    Jm, Jp = _sweep_pair(scheme, integrands.a_Q, compensated)
    return NonlocalFields(P=P, Px=Px, Q=0.5 * (Jm + Jp), Qx=0.5 * (Jp - Jm))


# ---------------------------------------------------------------------------
# O(N^2) reference path


def _naive_split(scheme: PanelScheme, a: np.ndarray, block: int = 256):
    """I- and I+ by direct sums over all panel Gauss sources, exact kernels.

    Gauss positions are clamped inside their panel, so sources left of node i
    satisfy Xg <= X[i] and the kernel distance is the plain difference; ditto
    on the right.  Summation order is fixed (cumulative sums along rows).
    """
    X = scheme.X
    n = X.size
    _, _, vals = scheme.panel_values(a)
    src_pos = scheme.Xg.reshape(-1)
    src_val = vals.reshape(-1)
    Im = np.empty(n)
    Ip = np.empty(n)
    for s in range(0, n, block):
        e = min(s + block, n)
        K = np.exp(-np.abs(X[s:e, None] - src_pos[None, :])) * src_val[None, :]
        C = np.cumsum(K, axis=1)
        total = C[:, -1]
        rows = np.arange(s, e)
        # sources of panels j < i occupy flat indices < 3i
        left = np.where(rows > 0, C[np.arange(e - s), np.maximum(3 * rows - 1, 0)], 0.0)
        Im[s:e] = left
        Ip[s:e] = total - left
    Im[0] = 0.0
    Ip[-1] = 0.0
    return Im, Ip


def eval_nonlocal_naive(
    metric: MetricProfile,
    integrands: IntegrandPair,
    params: ModelParams,
    grid: CharGrid,
) -> NonlocalFields:
    """Direct O(N^2) evaluation of the same discretization; test oracle."""
    if params.N > NAIVE_MAX_N:
        raise GridTooLargeForOracle(f"oracle path limited to N <= {NAIVE_MAX_N}, got {params.N}")
    scheme = build_panel_scheme(metric, grid)
    Im, Ip = _naive_split(scheme, integrands.a_P)
    P = 0.5 * (Im + Ip)
    Px = 0.5 * (Ip - Im)
    if integrands.a_Q is None:
        z = np.zeros(params.N)
        return NonlocalFields(P=P, Px=Px, Q=z, Qx=z.copy())
    Jm, Jp = _naive_split(scheme, integrands.a_Q)
    return NonlocalFields(P=P, Px=Px, Q=0.5 * (Jm + Jp), Qx=0.5 * (Jp - Jm))


def eval_fields(
    state: CharState,
    params: ModelParams,
    grid: CharGrid,
    oracle: bool = False,
    compensated: bool = False,
) -> NonlocalFields:
    """Convenience wrapper: metric + integrands + the selected evaluation path."""
    metric = metric_profile(state, params, grid)
    integrands = integrand_pair(state, params)
    if oracle:
        return eval_nonlocal_naive(metric, integrands, params, grid)
    return eval_nonlocal_fast(metric, integrands, params, grid, compensated)


def physical_convolution(x: np.ndarray, a: np.ndarray):
    """Smoothed field and its derivative for exp(-|x-x'|)/2 on a uniform x grid.

    Returns (p, px) with p = (1/2) int exp(-|x-x'|) a(x') dx' and px its
    derivative, evaluated with the same panel scheme as the label-space
    kernels (here the metric is the coordinate itself).
    """
    x = np.asarray(x, dtype=float)
    metric = MetricProfile(X=x - float(x[0]))
    g = uniform_grid(float(x[0]), float(x[-1]), x.size)
    scheme = build_panel_scheme(metric, g)
    Im, Ip = _sweep_pair(scheme, np.asarray(a, dtype=float))
    return 0.5 * (Im + Ip), 0.5 * (Ip - Im)


# ---------------------------------------------------------------------------
# proved smoothing bound, used as a runtime self-check


def convolution_bound_check(
    fields: NonlocalFields,
    state: CharState,
    params: ModelParams,
    grid: CharGrid,
    tol_rel: float = 1e-8,
):
    """Check sup|field| <= ||g||_L1 * sup|integrand/2| for all four fields.

    ||g||_L1 = 9 B^2 + 2**(lam+2) / C- with B the L2 norm of the angle
    variable and C- = min xi.  This inequality is proved for the continuum
    fields, so a violation signals a quadrature or state-corruption bug.
    Returns (ok, report) where report maps field name -> (sup, bound, margin).
    """
    B2 = grid_quad(grid, state.v * state.v)
    C_minus = float(np.min(state.xi))
    if C_minus <= 0.0:
        raise BoundViolated("min xi <= 0; state is corrupted")
    g_l1 = 9.0 * B2 + float(2 ** (params.lam + 2)) / C_minus
    integrands = integrand_pair(state, params)
    pairs = {
        "P": (fields.P, integrands.a_P),
        "Px": (fields.Px, integrands.a_P),
        "Q": (fields.Q, integrands.a_Q),
        "Qx": (fields.Qx, integrands.a_Q),
    }
    report = {}
    ok = True
    for name, (f, a) in pairs.items():
        sup_a = 0.0 if a is None else float(np.max(np.abs(a)))
        bound = 0.5 * g_l1 * sup_a
        sup_f = float(np.max(np.abs(f)))
        margin = bound - sup_f
        good = margin >= -tol_rel * (1.0 + bound)
        ok = ok and good
        report[name] = (sup_f, bound, margin)
    return ok, report
