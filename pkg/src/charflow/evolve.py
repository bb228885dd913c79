"""Time integration of the characteristic-coordinate system.

The unknowns (u, v, xi) evolve by a semilinear ODE system in which every
right-hand side term is bounded by energy-controlled constants, so a fixed
step explicit RK4 is adequate and keeps runs deterministic.  The physical
position x is integrated as a fourth component via dx/dT = u**(lam+1); the
independently evolved x then cross-checks the state through the metric
identity x_Y = cos^k(v/2) * xi instead of being a tautology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .model import (
    TOL_BOUND_REL,
    CharflowError,
    CharGrid,
    CharState,
    DiagnosticsReport,
    ModelParams,
    NonlocalFields,
    grid_quad,
    int_pow,
    trig_powers,
)
from .nonlocal_ops import convolution_bound_check, eval_fields
from .quadrature import cumulative_integral
from .transform import InitialData, initialize_state

BREAKING_THRESHOLD = 1e-4  # min cos^2(v/2) below this counts as detected breaking
ANGLE_GUARD = math.pi / 4.0


class XiNonPositive(CharflowError):
    def __init__(self, T, dt_hint):
        super().__init__(f"xi <= 0 at T={T:.6g}; retry with dt <= {dt_hint:.3g}")
        self.dt_hint = dt_hint


class NonFiniteState(CharflowError):
    def __init__(self, T, index):
        super().__init__(f"non-finite state value at T={T:.6g}, node {index}")
        self.index = index


class AngleGuardExceeded(CharflowError):
    def __init__(self, dt, dt_hint):
        super().__init__(
            f"dt={dt:.3g} violates the angle-resolution guard dt*max|v_T| < pi/4; "
            f"use dt <= {dt_hint:.3g}"
        )
        self.dt_hint = dt_hint


class DiagnosticsFailure(CharflowError):
    def __init__(self, message, report=None, partial=None):
        super().__init__(message)
        self.report = report
        self.partial = partial


@dataclass(frozen=True)
class RhsOutput:
    du: np.ndarray
    dv: np.ndarray
    dxi: np.ndarray
    dx: np.ndarray


@dataclass(frozen=True)
class RunConfig:
    dt: float
    T_end: float
    snapshot_every: int = 100
    check_every: int = 20
    cfl_safety: float = 0.9
    energy_drift_limit: float = 1e-5  # hard relative drift limit per run
    oracle: bool = False  # force the O(N^2) kernel path
    compensated: bool = False  # extended-precision kernel sweeps

    def __post_init__(self):
        if self.dt <= 0 or self.T_end <= 0:
            raise ValueError("dt and T_end must be positive")
        if self.snapshot_every < 1 or self.check_every < 1:
            raise ValueError("cadences must be positive integers")
        if not (0 < self.cfl_safety <= 1):
            raise ValueError("cfl_safety must lie in (0, 1]")


def rhs(
    state: CharState,
    params: ModelParams,
    grid: CharGrid,
    fields: NonlocalFields = None,
    oracle: bool = False,
    compensated: bool = False,
) -> RhsOutput:
    """Time derivatives of (u, v, xi, x) at the given state."""
    lam = params.lam
    if fields is None:
        fields = eval_fields(state, params, grid, oracle=oracle, compensated=compensated)
    tp = trig_powers(state.v, lam)
    ch2 = tp.cos_half * tp.cos_half
    sinv = 2.0 * tp.half_sin
    u_lam = int_pow(state.u, lam)
    u_lam1 = u_lam * state.u
    u_lam2 = u_lam1 * state.u
    PQx = fields.P + fields.Qx
    du = -fields.Px - fields.Q
    dv = -u_lam * (tp.sin_half * tp.sin_half) + 2.0 * u_lam2 * ch2 - 2.0 * ch2 * PQx
    dxi = (lam + 1) * state.xi * sinv * (0.5 * u_lam + u_lam2 - PQx)
    dx = u_lam1
    return RhsOutput(du=du, dv=dv, dxi=dxi, dx=dx)


def _advance(state: CharState, k: RhsOutput, h: float, T: float) -> CharState:
    return CharState(
        T=T,
        u=state.u + h * k.du,
        v=state.v + h * k.dv,
        xi=state.xi + h * k.dxi,
        x=state.x + h * k.dx,
    )


def step_rk4(
    state: CharState,
    params: ModelParams,
    grid: CharGrid,
    dt: float,
    oracle: bool = False,
    compensated: bool = False,
) -> CharState:
    """One classical RK4 step; raises XiNonPositive if dt was too large."""
    kw = dict(oracle=oracle, compensated=compensated)
    T = state.T
    k1 = rhs(state, params, grid, **kw)
    k2 = rhs(_advance(state, k1, 0.5 * dt, T + 0.5 * dt), params, grid, **kw)
    k3 = rhs(_advance(state, k2, 0.5 * dt, T + 0.5 * dt), params, grid, **kw)
    k4 = rhs(_advance(state, k3, dt, T + dt), params, grid, **kw)
    sixth = dt / 6.0
    new = CharState(
        T=T + dt,
        u=state.u + sixth * (k1.du + 2 * k2.du + 2 * k3.du + k4.du),
        v=state.v + sixth * (k1.dv + 2 * k2.dv + 2 * k3.dv + k4.dv),
        xi=state.xi + sixth * (k1.dxi + 2 * k2.dxi + 2 * k3.dxi + k4.dxi),
        x=state.x + sixth * (k1.dx + 2 * k2.dx + 2 * k3.dx + k4.dx),
    )
    if np.min(new.xi) <= 0.0:
        raise XiNonPositive(new.T, 0.5 * dt)
    for arr in (new.u, new.v, new.xi, new.x):
        if not np.isfinite(arr).all():
            raise NonFiniteState(new.T, int(np.argmin(np.isfinite(arr))))
    return new


# ---------------------------------------------------------------------------
# functionals and diagnostics


def energy(state: CharState, params: ModelParams, grid: CharGrid) -> float:
    """Conserved energy: int (u^2 cos^k(v/2) + sin^2(v/2) cos^(k-2)(v/2)) xi dY.

    Quadrature is the 6th-order stencil rule per segment: the conservation
    check is the tightest functional in the suite, and peakon seams induce
    boundary layers whose trapezoid error would masquerade as drift.
    """
    tp = trig_powers(state.v, params.lam)
    e = (state.u * state.u * tp.cos_k + tp.sin2_cosk2) * state.xi
    tot = 0.0
    for start, stop, dy_s in grid.segments:
        tot += float(cumulative_integral(e[start:stop], dy_s, order=6)[-1])
    return tot


def higher_functional(state: CharState, params: ModelParams, grid: CharGrid) -> float:
    """Balanced functional int xi sin^k(v/2) dY (the k-th order slope mass)."""
    sh = np.sin(0.5 * state.v)
    return grid_quad(grid, state.xi * int_pow(sh, params.k))


def higher_functional_rate(
    state: CharState, params: ModelParams, grid: CharGrid, fields: NonlocalFields
) -> float:
    """Predicted dH/dT: int (u^(lam+2) - P - Qx) k xi sin^(k-1)(v/2) cos(v/2) dY."""
    k = params.k
    tp = trig_powers(state.v, params.lam)
    u_lam2 = int_pow(state.u, params.lam + 2)
    g = (u_lam2 - fields.P - fields.Qx) * k * state.xi * int_pow(tp.sin_half, k - 1) * tp.cos_half
    return grid_quad(grid, g)


def identity_residuals(state: CharState, params: ModelParams, grid: CharGrid):
    """Max-norm residuals of the u_Y and x_Y structural identities.

    Centered differences run inside each segment only; the identities hold
    almost everywhere and the seam labels are exactly the measure-zero set
    where the angle variable may jump.
    """
    tp = trig_powers(state.v, params.lam)
    uY_ident = state.xi * tp.sin_half * int_pow(tp.cos_half, params.k - 1)
    xY_ident = state.xi * tp.cos_k
    res_u = 0.0
    res_x = 0.0
    for start, stop, dy_s in grid.segments:
        u = state.u[start:stop]
        x = state.x[start:stop]
        duY = (u[2:] - u[:-2]) / (2.0 * dy_s)
        dxY = (x[2:] - x[:-2]) / (2.0 * dy_s)
        res_u = max(res_u, float(np.max(np.abs(duY - uY_ident[start + 1 : stop - 1]))))
        res_x = max(res_x, float(np.max(np.abs(dxY - xY_ident[start + 1 : stop - 1]))))
    return res_u, res_x


def diagnostics(
    state: CharState,
    params: ModelParams,
    grid: CharGrid,
    E0: float,
    fields: NonlocalFields = None,
    dt: float = None,
    oracle: bool = False,
    compensated: bool = False,
) -> DiagnosticsReport:
    """Full diagnostic sweep: functionals, identity residuals, a-priori bounds."""
    if fields is None:
        fields = eval_fields(state, params, grid, oracle=oracle, compensated=compensated)
    E = energy(state, params, grid)
    H = higher_functional(state, params, grid)
    dH = higher_functional_rate(state, params, grid, fields)
    res_u, res_x = identity_residuals(state, params, grid)
    ch = np.cos(0.5 * state.v)
    min_cos2 = float(np.min(ch * ch))

    flags, margins = {}, {}

    sup_u = float(np.max(np.abs(state.u)))
    bound_u = math.sqrt(max(E0, 0.0))
    margins["sup_u"] = bound_u - sup_u
    flags["sup_u"] = margins["sup_u"] >= -TOL_BOUND_REL * (1.0 + bound_u)

    bound_P = (2 * params.lam + 3) / 4.0 * E0 ** ((params.lam + 2) / 2.0)
    for name, f in (("sup_P", fields.P), ("sup_Px", fields.Px)):
        margins[name] = bound_P - float(np.max(np.abs(f)))
        flags[name] = margins[name] >= -TOL_BOUND_REL * (1.0 + bound_P)

    conv_ok, conv_report = convolution_bound_check(fields, state, params, grid)
    flags["convolution"] = conv_ok
    margins["convolution"] = min(m for _, _, m in conv_report.values())

    margins["xi_positive"] = float(np.min(state.xi))
    flags["xi_positive"] = margins["xi_positive"] > 0.0

    x_slack = 1e-12 * (1.0 + float(np.max(np.abs(state.x))))
    margins["x_monotone"] = float(np.min(np.diff(state.x))) + x_slack
    flags["x_monotone"] = margins["x_monotone"] >= 0.0

    if dt is not None:
        k1 = rhs(state, params, grid, fields=fields)
        margins["angle_guard"] = ANGLE_GUARD - dt * float(np.max(np.abs(k1.dv)))
        flags["angle_guard"] = margins["angle_guard"] > 0.0

    return DiagnosticsReport(
        T=state.T,
        E_lower=E,
        H_higher=H,
        dH_dt_predicted=dH,
        residual_uY=res_u,
        residual_xY=res_x,
        min_cos2_half_v=min_cos2,
        bound_flags=flags,
        bound_margins=margins,
    )


# ---------------------------------------------------------------------------
# the driver


@dataclass
class Snapshot:
    state: CharState
    fields: NonlocalFields
    report: Optional[DiagnosticsReport] = None


@dataclass
class RunResult:
    params: ModelParams
    grid: CharGrid
    cfg: RunConfig
    E0: float
    snapshots: List[Snapshot] = field(default_factory=list)
    reports: List[DiagnosticsReport] = field(default_factory=list)
    first_breaking_time: Optional[float] = None
    deepest: Optional[Snapshot] = None  # snapshot at the global minimum of cos^2(v/2)
    min_cos2_global: float = 1.0
    completed: bool = False


def run(u0: InitialData, params: ModelParams, cfg: RunConfig) -> RunResult:
    """Integrate to T_end, collecting snapshots and diagnostics.

    Raises XiNonPositive / NonFiniteState / AngleGuardExceeded on integrator
    failures and DiagnosticsFailure when the energy drift exceeds the
    configured hard limit; the raised error carries the partial result.
    """
    grid, state = initialize_state(u0, params)
    E0 = energy(state, params, grid)
    result = RunResult(params=params, grid=grid, cfg=cfg, E0=E0)
    kw = dict(oracle=cfg.oracle, compensated=cfg.compensated)

    k1 = rhs(state, params, grid, **kw)
    max_dv = float(np.max(np.abs(k1.dv)))
    if max_dv > 0 and cfg.dt > cfg.cfl_safety * ANGLE_GUARD / max_dv:
        raise AngleGuardExceeded(cfg.dt, cfg.cfl_safety * ANGLE_GUARD / max_dv)

    n_steps = int(round(cfg.T_end / cfg.dt))

    def record(st, is_check):
        fl = eval_fields(st, params, grid, **kw)
        rep = None
        if is_check:
            rep = diagnostics(st, params, grid, E0, fields=fl, dt=cfg.dt, **kw)
            result.reports.append(rep)
        result.snapshots.append(Snapshot(state=st, fields=fl, report=rep))
        return rep

    rep = record(state, True)
    _check_hard_limits(rep, E0, cfg, result)

    best_state = state
    for i in range(1, n_steps + 1):
        try:
            state = step_rk4(state, params, grid, cfg.dt, **kw)
        except CharflowError as err:
            err.partial = result
            raise
        ch = np.cos(0.5 * state.v)
        mc = float(np.min(ch * ch))
        if mc < result.min_cos2_global:
            result.min_cos2_global = mc
            best_state = state
        if result.first_breaking_time is None and mc < BREAKING_THRESHOLD:
            result.first_breaking_time = state.T
        want_snap = (i % cfg.snapshot_every == 0) or (i == n_steps)
        want_check = (i % cfg.check_every == 0) or (i == n_steps)
        if want_snap or want_check:
            rep = record(state, want_check)
            if want_check:
                _check_hard_limits(rep, E0, cfg, result)

    result.deepest = Snapshot(
        state=best_state, fields=eval_fields(best_state, params, grid, **kw)
    )
    result.completed = True
    return result


def _check_hard_limits(rep: DiagnosticsReport, E0: float, cfg: RunConfig, result: RunResult):
    drift = abs(rep.E_lower - E0) / max(abs(E0), 1e-300)
    if E0 > 0 and drift > cfg.energy_drift_limit:
        raise DiagnosticsFailure(
            f"energy drift {drift:.3e} exceeds hard limit {cfg.energy_drift_limit:.3e} "
            f"at T={rep.T:.6g}",
            report=rep,
            partial=result,
        )
    if not rep.bound_flags.get("xi_positive", True):
        raise DiagnosticsFailure("xi lost positivity", report=rep, partial=result)
