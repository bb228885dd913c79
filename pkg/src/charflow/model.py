"""Core types for the characteristic-coordinate solver.

The equations solved here form a one-parameter family indexed by a
non-negative integer ``lam`` (wave speed ``u**(lam+1)``); ``lam = 0`` is the
Camassa-Holm equation and ``lam = 1`` the Novikov equation.  Everything
downstream is controlled by the even integer ``k = 2*(lam+1)``: it is the
power of the half-angle cosine in the coordinate metric, the order of the
conserved Sobolev norm, and fixes the cusp Holder exponent ``1 - 1/k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

TOL_BOUND_REL = 1e-8  # slack for a-priori bound monitors: tol = TOL * (1 + bound)


class CharflowError(Exception):
    """Base class for all structured solver errors."""


class NonIntegerLambda(CharflowError):
    pass


class NegativeLambda(CharflowError):
    pass


class DomainTooSmall(CharflowError):
    pass


class GridTooCoarse(CharflowError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Family index and discretization sizes.

    lam : non-negative integer selecting the equation (0 = CH, 1 = Novikov).
    L   : half-width of the physical domain; initial data must effectively
          vanish outside [-L, L].
    N   : number of nodes of the uniform grid in the characteristic label Y.
    """

    lam: int
    L: float
    N: int

    @property
    def k(self) -> int:
        return 2 * (self.lam + 1)


def validate_params(lam, L, N) -> ModelParams:
    """Validate raw configuration values and derive k.

    Raises NonIntegerLambda / NegativeLambda / DomainTooSmall / GridTooCoarse
    with a one-line remedy in the message.
    """
    if isinstance(lam, bool) or (isinstance(lam, float) and not float(lam).is_integer()):
        raise NonIntegerLambda(f"lambda must be an integer, got {lam!r}; pick 0, 1, 2, ...")
    try:
        lam_i = int(lam)
    except (TypeError, ValueError):
        raise NonIntegerLambda(f"lambda must be an integer, got {lam!r}; pick 0, 1, 2, ...")
    if lam_i < 0:
        raise NegativeLambda(f"lambda must be >= 0, got {lam_i}; use 0 for Camassa-Holm, 1 for Novikov")
    L_f = float(L)
    if not np.isfinite(L_f) or L_f <= 0.0:
        raise DomainTooSmall(f"domain half-width L must be positive, got {L!r}; try L >= 10")
    N_i = int(N)
    if N_i < 16:
        raise GridTooCoarse(f"grid size N must be >= 16, got {N!r}; try N >= 256")
    p = ModelParams(lam=lam_i, L=L_f, N=N_i)
    assert p.k == 2 * (p.lam + 1) and p.k >= 2 and p.k % 2 == 0
    return p


@dataclass(frozen=True)
class CharGrid:
    """Piecewise-uniform grid in the characteristic label Y over [Y(-L), Y(L)].

    Initial data with slope corners (peakons) make the angle variable and the
    relabeling density genuinely discontinuous at finitely many fixed labels;
    those labels become segment seams, represented by DUPLICATED nodes so each
    side carries its own one-sided state.  Smooth data produce one segment,
    and dy is then the global uniform spacing.  segments is a tuple of
    (start, stop, dy_s) index ranges (stop exclusive, contiguous); nodes at a
    seam satisfy nodes[stop-1 of seg A] == nodes[start of seg B].
    """

    y_min: float
    y_max: float
    dy: float  # nominal spacing (largest segment spacing)
    nodes: np.ndarray
    segments: tuple = None

    def __post_init__(self):
        if self.segments is None:
            object.__setattr__(self, "segments", ((0, self.nodes.size, self.dy),))
        prev_stop = 0
        for start, stop, dy_s in self.segments:
            if start != prev_stop:
                raise ValueError("grid segments must be contiguous")
            prev_stop = stop
            seg = self.nodes[start:stop]
            if seg.size < 8:
                raise ValueError("every grid segment needs at least 8 nodes")
            d = np.diff(seg)
            if not (d > 0).all():
                raise ValueError("grid nodes must be strictly increasing inside a segment")
            if np.max(np.abs(d - dy_s)) > 1e-9 * (1.0 + abs(dy_s)):
                raise ValueError("grid spacing is not uniform inside a segment")
        if prev_stop != self.nodes.size:
            raise ValueError("grid segments must cover all nodes")

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def seam_panels(self):
        """Indices of the zero-width panels joining consecutive segments."""
        return tuple(stop - 1 for (_, stop, _) in self.segments[:-1])


def uniform_grid(y_min: float, y_max: float, N: int) -> CharGrid:
    nodes = np.linspace(y_min, y_max, N)
    dy = (y_max - y_min) / (N - 1)
    return CharGrid(y_min=y_min, y_max=y_max, dy=dy, nodes=nodes)


def node_weights(grid: CharGrid) -> np.ndarray:
    """Trapezoid quadrature weights over all nodes (seam duplicates get the
    half-panel weight of their own segment only, so nothing double-counts)."""
    w = np.zeros(grid.nodes.size)
    for start, stop, dy_s in grid.segments:
        w[start:stop] += dy_s
        w[start] -= 0.5 * dy_s
        w[stop - 1] -= 0.5 * dy_s
    return w


def grid_quad(grid: CharGrid, f: np.ndarray) -> float:
    """Trapezoid quadrature of node samples over the segmented grid."""
    return float(np.dot(node_weights(grid), f))


@dataclass(frozen=True)
class CharState:
    """Solver unknowns on the Y grid at one time T.

    u  : velocity along each characteristic.
    v  : angle variable 2*arctan(u_x), stored unwrapped (continuous real,
         not folded into [-pi, pi]) so the right-hand side stays smooth when
         a characteristic passes through a cusp (v crossing +-pi).
    xi : relabeling density, provably positive for all time.
    x  : physical position of each label, evolved by dx/dT = u**(lam+1).
    """

    T: float
    u: np.ndarray
    v: np.ndarray
    xi: np.ndarray
    x: np.ndarray


@dataclass(frozen=True)
class NonlocalFields:
    """The four smoothing-kernel fields evaluated along the current state."""

    P: np.ndarray
    Px: np.ndarray
    Q: np.ndarray
    Qx: np.ndarray


@dataclass
class DiagnosticsReport:
    """Conserved/balanced functionals and identity residuals at one time.

    E_lower is the conserved energy; H_higher the balanced k-th order
    functional with predicted growth rate dH_dt_predicted.  The residuals are
    max-norm mismatches of the two structural identities relating centered
    Y-derivatives of u and x to local state quantities.  bound_flags holds one
    boolean per a-priori bound monitor (True = bound holds), bound_margins the
    corresponding slack (bound minus observed value).
    """

    T: float
    E_lower: float
    H_higher: float
    dH_dt_predicted: float
    residual_uY: float
    residual_xY: float
    min_cos2_half_v: float
    bound_flags: dict = field(default_factory=dict)
    bound_margins: dict = field(default_factory=dict)

    @property
    def all_bounds_hold(self) -> bool:
        return all(self.bound_flags.values())


def int_pow(base, n: int):
    """base**n for integer n >= 0 by repeated multiplication (no pow calls).

    Works elementwise on arrays.  n = 0 returns ones, so 0**0 = 1, which is
    the convention needed for u**(lam-1) prefactors at lam = 1.
    """
    if n < 0:
        raise ValueError("int_pow requires n >= 0")
    out = np.ones_like(np.asarray(base, dtype=float))
    for _ in range(n):
        out = out * base
    if np.ndim(base) == 0:
        return float(out)
    return out


class TrigPowers(NamedTuple):
    sin_half: object  # sin(v/2)
    cos_half: object  # cos(v/2)
    cos_k: object  # cos^k(v/2)
    sin2_cosk2: object  # sin^2(v/2) cos^(k-2)(v/2)
    sin3_cosk3: object  # sin^3(v/2) cos^(k-3)(v/2)
    half_sin: object  # (1/2) sin v


def trig_powers(v, lam: int) -> TrigPowers:
    """Half-angle trig powers shared by the metric, integrands and RHS.

    All powers are built by repeated multiplication of sin(v/2) and cos(v/2),
    exact to round-off.  k = 2*(lam+1), so cos^(k-2) and cos^(k-3) exist for
    every admissible lam (for lam = 0 the k-3 power is cos^(-1); that entry is
    only ever multiplied by the lam/2 = 0 prefactor, so it is returned as 0).
    """
    k = 2 * (lam + 1)
    half = np.multiply(v, 0.5)
    sh = np.sin(half)
    ch = np.cos(half)
    cos_k = int_pow(ch, k)
    sin2 = sh * sh
    sin2_cosk2 = sin2 * int_pow(ch, k - 2)
    if k >= 3:
        sin3_cosk3 = sin2 * sh * int_pow(ch, k - 3)
    else:
        sin3_cosk3 = np.zeros_like(np.asarray(ch, dtype=float))
        if np.ndim(v) == 0:
            sin3_cosk3 = 0.0
    half_sin = sh * ch  # (1/2) sin v by the double-angle identity
    return TrigPowers(sh, ch, cos_k, sin2_cosk2, sin3_cosk3, half_sin)
