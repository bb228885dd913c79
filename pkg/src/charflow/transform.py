"""Initial-data handling and the change to characteristic coordinates.

The label Y equidistributes (1 + u0_x^2)**(k/2) dx, so the Y grid is densest
exactly where the initial slope is large, i.e. where breaking will occur.
That built-in mesh adaptation is the reason the solver keeps a fixed uniform
grid in Y for all times.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field as dc_field
from typing import Sequence, Tuple

import numpy as np

from .model import CharGrid, CharState, CharflowError, ModelParams, int_pow
from .quadrature import cumulative_integral

MAX_INITIAL_SLOPE = 1e12
SUPPORT_DECAY = 1e-12  # compact-support surrogate for tabulated data


class NonFiniteDerivative(CharflowError):
    pass


class UnboundedInitialSlope(CharflowError):
    pass


# ---------------------------------------------------------------------------
# initial data kinds


class InitialData:
    """Base class: initial velocity profile u0 with a slope evaluator."""

    analytic_derivative_available = False

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def kink_locations(self) -> Sequence[float]:
        """x positions where the slope jumps (corners); used as panel anchors."""
        return ()

    def derivative_limits(self, c: float) -> Tuple[float, float]:
        """One-sided slopes at x = c (equal for continuously differentiable data)."""
        d = float(self.derivative(np.array([c]))[0])
        return d, d


@dataclass(frozen=True)
class Zero(InitialData):
    analytic_derivative_available = True

    def value(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def derivative(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class GaussianBump(InitialData):
    """u0(x) = amplitude * exp(-((x-center)/width)^2 / 2)."""

    amplitude: float
    width: float
    center: float = 0.0
    analytic_derivative_available = True

    def value(self, x):
        s = (np.asarray(x, dtype=float) - self.center) / self.width
        return self.amplitude * np.exp(-0.5 * s * s)

    def derivative(self, x):
        s = (np.asarray(x, dtype=float) - self.center) / self.width
        return -(s / self.width) * self.amplitude * np.exp(-0.5 * s * s)


@dataclass(frozen=True)
class PeakonSum(InitialData):
    """u0(x) = sum_i a_i exp(-|x - c_i|); corners at the peak positions.

    The slope at a corner node evaluates to the average of the one-sided
    slopes because sign(0) = 0.
    """

    peaks: Tuple[Tuple[float, float], ...]  # (amplitude, center) pairs
    analytic_derivative_available = True

    def __post_init__(self):
        if not self.peaks:
            raise ValueError("PeakonSum needs at least one (amplitude, center) pair")
        if any(a == 0.0 for a, _ in self.peaks):
            raise ValueError("peakon amplitudes must be nonzero")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for a, c in self.peaks:
            out += a * np.exp(-np.abs(x - c))
        return out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for a, c in self.peaks:
            out += -a * np.sign(x - c) * np.exp(-np.abs(x - c))
        return out

    def kink_locations(self):
        return tuple(c for _, c in self.peaks)

    def derivative_limits(self, c):
        base = 0.0
        jump_up = 0.0
        for a, ci in self.peaks:
            if ci == c:
                jump_up += a  # slope is +a from the left, -a from the right
            else:
                base += -a * np.sign(c - ci) * np.exp(-abs(c - ci))
        return base + jump_up, base - jump_up


@dataclass(frozen=True)
class Tabulated(InitialData):
    """Initial data given as samples (x, u) on a strictly increasing grid."""

    x: np.ndarray
    u: np.ndarray
    analytic_derivative_available = False

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if x.ndim != 1 or x.shape != u.shape or x.size < 8:
            raise ValueError("tabulated data must be two equal 1-d arrays with >= 8 samples")
        if not np.all(np.diff(x) > 0):
            raise ValueError("tabulated x must be strictly increasing")
        if not (np.isfinite(x).all() and np.isfinite(u).all()):
            raise ValueError("tabulated data contain non-finite values")
        if abs(u[0]) > SUPPORT_DECAY or abs(u[-1]) > SUPPORT_DECAY:
            raise ValueError(
                f"tabulated u must decay below {SUPPORT_DECAY:g} at both ends "
                "(effectively compactly supported data)"
            )
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)

    def value(self, xq):
        return _interp_cubic(self.x, self.u, np.asarray(xq, dtype=float))

    def derivative(self, xq):
        raise NotImplementedError("tabulated slope is provided by the fine-grid resampling")


def tabulated_from_csv(source) -> Tabulated:
    """Read two-column CSV (x, u); an optional single header line is skipped."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    lines = text.strip().splitlines()
    first = lines[0].split(",")[0].strip()
    skip = 0
    try:
        float(first)
    except ValueError:
        skip = 1
    data = np.loadtxt(io.StringIO("\n".join(lines[skip:])), delimiter=",")
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("expected a two-column CSV of (x, u) samples")
    return Tabulated(x=data[:, 0], u=data[:, 1])


# ---------------------------------------------------------------------------
# quadrature / interpolation helpers

_GL3_NODES = np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)])
_GL3_WEIGHTS = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


def _interp_cubic(xt: np.ndarray, ft: np.ndarray, xq: np.ndarray) -> np.ndarray:
    """Local cubic (4-point Lagrange) interpolation on a strictly increasing table."""
    xq = np.asarray(xq, dtype=float)
    n = xt.size
    j = np.clip(np.searchsorted(xt, xq) - 1, 1, n - 3)
    out = np.zeros_like(xq)
    for m in range(-1, 3):
        idx = j + m
        w = np.ones_like(xq)
        for l in range(-1, 3):
            if l == m:
                continue
            w *= (xq - xt[j + l]) / (xt[idx] - xt[j + l])
        out += w * ft[idx]
    return out


def _fd4_derivative(f: np.ndarray, h: float) -> np.ndarray:
    """4th-order finite differences on a uniform grid, one-sided at the ends."""
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    return d


def cumulative_integral_4th(f: np.ndarray, h: float) -> np.ndarray:
    """Cumulative integral of node samples, exact for cubics (uniform grid)."""
    return cumulative_integral(f, h, order=4)


# ---------------------------------------------------------------------------
# the label map Y(x)


@dataclass(frozen=True)
class LabelMap:
    """Dense monotone table of the label Y(x) and its inverse x0(Y)."""

    x_table: np.ndarray
    y_table: np.ndarray
    slope_table: np.ndarray = dc_field(repr=False, default=None)  # u0_x at table nodes

    def Y_of_x(self, x) -> np.ndarray:
        return np.interp(x, self.x_table, self.y_table)

    def x_of_Y(self, Y) -> np.ndarray:
        return np.interp(Y, self.y_table, self.x_table)

    def slope_of_Y(self, Y) -> np.ndarray:
        return np.interp(Y, self.y_table, self.slope_table)


def _fine_grid(u0: InitialData, params: ModelParams, n_fine: int) -> np.ndarray:
    """Uniform fine grid on [-L, L] with x = 0 and any corners snapped to nodes."""
    x = np.linspace(-params.L, params.L, n_fine)
    anchors = [0.0] + [c for c in u0.kink_locations() if -params.L < c < params.L]
    for c in anchors:
        i = int(np.argmin(np.abs(x - c)))
        if 0 < i < n_fine - 1:
            x[i] = c
    return x


def cumulative_label(u0: InitialData, params: ModelParams, x_quad_grid: np.ndarray = None) -> LabelMap:
    """Build the monotone label map Y(x) = int_0^x (1 + u0_x^2)**(k/2) dx'.

    For data with an analytic slope the panel integrals use 3-point
    Gauss-Legendre (corners of peakon sums are panel boundaries, so every
    panel sees a smooth integrand).  Tabulated data are resampled to the fine
    grid, differentiated by 4th-order finite differences and integrated by a
    node-based rule exact for cubics.
    """
    if isinstance(u0, Zero):
        x = np.linspace(-params.L, params.L, 8 * params.N + 1) if x_quad_grid is None else x_quad_grid
        return LabelMap(x_table=x, y_table=x.copy(), slope_table=np.zeros_like(x))

    if x_quad_grid is None:
        x_quad_grid = _fine_grid(u0, params, 16 * params.N + 1)
    x = np.asarray(x_quad_grid, dtype=float)
    khalf = params.k // 2

    if u0.analytic_derivative_available:
        slope_nodes = u0.derivative(x)
        if np.max(np.abs(slope_nodes)) > MAX_INITIAL_SLOPE:
            raise UnboundedInitialSlope(
                "initial slope exceeds 1e12; initial data must be absolutely continuous"
            )
        # per-panel Gauss-Legendre on the analytic weight
        xl, xr = x[:-1], x[1:]
        mid = 0.5 * (xl + xr)
        rad = 0.5 * (xr - xl)
        inc = np.zeros_like(mid)
        for gn, gw in zip(_GL3_NODES, _GL3_WEIGHTS):
            s = u0.derivative(mid + gn * rad)
            inc += gw * int_pow(1.0 + s * s, khalf)
        inc *= rad
        y = np.empty_like(x)
        y[0] = 0.0
        np.cumsum(inc, out=y[1:])
    else:
        u_nodes = u0.value(x)
        h = x[1] - x[0]
        slope_nodes = _fd4_derivative(u_nodes, h)
        if not np.isfinite(slope_nodes).all():
            raise NonFiniteDerivative("tabulated data produce a non-finite slope")
        if np.max(np.abs(slope_nodes)) > MAX_INITIAL_SLOPE:
            raise UnboundedInitialSlope(
                "initial slope exceeds 1e12; initial data must be absolutely continuous"
            )
        w = int_pow(1.0 + slope_nodes * slope_nodes, khalf)
        y = cumulative_integral_4th(w, h)

    if not np.isfinite(y).all():
        raise NonFiniteDerivative("label integrand is non-finite")
    # normalize Y(0) = 0 (x = 0 is a table node by construction)
    y = y - y[np.argmin(np.abs(x))]
    if not np.all(np.diff(y) > 0):
        raise NonFiniteDerivative("label map failed to be strictly increasing")
    return LabelMap(x_table=x, y_table=y, slope_table=slope_nodes)


def _segment_layout(boundaries, N):
    """Distribute N nodes over the segments between consecutive boundaries.

    Seam labels are duplicated (each segment owns both its endpoints), so the
    total panel budget is N - n_segments; every segment gets at least 7 panels
    and panel counts are proportional to segment length.
    """
    lengths = np.diff(np.asarray(boundaries, dtype=float))
    S = lengths.size
    n_panels = N - S
    raw = np.maximum(np.round(n_panels * lengths / lengths.sum()).astype(int), 7)
    # absorb the rounding mismatch in the largest segment
    raw[int(np.argmax(raw))] += n_panels - int(raw.sum())
    if raw.min() < 7:
        raise ValueError("grid too coarse to give every segment at least 7 panels")
    return raw


def initialize_state(u0: InitialData, params: ModelParams) -> Tuple[CharGrid, CharState]:
    """Initial characteristic state: u = u0(x0(Y)), v = 2 arctan u0_x, xi = 1.

    Slope corners in the data become segment seams with duplicated labels; the
    two seam nodes carry the one-sided slopes, so the angle variable is smooth
    inside every segment for all time.
    """
    label = cumulative_label(u0, params)
    y_min = float(label.y_table[0])
    y_max = float(label.y_table[-1])
    corners_x = sorted(c for c in u0.kink_locations() if -params.L < c < params.L)
    corners_Y = [float(label.Y_of_x(c)) for c in corners_x]
    boundaries = [y_min] + corners_Y + [y_max]

    panel_counts = _segment_layout(boundaries, params.N)
    seg_nodes = []
    segments = []
    start = 0
    for s, n_pan in enumerate(panel_counts):
        seg = np.linspace(boundaries[s], boundaries[s + 1], n_pan + 1)
        seg_nodes.append(seg)
        segments.append((start, start + n_pan + 1, (boundaries[s + 1] - boundaries[s]) / n_pan))
        start += n_pan + 1
    nodes = np.concatenate(seg_nodes)
    dy = max(d for (_, _, d) in segments)
    grid = CharGrid(y_min=y_min, y_max=y_max, dy=dy, nodes=nodes,
                    segments=tuple(segments))

    x0 = label.x_of_Y(nodes)
    x0[0], x0[-1] = -params.L, params.L
    slope = (
        np.asarray(u0.derivative(x0), dtype=float)
        if u0.analytic_derivative_available
        else label.slope_of_Y(nodes)
    )
    # seam nodes carry the one-sided limits
    for s, c in enumerate(corners_x):
        left_node = segments[s][1] - 1
        right_node = segments[s + 1][0]
        x0[left_node] = x0[right_node] = c
        sl, sr = u0.derivative_limits(c)
        slope[left_node] = sl
        slope[right_node] = sr
    if not np.isfinite(slope).all():
        raise NonFiniteDerivative("initial slope is non-finite on the label grid")
    if np.max(np.abs(slope)) > MAX_INITIAL_SLOPE:
        raise UnboundedInitialSlope(
            "initial slope exceeds 1e12; initial data must be absolutely continuous"
        )
    state = CharState(
        T=0.0,
        u=np.asarray(u0.value(x0), dtype=float),
        v=2.0 * np.arctan(slope),
        xi=np.ones(params.N),
        x=x0,
    )
    return grid, state
