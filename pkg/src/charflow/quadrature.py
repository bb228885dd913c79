"""Stencil-based quadrature and interpolation helpers on uniform grids.

All rules are written as `left-node value plus a weighted correction`, so
constant inputs are reproduced exactly in floating point; degenerate flat
regions of the metric therefore keep kernel weights exactly 1.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import polynomial as _poly


def _lagrange_coeffs(nodes):
    out = []
    for xm in nodes:
        c = np.array([1.0])
        denom = 1.0
        for xl in nodes:
            if xl == xm:
                continue
            c = _poly.polymul(c, np.array([-xl, 1.0]))
            denom *= xm - xl
        out.append(c / denom)
    return out


def integration_weights(nodes, a: float = 0.0, b: float = 1.0) -> np.ndarray:
    """Weights w with sum w_m f(nodes_m) = int_a^b (interpolating poly) dt."""
    ws = []
    for c in _lagrange_coeffs(nodes):
        ci = _poly.polyint(c)
        ws.append(_poly.polyval(b, ci) - _poly.polyval(a, ci))
    return np.array(ws)


def interpolation_weights(nodes, t: float) -> np.ndarray:
    """Lagrange weights evaluating the interpolating polynomial at t."""
    return np.array([_poly.polyval(t, c) for c in _lagrange_coeffs(nodes)])


class _CumulativeRule:
    """Per-panel integration of node samples, exact for degree p-1."""

    def __init__(self, p: int):
        self.p = p
        self.half = p // 2 - 1
        self.w_int = integration_weights(np.arange(-self.half, p - self.half, dtype=float))
        self.w_left = {
            j: integration_weights(np.arange(-j, p - j, dtype=float)) for j in range(self.half)
        }
        # right-boundary panels use the last p nodes; l is the panel's local index
        self.w_right = {
            l: integration_weights(np.arange(p, dtype=float), a=l, b=l + 1.0)
            for l in range(self.half + 1, p - 1)
        }

    def increments(self, f: np.ndarray, h: float) -> np.ndarray:
        n = f.size
        p, half = self.p, self.half
        inc = np.empty(n - 1)
        js = np.arange(half, n - p + half + 1)
        base = f[js]
        acc = np.zeros(js.size)
        for m in range(p):
            acc += self.w_int[m] * (f[js - half + m] - base)
        inc[js] = h * (base + acc)
        head, tail = f[:p], f[n - p :]
        for j, w in self.w_left.items():
            inc[j] = h * (f[j] + np.dot(w, head - f[j]))
        for l, w in self.w_right.items():
            j = n - p + l
            inc[j] = h * (f[j] + np.dot(w, tail - f[j]))
        return inc


_CUM_RULES = {4: _CumulativeRule(4), 6: _CumulativeRule(6)}


def cumulative_integral(f: np.ndarray, h: float, order: int = 4) -> np.ndarray:
    """Cumulative integral of uniform samples, exact for polynomials of degree order-1."""
    f = np.asarray(f, dtype=float)
    if f.size < order:
        raise ValueError(f"need at least {order} samples for the order-{order} rule")
    out = np.empty(f.size)
    out[0] = 0.0
    np.cumsum(_CUM_RULES[order].increments(f, h), out=out[1:])
    return out


class PanelInterpolator:
    """Interpolates node arrays to fixed fractional positions inside each panel.

    p-node stencils (quintic for p = 6), exact for constants; boundary panels
    reuse the first/last p nodes with the evaluation point shifted.
    """

    def __init__(self, fracs, p: int = 6):
        self.fracs = np.asarray(fracs, dtype=float)
        self.p = p
        self.half = p // 2 - 1
        nodes = np.arange(p, dtype=float)
        self.w_int = np.stack(
            [interpolation_weights(nodes, self.half + f) for f in self.fracs]
        )
        self.w_left = {
            j: np.stack([interpolation_weights(nodes, j + f) for f in self.fracs])
            for j in range(self.half)
        }
        self.w_right = {
            l: np.stack([interpolation_weights(nodes, l + f) for f in self.fracs])
            for l in range(self.half + 1, p - 1)
        }

    def __call__(self, arr: np.ndarray) -> np.ndarray:
        """-> (n-1, len(fracs)) values inside each of the n-1 panels."""
        n = arr.size
        p, half = self.p, self.half
        out = np.empty((n - 1, self.fracs.size))
        js = np.arange(half, n - p + half + 1)
        base = arr[js]
        for g in range(self.fracs.size):
            acc = np.zeros(js.size)
            w = self.w_int[g]
            for m in range(p):
                acc += w[m] * (arr[js - half + m] - base)
            out[js, g] = base + acc
        head, tail = arr[:p], arr[n - p :]
        for j, wmat in self.w_left.items():
            out[j] = arr[j] + wmat @ (head - arr[j])
        for l, wmat in self.w_right.items():
            j = n - p + l
            out[j] = arr[j] + wmat @ (tail - arr[j])
        return out
