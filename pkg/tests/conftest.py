import numpy as np
import pytest

from charflow.model import CharState, ModelParams, uniform_grid, validate_params
from charflow.nonlocal_ops import metric_profile
from charflow.transform import GaussianBump, InitialData


class SumOfGaussians(InitialData):
    """Smooth test data: sum of Gaussian bumps with analytic slope."""

    analytic_derivative_available = True

    def __init__(self, bumps):
        self.bumps = [GaussianBump(amplitude=a, width=w, center=c) for a, w, c in bumps]

    def value(self, x):
        out = np.zeros_like(np.asarray(x, dtype=float))
        for b in self.bumps:
            out += b.value(x)
        return out

    def derivative(self, x):
        out = np.zeros_like(np.asarray(x, dtype=float))
        for b in self.bumps:
            out += b.derivative(x)
        return out


def random_smooth_field(rng, nodes, n_modes=6, scale=1.0, decay_to_zero=True):
    """Smooth compactly-decaying random field on the given nodes."""
    L = nodes[-1] - nodes[0]
    mid = 0.5 * (nodes[0] + nodes[-1])
    out = np.zeros_like(nodes)
    for m in range(1, n_modes + 1):
        amp = rng.normal() * scale / m
        phase = rng.uniform(0, 2 * np.pi)
        out += amp * np.sin(2 * np.pi * m * (nodes - nodes[0]) / L + phase)
    if decay_to_zero:
        out *= np.exp(-0.5 * ((nodes - mid) / (0.22 * L)) ** 2)
    return out


def random_valid_state(rng, params: ModelParams, dy: float):
    """Random smooth state with positive xi and consistent monotone x."""
    grid = uniform_grid(0.0, dy * (params.N - 1), params.N)
    nodes = grid.nodes
    u = random_smooth_field(rng, nodes, scale=0.8)
    v = random_smooth_field(rng, nodes, scale=1.8)
    xi = 1.0 + 0.6 * np.tanh(random_smooth_field(rng, nodes, scale=1.0))
    st = CharState(T=0.0, u=u, v=v, xi=xi, x=nodes.copy())
    X = metric_profile(st, params, grid).X
    return grid, CharState(T=0.0, u=u, v=v, xi=xi, x=X - X[-1] / 2)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
