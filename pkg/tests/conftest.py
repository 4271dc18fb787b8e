"""Shared helpers: seeded band-limited fields and smooth positive densities."""

import numpy as np
import pytest

from nlns.grid import Field, TorusGrid, VecField


def band_limited(grid: TorusGrid, rng, modes: int = 4, terms: int = 5) -> np.ndarray:
    """Random real field with content only in low modes |j| <= modes."""
    out = np.zeros(grid.shape)
    mesh = grid.coordinate_mesh()
    L = grid.half_length
    for _ in range(terms):
        jvec = rng.integers(1, modes + 1, size=grid.dim)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        out += rng.normal() * np.cos(
            sum(j * np.pi * x / L for j, x in zip(jvec, mesh)) + phase
        )
    return out


def smooth_positive_density(grid: TorusGrid, rng, amp: float = 0.8, modes: int = 4) -> Field:
    """exp of a band-limited field: strictly positive, well resolved."""
    f = band_limited(grid, rng, modes=modes)
    peak = max(float(np.max(np.abs(f))), 1e-12)
    return Field(grid, np.exp(amp * f / peak))


def nonnegative_density(grid: TorusGrid, rng, modes: int = 4) -> Field:
    f = band_limited(grid, rng, modes=modes)
    f -= f.min()
    f += 0.05 * max(float(f.max()), 1e-12)
    return Field(grid, f)


def random_velocity(grid: TorusGrid, rng, amp: float = 0.2, modes: int = 3) -> VecField:
    comps = [amp * band_limited(grid, rng, modes=modes) for _ in range(grid.dim)]
    return VecField(grid, comps)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
