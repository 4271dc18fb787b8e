"""Independent cross-checks for the spectral machinery.

Two oracles live here:

* a direct O(N^2) circular-convolution sum (dims 1 and 2), used to certify
  the FFT convolution and the nonlocal force;
* a finite-difference rebuild of every named right-hand-side term with
  sixth-order centered stencils, used by the `rhs-check` command.  On
  smooth low-mode states the stencil error sits far below the comparison
  threshold, so a term-by-term match certifies the spectral assembly.
"""

from __future__ import annotations

import numpy as np

from . import dynamics
from .errors import ValidationError
from .grid import Field, TorusGrid, VecField

__all__ = [
    "direct_convolution",
    "fd_term_arrays",
    "compare_rhs_terms",
    "make_check_state",
]

# sixth-order centered stencils for the first and second derivative
_D1 = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0
_D2 = np.array([2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0]) / 180.0


def _fd_axis(values: np.ndarray, axis: int, h: float, stencil, power: int) -> np.ndarray:
    out = np.zeros_like(values)
    half = len(stencil) // 2
    for offset, coeff in zip(range(-half, half + 1), stencil):
        if coeff != 0.0:
            out += coeff * np.roll(values, -offset, axis=axis)
    return out / h**power


def fd_deriv(grid: TorusGrid, values, axis: int) -> np.ndarray:
    return _fd_axis(values, axis, grid.spacing, _D1, 1)


def fd_lap(grid: TorusGrid, values) -> np.ndarray:
    return sum(_fd_axis(values, a, grid.spacing, _D2, 2) for a in range(grid.dim))


def direct_convolution(grid: TorusGrid, table_values: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Circular convolution by explicit index arithmetic, scaled by h^dim.

    `table_values` is in grid layout (as stored on kernel tables); the sum
    computed is conv[i] = sum_j K[(i - j) mod n] f[j] h^dim.  Dims 1 and 2
    only; this is the test oracle, not a production path.
    """
    if grid.dim > 2:
        raise ValidationError("direct convolution oracle supports dims 1 and 2")
    kernel = np.fft.ifftshift(table_values)
    n = grid.n
    diff = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    if grid.dim == 1:
        gathered = kernel[diff]  # [i, j]
        return gathered @ f * grid.cell_volume
    gathered = kernel[diff[:, None, :, None], diff[None, :, None, :]]  # [i1,i2,j1,j2]
    return np.einsum("abij,ij->ab", gathered, f) * grid.cell_volume


def fd_term_arrays(grid: TorusGrid, params, table, rho: np.ndarray, m_comps):
    """Finite-difference twin of dynamics.rhs_terms, same names and signs."""
    mean_rho = float(np.mean(rho))
    floor = dynamics.U_FLOOR_FACTOR * mean_rho
    rho_safe = np.maximum(rho, floor)
    u = [m / rho_safe for m in m_comps]
    dim = grid.dim

    density_terms = {}
    momentum_terms = {}

    density_terms["transport"] = -sum(fd_deriv(grid, m_comps[a], a) for a in range(dim))
    if params.epsilon > 0:
        density_terms["diffusion"] = params.epsilon * fd_lap(grid, rho)

    grad_u = [[fd_deriv(grid, u[b], a) for b in range(dim)] for a in range(dim)]

    momentum_terms["advection"] = [
        -sum(fd_deriv(grid, m_comps[a] * u[b], a) for a in range(dim)) for b in range(dim)
    ]
    if params.mu > 0:
        momentum_terms["viscous_stress"] = [
            params.mu
            * sum(
                fd_deriv(grid, rho * 0.5 * (grad_u[a][b] + grad_u[b][a]), a)
                for a in range(dim)
            )
            for b in range(dim)
        ]
    if table is not None:
        momentum_terms["nonlocal_force"] = [
            -rho * direct_convolution(grid, table.grad[b], rho) for b in range(dim)
        ]
    if params.r0 > 0:
        momentum_terms["friction_linear"] = [-params.r0 * u[b] for b in range(dim)]
    if params.r1 > 0:
        speed2 = sum(c**2 for c in u)
        momentum_terms["friction_cubic"] = [
            -params.r1 * rho * speed2 * u[b] for b in range(dim)
        ]
    if params.kappa > 0:
        s = np.sqrt(rho)
        ratio = fd_lap(grid, s) / s
        momentum_terms["dispersive"] = [
            params.kappa * rho * fd_deriv(grid, ratio, b) for b in range(dim)
        ]
    if params.epsilon > 0:
        grad_rho = [fd_deriv(grid, rho, a) for a in range(dim)]
        momentum_terms["cross_gradient"] = [
            -params.epsilon * sum(grad_rho[a] * grad_u[a][b] for a in range(dim))
            for b in range(dim)
        ]
    if params.nu > 0:
        momentum_terms["bilaplacian"] = [
            -params.nu * fd_lap(grid, fd_lap(grid, u[b])) for b in range(dim)
        ]
    if params.eta > 0:
        barrier = rho_safe**-6
        momentum_terms["barrier"] = [
            params.eta * fd_deriv(grid, barrier, b) for b in range(dim)
        ]
    if params.delta > 0:
        lap3 = fd_lap(grid, fd_lap(grid, fd_lap(grid, rho)))
        momentum_terms["highorder"] = [
            params.delta * rho * fd_deriv(grid, lap3, b) for b in range(dim)
        ]
    return density_terms, momentum_terms


def make_check_state(grid: TorusGrid, params, seed: int = 0):
    """Smooth low-mode state for the cross-check.

    Amplitudes are kept small so that harmonics produced by the nonlinear
    terms stay far below the stencil resolution limit; the stencil error on
    the comparison is then well under the 1e-4 threshold.
    """
    rng = np.random.default_rng(seed)
    mesh = grid.coordinate_mesh()
    L = grid.half_length
    rho = np.full(grid.shape, 1.0)
    u = [np.zeros(grid.shape) for _ in range(grid.dim)]
    for _ in range(3):
        jvec = rng.integers(1, 3, size=grid.dim)
        phase = rng.uniform(0, 2 * np.pi)
        arg = sum(j * np.pi * x / L for j, x in zip(jvec, mesh))
        rho += 0.08 * rng.uniform(0.5, 1.0) * np.cos(arg + phase)
        for a in range(grid.dim):
            u[a] += 0.1 * rng.normal() * np.sin(arg + rng.uniform(0, 2 * np.pi))
    state = dynamics.State(0.0, Field(grid, rho), VecField(grid, u))
    return state


def compare_rhs_terms(state, params, table=None) -> dict:
    """Per-term relative discrepancy between spectral and stencil builds."""
    grid = state.grid
    rho = state.rho.values
    m = state.momentum_arrays()
    spec_d, spec_m, _ = dynamics.rhs_terms(grid, params, table, rho, m)
    fd_d, fd_m = fd_term_arrays(grid, params, table, rho, m)
    report = {}

    def rel(a, b):
        scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-300)
        return float(np.max(np.abs(a - b)) / scale)

    for name in spec_d:
        report[f"density.{name}"] = rel(spec_d[name], fd_d[name])
    for name in spec_m:
        report[f"momentum.{name}"] = max(
            rel(spec_m[name][b], fd_m[name][b]) for b in range(grid.dim)
        )
    return report
