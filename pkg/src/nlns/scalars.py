"""Scalar analysis toolkit: growth functional, its truncations, density
cutoffs, velocity truncation, convex conjugacy, and the weak Gronwall bound.

F(z) = (1+z^2)/2 * ln(1+z^2) is the superquadratic weight whose sublevel
truncations F_n grow almost linearly at infinity.  psi(z) = F'(z)/z has the
closed form 1 + ln(1+z^2), which is also the continuous extension at z = 0.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .grid import VecField

__all__ = [
    "F",
    "psi",
    "F_n",
    "psi_n",
    "F_n_prime",
    "F_n_second",
    "growth_bounds_check",
    "convex_conjugate_identity",
    "conjugate_numeric",
    "truncate_velocity",
    "DensityCutoffs",
    "apply_cutoffs",
    "weak_gronwall",
]


def F(z):
    z = np.asarray(z, dtype=np.float64)
    return (1.0 + z**2) / 2.0 * np.log1p(z**2)


def psi(z):
    """F'(z)/z; equals 1 + ln(1+z^2), with psi(0) = 1 by continuity."""
    z = np.asarray(z, dtype=np.float64)
    return 1.0 + np.log1p(z**2)


def F_prime(z):
    z = np.asarray(z, dtype=np.float64)
    return z * psi(z)


def F_n(z, n):
    """Truncated weight: equals F below the knee z = n, grows like n*z*ln above."""
    z = np.asarray(z, dtype=np.float64)
    lo = (1.0 + z**2) / 2.0 * np.log1p(z**2)
    hi = (n * z + (1.0 - n**2) / 2.0) * np.log1p(z**2)
    return np.where(z <= n, lo, hi)


def psi_n(z, n):
    z = np.asarray(z, dtype=np.float64)
    lo = 1.0 + np.log1p(z**2)
    zsafe = np.where(z > 0, z, 1.0)
    hi = (n / zsafe) * np.log1p(z**2) + (2.0 * n * z + 1.0 - n**2) / (1.0 + z**2)
    return np.where(z <= n, lo, hi)


def F_n_prime(z, n):
    return np.asarray(z, dtype=np.float64) * psi_n(z, n)


def F_n_second(z, n):
    z = np.asarray(z, dtype=np.float64)
    lo = 1.0 + np.log1p(z**2) + 2.0 * z**2 / (1.0 + z**2)
    hi = 2.0 * n * z / (1.0 + z**2) + (
        (n**2 - 1.0) * z**2 + 4.0 * n * z - (n**2 - 1.0)
    ) / (1.0 + z**2) ** 2
    return np.where(z <= n, lo, hi)


def _log_grid(zmax=1e6, num=4001):
    return np.concatenate([[0.0], np.logspace(-6, np.log10(zmax), num)])


def growth_bounds_check(n: int, delta: float, zmax: float = 1e6, num: int = 4001) -> dict:
    """Certify the growth bounds of F_n numerically on a dense log grid.

    Returns the smallest constants that work on the grid for
    F_n <= C |z|^(1+delta) and F_n' <= C |z|^delta, whether z F_n' <= 4 F_n
    holds everywhere on the grid, and the range of F_n''.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    if not 0.0 < delta < 1.0:
        raise ValidationError("delta must lie in (0,1)")
    z = _log_grid(zmax, num)[1:]  # z > 0
    fn = F_n(z, n)
    fnp = F_n_prime(z, n)
    c_growth = float(np.max(fn / z ** (1.0 + delta)))
    c_prime = float(np.max(fnp / z**delta))
    factor4 = bool(np.all(z * fnp <= 4.0 * fn * (1.0 + 1e-12)))
    second = F_n_second(np.concatenate([[0.0], z]), n)
    # n-independent bounds F_n <= C + C z^(2+delta), z F_n' <= C + C z^(1+delta)
    c_uniform = float(np.max(fn / (1.0 + z ** (2.0 + delta))))
    c_uniform_prime = float(np.max(z * fnp / (1.0 + z ** (1.0 + delta))))
    return {
        "n": n,
        "delta": delta,
        "C_growth": c_growth,
        "C_prime": c_prime,
        "factor4_pass": factor4,
        "second_derivative_min": float(second.min()),
        "second_derivative_max": float(second.max()),
        "C_uniform": c_uniform,
        "C_uniform_prime": c_uniform_prime,
    }


def smallest_factor4_level(zmax: float = 1e6, num: int = 2001, nmax: int = 64) -> int:
    """Smallest truncation level for which z F_n' <= 4 F_n holds on the grid."""
    z = _log_grid(zmax, num)[1:]
    for n in range(1, nmax + 1):
        if np.all(z * F_n_prime(z, n) <= 4.0 * F_n(z, n) * (1.0 + 1e-12)):
            return n
    return -1


def convex_conjugate_identity(f, fprime, z, a: float = 4.0):
    """Closed-form conjugate value at F'(z) and the companion bound.

    For a strictly convex differentiable F, the Legendre transform satisfies
    F*(F'(z)) = z F'(z) - F(z); when z F'(z) <= a F(z) this is at most
    (a-1) F(z).  Returns the pair (conjugate value, bound).
    """
    z = np.asarray(z, dtype=np.float64)
    value = z * fprime(z) - f(z)
    bound = (a - 1.0) * f(z)
    return value, bound


def conjugate_numeric(f, b: float, zmax: float = 1e7, num: int = 4001, refine: int = 60) -> float:
    """Legendre transform F*(b) = sup_z (b z - F(z)) by grid sup + golden refine.

    Pure numeric-sup oracle: coarse maximum over a log grid, then
    golden-section refinement around the best bracket.
    """
    z = _log_grid(zmax, num)
    g = b * z - f(z)
    i = int(np.argmax(g))
    lo = z[max(i - 1, 0)]
    hi = z[min(i + 1, len(z) - 1)]
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a_, b_ = lo, hi
    c = b_ - invphi * (b_ - a_)
    d = a_ + invphi * (b_ - a_)
    for _ in range(refine):
        if (b * c - f(c)) >= (b * d - f(d)):
            b_ = d
        else:
            a_ = c
        c = b_ - invphi * (b_ - a_)
        d = a_ + invphi * (b_ - a_)
    zstar = 0.5 * (a_ + b_)
    return float(max(np.max(g), b * zstar - f(zstar)))


def truncate_velocity(u: VecField, M: float) -> VecField:
    """Radial clamp of the pointwise speed at M; directions are preserved."""
    if M <= 0:
        raise ValidationError("truncation level M must be positive")
    speed = u.magnitude()
    scale = np.where(speed > M, M / np.where(speed > 0, speed, 1.0), 1.0)
    return VecField(u.grid, [c * scale for c in u.components])


def _smoothstep01(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (6.0 * s**2 - 15.0 * s + 10.0)


class DensityCutoffs:
    """Smooth cutoffs of the density at vacuum and at infinity.

    phi_zero(rho) vanishes below 1/(2m) and equals 1 above 1/m;
    phi_inf(rho) equals 1 below k and vanishes above 2k.  Both transitions
    are quintic smoothsteps.  Measured slope maxima are exported; note that
    any smooth profile on [1/(2m), 1/m] has max slope > 2m (the width is
    1/(2m)), so the zero cutoff realizes 3.75*m while the infinity cutoff
    satisfies its nominal 2/k bound with room to spare.
    """

    def __init__(self, m: float, k: float):
        if m <= 0 or k <= 0:
            raise ValidationError("cutoff levels m and k must be positive")
        self.m = float(m)
        self.k = float(k)
        # max slope of the quintic smoothstep is 1.875 / width
        self.zero_slope_max = 1.875 / (1.0 / m - 1.0 / (2.0 * m))
        self.inf_slope_max = 1.875 / k

    def phi_zero(self, rho):
        rho = np.asarray(rho, dtype=np.float64)
        lo, hi = 1.0 / (2.0 * self.m), 1.0 / self.m
        return _smoothstep01((rho - lo) / (hi - lo))

    def phi_inf(self, rho):
        rho = np.asarray(rho, dtype=np.float64)
        lo, hi = self.k, 2.0 * self.k
        return 1.0 - _smoothstep01((rho - lo) / (hi - lo))

    def combined(self, rho):
        return self.phi_zero(rho) * self.phi_inf(rho)


def apply_cutoffs(rho, u: VecField, cutoffs: DensityCutoffs):
    """v = phi_zero(rho) * phi_inf(rho) * u, with the measured bound report.

    The report carries the quantities the estimates lean on: the largest
    slope of each profile, max phi(rho)/sqrt(rho) against its sqrt(2m)
    bound, and max |phi'(rho)| sqrt(rho).
    """
    rho_values = rho.values if hasattr(rho, "values") else np.asarray(rho)
    phi = cutoffs.combined(rho_values)
    v = VecField(u.grid, [phi * c for c in u.components])
    sqrt_rho = np.sqrt(np.maximum(rho_values, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(sqrt_rho > 0, phi / np.where(sqrt_rho > 0, sqrt_rho, 1.0), 0.0)
    eps = 1e-7 * max(float(np.max(rho_values)), 1.0)
    slope = (cutoffs.combined(rho_values + eps) - cutoffs.combined(rho_values - eps)) / (2 * eps)
    report = {
        "max_phi_over_sqrt_rho": float(np.max(ratio)),
        "bound_sqrt_2m": float(np.sqrt(2.0 * cutoffs.m)),
        "max_slope_times_sqrt_rho": float(np.max(np.abs(slope) * sqrt_rho)),
        "zero_slope_max": cutoffs.zero_slope_max,
        "zero_slope_nominal": 2.0 * cutoffs.m,
        "inf_slope_max": cutoffs.inf_slope_max,
        "inf_slope_nominal": 2.0 / cutoffs.k,
    }
    return v, report


def weak_gronwall(f_samples, a: float, b_samples, dt: float, rtol: float = 1e-7):
    """Check f(t) <= f(s) e^{a(t-s)} + int_s^t e^{a(t-tau)} b(tau) dtau.

    Uniformly sampled f and b; the convolution integral uses the trapezoid
    rule.  All ordered pairs s < t are checked via a prefix-minimum sweep.
    Returns (pass, worst normalized margin); positive margin means the
    conclusion was violated beyond discretization slack.
    """
    f = np.asarray(f_samples, dtype=np.float64)
    b = np.asarray(b_samples, dtype=np.float64)
    if a < 0:
        raise ValidationError("a must be non-negative")
    if np.any(b < 0):
        raise ValidationError("b must be non-negative")
    if f.shape != b.shape or f.ndim != 1 or len(f) < 2:
        raise ValidationError("f and b must be 1D arrays of equal length >= 2")
    if dt <= 0:
        raise ValidationError("dt must be positive")
    t = dt * np.arange(len(f))
    decay = np.exp(-a * t)
    g = decay * b
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * dt)])
    # bound(t) = e^{at} * (min_{s<t} [f(s) e^{-as} - I(s)] + I(t))
    prefix = np.minimum.accumulate(f * decay - cum)
    worst = -np.inf
    for i in range(1, len(f)):
        bound = np.exp(a * t[i]) * (prefix[i - 1] + cum[i])
        margin = (f[i] - bound) / max(1.0, abs(f[i]), abs(bound))
        worst = max(worst, margin)
    return bool(worst <= rtol), float(worst)
