"""Monitored functionals: energy, entropy, growth functionals, dissipations.

Everything the construction controls a priori is evaluated here from field
snapshots: the total energy and its parts, the effective-velocity entropy
(kinetic energy of u + grad(rho)/rho), the superquadratic velocity/pair
functionals, the full dissipation suite, pair moments, and the discrete
energy-budget residual

    dE/dt + sum(dissipations) + epsilon * int grad(K_L * rho) . grad rho = 0,

checked along runs with centered time differences.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields as dc_fields

import numpy as np

from . import scalars
from .errors import ValidationError
from .grid import (
    Field,
    TorusGrid,
    convolve_array,
    deriv_array,
    grad_arrays,
    hessian_arrays,
    lap_array,
)
from .kernel import KernelTable

__all__ = [
    "EnergyParts",
    "Dissipations",
    "DiagnosticsRecord",
    "energy",
    "bd_entropy",
    "mv_functional",
    "dissipation_suite",
    "energy_budget_residual",
    "attach_budget_residuals",
    "jungel_check",
    "moment2",
    "collect_record",
    "write_diagnostics_csv",
    "read_diagnostics_csv",
]


@dataclass
class EnergyParts:
    kinetic: float = 0.0
    interaction: float = 0.0
    barrier: float = 0.0
    quantum: float = 0.0
    highorder: float = 0.0

    def total(self) -> float:
        return self.kinetic + self.interaction + self.barrier + self.quantum + self.highorder


@dataclass
class Dissipations:
    """Named dissipation integrals, with their coefficients included."""

    viscous: float = 0.0          # int rho |D(u)|^2
    bilaplacian: float = 0.0      # nu int |Lap u|^2
    friction_linear: float = 0.0  # r0 int |u|^2
    friction_cubic: float = 0.0   # r1 int rho |u|^4
    quantum_cross: float = 0.0    # kappa*eps int rho |Hess log rho|^2
    highorder_cross: float = 0.0  # eps*delta int |Lap^2 rho|^2
    barrier_cross: float = 0.0    # (2/3)*eps*eta int |grad rho^-3|^2
    kernel_cross: float = 0.0     # eps int grad(K_L * rho) . grad rho

    def total(self) -> float:
        return sum(getattr(self, f.name) for f in dc_fields(self))


@dataclass
class DiagnosticsRecord:
    t: float
    mass: float
    energy_E: float
    energy_parts: EnergyParts
    bd_entropy: float
    mv_velocity: float
    mv_pair: float
    dissipations: Dissipations
    moment2: float
    rho_min: float
    energy_budget_residual: float = float("nan")

    def flatten(self) -> dict:
        out = {}
        for f in dc_fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (EnergyParts, Dissipations)):
                for g in dc_fields(value):
                    out[f"{f.name}.{g.name}"] = getattr(value, g.name)
            else:
                out[f.name] = value
        return out


def _quad(grid: TorusGrid, arr) -> float:
    return float(np.sum(arr) * grid.cell_volume)


def energy(state, params, kernel: KernelTable | None = None):
    """Total energy and its parts.

    E = int( rho|u|^2/2 + rho (K_L*rho)/2 + (eta/7) rho^-6
             + (kappa/2)|grad sqrt(rho)|^2 + (delta/2)|grad Lap rho|^2 ).
    """
    grid = state.grid
    rho = state.rho.values
    parts = EnergyParts()
    speed2 = sum(c**2 for c in state.u.components)
    parts.kinetic = 0.5 * _quad(grid, rho * speed2)
    if kernel is not None:
        conv = convolve_array(grid, rho, kernel.spectrum)
        parts.interaction = 0.5 * _quad(grid, rho * conv)
    if params.eta > 0:
        parts.barrier = params.eta / 7.0 * _quad(grid, rho**-6.0)
    if params.kappa > 0:
        s = np.sqrt(rho)
        g2 = sum(g**2 for g in grad_arrays(grid, s))
        parts.quantum = 0.5 * params.kappa * _quad(grid, g2)
    if params.delta > 0:
        gl = lap_array(grid, rho)
        g2 = sum(g**2 for g in grad_arrays(grid, gl))
        parts.highorder = 0.5 * params.delta * _quad(grid, g2)
    return parts.total(), parts


def bd_entropy(state, params, kernel: KernelTable | None = None) -> float:
    """Entropy of the effective velocity u + grad(rho)/rho.

    E_BD = int( rho|u + grad log rho|^2/2 + rho (K_L*rho)
                + (delta/2)|grad Lap rho|^2 + (kappa/2)|grad sqrt(rho)|^2
                + (eta/7) rho^-6 );
    grad log rho is the spectral gradient of log rho, which needs a strictly
    positive density.
    """
    grid = state.grid
    rho = state.rho.values
    if np.min(rho) <= 0:
        raise ValidationError("bd_entropy requires a strictly positive density")
    glog = grad_arrays(grid, np.log(rho))
    eff2 = sum((c + g) ** 2 for c, g in zip(state.u.components, glog))
    total = 0.5 * _quad(grid, rho * eff2)
    if kernel is not None:
        conv = convolve_array(grid, rho, kernel.spectrum)
        total += _quad(grid, rho * conv)
    if params.delta > 0:
        gl = lap_array(grid, rho)
        total += 0.5 * params.delta * _quad(grid, sum(g**2 for g in grad_arrays(grid, gl)))
    if params.kappa > 0:
        s = np.sqrt(rho)
        total += 0.5 * params.kappa * _quad(grid, sum(g**2 for g in grad_arrays(grid, s)))
    if params.eta > 0:
        total += params.eta / 7.0 * _quad(grid, rho**-6.0)
    return float(total)


def mv_functional(state, kernel_F: KernelTable):
    """Velocity and pair growth functionals.

    Velocity part: int rho F(|u|); pair part: int rho (F(|.|) * rho), the
    double integral of F of the pairwise minimum-image distance.
    """
    grid = state.grid
    rho = state.rho.values
    speed = state.u.magnitude()
    velocity_part = _quad(grid, rho * scalars.F(speed))
    conv = convolve_array(grid, rho, kernel_F.spectrum)
    pair_part = _quad(grid, rho * conv)
    return float(velocity_part), float(pair_part)


def dissipation_suite(state, params, kernel: KernelTable | None = None, c_impl=None):
    """All dissipation integrals of the energy identity, plus the kernel pairing.

    Returns (Dissipations, aux) where aux carries the raw kernel pairing
    int grad(K_L * rho) . grad rho and, when `c_impl` is given, the flag for
    its lower bound -c_impl * mass^2.
    """
    grid = state.grid
    rho = state.rho.values
    u = state.u.components
    dim = grid.dim
    d = Dissipations()

    grad_u = [[deriv_array(grid, u[b], a, 1) for b in range(dim)] for a in range(dim)]
    sym2 = sum(
        (0.5 * (grad_u[a][b] + grad_u[b][a])) ** 2 for a in range(dim) for b in range(dim)
    )
    d.viscous = _quad(grid, rho * sym2)
    if params.nu > 0:
        d.bilaplacian = params.nu * _quad(
            grid, sum(lap_array(grid, c) ** 2 for c in u)
        )
    if params.r0 > 0:
        d.friction_linear = params.r0 * _quad(grid, sum(c**2 for c in u))
    if params.r1 > 0:
        d.friction_cubic = params.r1 * _quad(grid, rho * sum(c**2 for c in u) ** 2)
    if params.kappa > 0 and params.epsilon > 0:
        if np.min(rho) <= 0:
            raise ValidationError("dissipation suite needs rho > 0 for log terms")
        H = hessian_arrays(grid, np.log(rho))
        h2 = sum(H[a][b] ** 2 for a in range(dim) for b in range(dim))
        d.quantum_cross = params.kappa * params.epsilon * _quad(grid, rho * h2)
    if params.epsilon > 0 and params.delta > 0:
        d.highorder_cross = params.epsilon * params.delta * _quad(
            grid, lap_array(grid, rho, power=2) ** 2
        )
    if params.epsilon > 0 and params.eta > 0:
        if np.min(rho) <= 0:
            raise ValidationError("dissipation suite needs rho > 0 for negative powers")
        g2 = sum(g**2 for g in grad_arrays(grid, rho**-3.0))
        d.barrier_cross = (2.0 / 3.0) * params.epsilon * params.eta * _quad(grid, g2)

    aux = {}
    if kernel is not None:
        rhohat = np.fft.fftn(rho)
        grad_rho = grad_arrays(grid, rho)
        pairing = 0.0
        for a in range(dim):
            conv = np.real(np.fft.ifftn(rhohat * kernel.grad_spectra[a]))
            pairing += _quad(grid, conv * grad_rho[a])
        aux["kernel_pairing"] = float(pairing)
        d.kernel_cross = params.epsilon * pairing
        if c_impl is not None:
            mass = _quad(grid, rho)
            aux["kernel_pairing_bound"] = -float(c_impl) * mass**2
            aux["kernel_pairing_bound_holds"] = bool(
                pairing >= -float(c_impl) * mass**2
            )
    return d, aux


def energy_budget_residual(records) -> np.ndarray:
    """Normalized residual of the energy identity along a record series.

    Centered differences of E against the instantaneous dissipation sum;
    endpoints are not defined and come back as NaN.  Residuals are
    normalized by max(|E|, 1).
    """
    if len(records) < 3:
        raise ValidationError("need at least 3 records for a budget residual")
    t = np.array([r.t for r in records])
    steps = np.diff(t)
    if np.max(np.abs(steps - steps[0])) > 1e-9 * max(abs(steps[0]), 1e-300):
        raise ValidationError("records must be uniformly spaced in time")
    E = np.array([r.energy_E for r in records])
    D = np.array([r.dissipations.total() for r in records])
    out = np.full(len(records), np.nan)
    dEdt = (E[2:] - E[:-2]) / (2.0 * steps[0])
    out[1:-1] = (dEdt + D[1:-1]) / np.maximum(np.abs(E[1:-1]), 1.0)
    return out


def attach_budget_residuals(records):
    """Fill the residual field in place (NaN endpoints, NaN if too short)."""
    if len(records) >= 3:
        res = energy_budget_residual(records)
        for r, v in zip(records, res):
            r.energy_budget_residual = float(v)
    return records


def jungel_check(rho: Field):
    """Both convexity inequalities for the log-Hessian dissipation.

    lhs  = int rho |Hess log rho|^2
    rhs1 = (1/7) int |Hess sqrt(rho)|^2
    rhs2 = (1/8) int |grad rho^(1/4)|^4
    """
    grid = rho.grid
    vals = rho.values
    if np.min(vals) <= 0:
        raise ValidationError("jungel_check requires a strictly positive density")
    dim = grid.dim
    Hlog = hessian_arrays(grid, np.log(vals))
    lhs = _quad(grid, vals * sum(Hlog[a][b] ** 2 for a in range(dim) for b in range(dim)))
    Hs = hessian_arrays(grid, np.sqrt(vals))
    rhs1 = _quad(grid, sum(Hs[a][b] ** 2 for a in range(dim) for b in range(dim))) / 7.0
    gq = grad_arrays(grid, vals**0.25)
    rhs2 = _quad(grid, sum(g**2 for g in gq) ** 2) / 8.0
    slack = 1.0 - 1e-8
    return (
        float(lhs),
        float(rhs1),
        float(rhs2),
        bool(lhs >= rhs1 * slack and lhs >= rhs2 * slack),
    )


def moment2(rho: Field, r2_table: KernelTable) -> float:
    """Double second moment: int int |x-y|^2 rho(x) rho(y) at minimum image."""
    conv = convolve_array(rho.grid, rho.values, r2_table.spectrum)
    return float(_quad(rho.grid, rho.values * conv))


def collect_record(state, params, kernel, f_table, r2_table, c_impl=None) -> DiagnosticsRecord:
    grid = state.grid
    rho_min = float(np.min(state.rho.values))
    total, parts = energy(state, params, kernel)
    if rho_min > 0:
        bd = bd_entropy(state, params, kernel)
    else:
        bd = float("nan")
    mv_vel, mv_pair = mv_functional(state, f_table)
    diss, _ = dissipation_suite(state, params, kernel, c_impl)
    return DiagnosticsRecord(
        t=state.t,
        mass=float(np.sum(state.rho.values) * grid.cell_volume),
        energy_E=total,
        energy_parts=parts,
        bd_entropy=bd,
        mv_velocity=mv_vel,
        mv_pair=mv_pair,
        dissipations=diss,
        moment2=moment2(state.rho, r2_table),
        rho_min=rho_min,
    )


# ---------------------------------------------------------------------------
# CSV round trip, full double precision
# ---------------------------------------------------------------------------


def _header(record: DiagnosticsRecord) -> list[str]:
    return list(record.flatten().keys())


def write_diagnostics_csv(path, records):
    if not records:
        raise ValidationError("no records to write")
    names = _header(records[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for r in records:
            flat = r.flatten()
            writer.writerow(["%.17g" % flat[name] for name in names])


def read_diagnostics_csv(path) -> list[DiagnosticsRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    records = []
    for row in rows:
        data = dict(zip(names, row))
        parts = EnergyParts(
            **{k.split(".", 1)[1]: v for k, v in data.items() if k.startswith("energy_parts.")}
        )
        diss = Dissipations(
            **{k.split(".", 1)[1]: v for k, v in data.items() if k.startswith("dissipations.")}
        )
        records.append(
            DiagnosticsRecord(
                t=data["t"],
                mass=data["mass"],
                energy_E=data["energy_E"],
                energy_parts=parts,
                bd_entropy=data["bd_entropy"],
                mv_velocity=data["mv_velocity"],
                mv_pair=data["mv_pair"],
                dissipations=diss,
                moment2=data["moment2"],
                rho_min=data["rho_min"],
                energy_budget_residual=data["energy_budget_residual"],
            )
        )
    return records
