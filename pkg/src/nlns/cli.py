"""Command-line driver.

Exit codes: 0 success, 1 validation error (bad config, bad arguments),
2 numerical failure (non-finite values, density underflow).  Errors print
one machine-readable line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import dynamics, functionals, kernel, reference, scalars
from .config import parse_config_file
from .errors import NumericalError, ValidationError
from .grid import Field, TorusGrid

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as validation errors (exit 1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="nlns", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("run", parents=[], help="integrate a configured problem")
    p.add_argument("--config", required=True, help="path to a key=value config file")
    p.add_argument(
        "--no-figures", action="store_true", help="skip rendering report figures"
    )

    sub.add_parser("presets", help="list parameter presets")

    p = sub.add_parser("rhs-check", help="term-by-term finite-difference cross-check")
    p.add_argument("--config", required=True)
    p.add_argument("--tol", type=float, default=1e-4)

    p = sub.add_parser("kernel-report", help="kernel positivity certification (JSON)")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--L", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=3)

    p = sub.add_parser("scalar-check", help="scalar toolkit certification (JSON)")
    p.add_argument("--level", type=int, required=True, help="truncation level n")
    p.add_argument("--m", type=float, required=True, help="vacuum cutoff level")
    p.add_argument("--k", type=float, required=True, help="upper cutoff level")
    p.add_argument("--M", type=float, required=True, help="velocity truncation level")
    p.add_argument("--delta", type=float, default=0.5)

    p = sub.add_parser("oracle-convolve", help="FFT vs direct-sum convolution check")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, required=True, choices=(1, 2))
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--L", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("budget", help="max energy-budget residual of a diagnostics CSV")
    p.add_argument("--diagnostics", required=True)
    return parser


def _cmd_run(args) -> int:
    cfg = parse_config_file(args.config)
    state, records = dynamics.run(cfg, render_figures=not args.no_figures)
    mass_drift = abs(records[-1].mass - records[0].mass) / max(abs(records[0].mass), 1e-300)
    print(f"completed t={state.t:.6g} with {len(records)} diagnostic records")
    print(f"final energy {records[-1].energy_E:.10g}, relative mass drift {mass_drift:.3e}")
    if cfg.output_dir:
        print(f"outputs in {cfg.output_dir}")
    return 0


def _cmd_presets(_args) -> int:
    for name in ("galerkin-full", "bd-regime", "limit"):
        values = dynamics.PRESETS[name]
        nonzero = ", ".join(f"{k}={v:g}" for k, v in values.items() if v) or "all zero"
        print(f"{name}: {nonzero}")
    return 0


def _cmd_rhs_check(args) -> int:
    cfg = parse_config_file(args.config)
    grid = TorusGrid(cfg.dim, cfg.L, cfg.n)
    params = cfg.to_params()
    cutoff = kernel.build_cutoff(cfg.L)
    table = kernel.build_kernel_table(grid, params.kernel_spec(), cutoff)
    if grid.dim > 2:
        table = None  # direct-sum oracle is 1D/2D only
    state = reference.make_check_state(grid, params, seed=cfg.seed)
    report = reference.compare_rhs_terms(state, params, table)
    worst = 0.0
    for name in sorted(report):
        status = "ok" if report[name] <= args.tol else "FAIL"
        print(f"{name:28s} rel={report[name]:.3e}  {status}")
        worst = max(worst, report[name])
    if worst > args.tol:
        raise NumericalError(f"rhs cross-check failed: worst {worst:.3e} > tol {args.tol:g}")
    print(f"all terms within {args.tol:g} (worst {worst:.3e})")
    return 0


def _cmd_kernel_report(args) -> int:
    grid = TorusGrid(args.dim, args.L, args.n)
    cutoff = kernel.build_cutoff(args.L)
    spec = kernel.KernelSpec(alpha=args.alpha, half_length=args.L)
    check = kernel.fourier_positivity_check(grid, spec, cutoff)
    report = {
        "alpha": args.alpha,
        "L": args.L,
        "n": args.n,
        "min_mode_value": check["min_mode_value"],
        "max_mode_value": check["max_mode_value"],
        "positivity_pass": check["positivity_pass"],
        "cutoff_C1": cutoff.C1,
        "cutoff_C2": cutoff.laplacian_bound(args.dim),
    }
    print(json.dumps(report, indent=2))
    return 0


def _cmd_scalar_check(args) -> int:
    level, delta = args.level, args.delta
    growth = scalars.growth_bounds_check(level, delta)
    cutoffs = scalars.DensityCutoffs(args.m, args.k)
    rng = np.random.default_rng(0)
    young_ok = True
    for _ in range(200):
        a = float(rng.uniform(0, 50))
        b = float(rng.uniform(0, 50))
        fstar = scalars.conjugate_numeric(lambda z: scalars.F_n(z, level), b)
        if a * b > scalars.F_n(a, level) + fstar + 1e-9 * max(1.0, a * b):
            young_ok = False
            break
    z = np.concatenate([[0.0], np.logspace(-3, 3, 513)])
    knee_gap = abs(
        (1.0 + level**2) / 2.0 * np.log1p(level**2)
        - (level * level + (1.0 - level**2) / 2.0) * np.log1p(level**2)
    )
    # pointwise truncation at M: 1-Lipschitz and idempotent on random vectors
    a_vec = rng.normal(size=(500, 3)) * args.M
    b_vec = rng.normal(size=(500, 3)) * args.M

    def clamp(w):
        norm = np.linalg.norm(w, axis=1, keepdims=True)
        scale = np.where(norm > args.M, args.M / np.where(norm > 0, norm, 1.0), 1.0)
        return w * scale

    lip_ok = bool(
        np.all(
            np.linalg.norm(clamp(a_vec) - clamp(b_vec), axis=1)
            <= np.linalg.norm(a_vec - b_vec, axis=1) * (1 + 1e-12) + 1e-15
        )
    )
    idem_ok = bool(
        np.max(np.linalg.norm(clamp(clamp(a_vec)) - clamp(a_vec), axis=1)) <= 1e-12 * args.M
    )
    report = {
        "level": level,
        "delta": delta,
        "m": args.m,
        "k": args.k,
        "M": args.M,
        "C_growth": growth["C_growth"],
        "C_prime": growth["C_prime"],
        "factor4_pass": growth["factor4_pass"],
        "second_derivative_min": growth["second_derivative_min"],
        "second_derivative_max": growth["second_derivative_max"],
        "knee_gap": knee_gap,
        "monotone_below_F": bool(np.all(scalars.F_n(z, level) <= scalars.F(z) * (1 + 1e-12))),
        "young_pass": young_ok,
        "zero_cutoff_slope": cutoffs.zero_slope_max,
        "zero_cutoff_slope_nominal": 2.0 * args.m,
        "inf_cutoff_slope": cutoffs.inf_slope_max,
        "inf_cutoff_slope_nominal": 2.0 / args.k,
        "inf_cutoff_slope_pass": bool(cutoffs.inf_slope_max <= 2.0 / args.k),
        "truncation_lipschitz_pass": lip_ok,
        "truncation_idempotent_pass": idem_ok,
    }
    print(json.dumps(report, indent=2))
    return 0


def _cmd_oracle_convolve(args) -> int:
    grid = TorusGrid(args.dim, args.L, args.n)
    cutoff = kernel.build_cutoff(args.L)
    spec = kernel.KernelSpec(alpha=args.alpha, half_length=args.L)
    table = kernel.build_kernel_table(grid, spec, cutoff)
    rng = np.random.default_rng(args.seed)
    f = rng.normal(size=grid.shape)
    from .grid import convolve_periodic

    fast = convolve_periodic(Field(grid, f), table).values
    direct = reference.direct_convolution(grid, table.values, f)
    scale = np.max(np.abs(f)) * np.sum(np.abs(table.values)) * grid.cell_volume
    err = float(np.max(np.abs(fast - direct)) / scale)
    print(f"n={args.n} dim={args.dim} alpha={args.alpha}: scaled max error {err:.3e}")
    if err > 1e-10:
        raise NumericalError(f"convolution oracle mismatch {err:.3e} > 1e-10")
    return 0


def _cmd_budget(args) -> int:
    records = functionals.read_diagnostics_csv(args.diagnostics)
    res = functionals.energy_budget_residual(records)
    interior = res[np.isfinite(res)]
    if len(interior) == 0:
        raise ValidationError("no interior records to evaluate")
    print(f"max normalized energy-budget residual: {np.max(np.abs(interior)):.6e}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "presets": _cmd_presets,
    "rhs-check": _cmd_rhs_check,
    "kernel-report": _cmd_kernel_report,
    "scalar-check": _cmd_scalar_check,
    "oracle-convolve": _cmd_oracle_convolve,
    "budget": _cmd_budget,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise ValidationError("a subcommand is required")
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"nlns: error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"nlns: numerical-error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
