"""Report figures rendered next to the diagnostics CSV.

The CSV stays the machine contract; these are the human-readable view of a
run: monitored functionals, dissipation channels, conservation drift, and
the final fields.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_run_figures"]


def _series(records, getter):
    return np.array([getter(r) for r in records])


def render_run_figures(records, final_state, outdir) -> list[str]:
    """Write the standard run figures as PNG files; returns the paths."""
    t = _series(records, lambda r: r.t)
    written = []

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(t, _series(records, lambda r: r.energy_E), label="energy")
    ax.plot(t, _series(records, lambda r: r.bd_entropy), label="BD entropy")
    ax.plot(
        t,
        _series(records, lambda r: r.mv_velocity + r.mv_pair),
        label="MV functional",
    )
    ax.set_xlabel("t")
    ax.set_ylabel("value")
    ax.legend(frameon=False)
    ax.set_title("monitored functionals")
    fig.tight_layout()
    path = os.path.join(outdir, "functionals.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for name in (
        "viscous",
        "bilaplacian",
        "friction_linear",
        "friction_cubic",
        "kernel_cross",
    ):
        series = _series(records, lambda r, n=name: getattr(r.dissipations, n))
        if np.any(series != 0):
            ax.plot(t, series, label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("dissipation")
    ax.legend(frameon=False, fontsize=8)
    ax.set_title("dissipation channels")
    fig.tight_layout()
    path = os.path.join(outdir, "dissipations.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6))
    mass = _series(records, lambda r: r.mass)
    drift = np.abs(mass - mass[0]) / max(abs(mass[0]), 1e-300)
    axes[0].plot(t, np.maximum(drift, 1e-18))
    axes[0].set_yscale("log")
    axes[0].set_xlabel("t")
    axes[0].set_title("relative mass drift")
    resid = _series(records, lambda r: r.energy_budget_residual)
    axes[1].plot(t, np.maximum(np.abs(resid), 1e-18))
    axes[1].set_yscale("log")
    axes[1].set_xlabel("t")
    axes[1].set_title("|energy budget residual|")
    fig.tight_layout()
    path = os.path.join(outdir, "conservation.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    grid = final_state.grid
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    if grid.dim == 1:
        x = grid.axis_coords()
        ax.plot(x, final_state.rho.values, label="rho")
        ax.plot(x, final_state.u.components[0], label="u")
        ax.set_xlabel("x")
        ax.legend(frameon=False)
    elif grid.dim == 2:
        im = ax.imshow(
            final_state.rho.values.T,
            origin="lower",
            extent=[-grid.half_length, grid.half_length] * 2,
            cmap="viridis",
        )
        fig.colorbar(im, ax=ax, label="rho")
    else:
        mid = grid.n // 2
        im = ax.imshow(
            final_state.rho.values[:, :, mid].T,
            origin="lower",
            extent=[-grid.half_length, grid.half_length] * 2,
            cmap="viridis",
        )
        fig.colorbar(im, ax=ax, label="rho (mid-plane)")
    ax.set_title(f"final fields, t = {final_state.t:.3g}")
    fig.tight_layout()
    path = os.path.join(outdir, "fields_final.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)
    return written
