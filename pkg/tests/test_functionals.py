"""Energy, entropy, growth functionals, dissipations, moments, budget, CSV."""

import numpy as np
import pytest

from conftest import band_limited, nonnegative_density, smooth_positive_density
from nlns.dynamics import RegularizationParams, State
from nlns.errors import ValidationError
from nlns.functionals import (
    DiagnosticsRecord,
    Dissipations,
    EnergyParts,
    attach_budget_residuals,
    bd_entropy,
    dissipation_suite,
    energy,
    energy_budget_residual,
    jungel_check,
    moment2,
    mv_functional,
    read_diagnostics_csv,
    write_diagnostics_csv,
)
from nlns.grid import Field, TorusGrid, VecField, grad_arrays
from nlns.kernel import KernelSpec, build_cutoff, build_kernel_table, radial_table
from nlns.reference import direct_convolution
from nlns.scalars import F


def params_for(L, **kw):
    return RegularizationParams(half_length=L, alpha=kw.pop("alpha", 0.5), **kw)


class TestEnergy:
    def test_kinetic_on_unit_volume_torus(self):
        g = TorusGrid(1, 0.5, 32)  # volume 1
        p = params_for(0.5)
        state = State(0.0, Field.full(g, 1.0), VecField(g, [np.ones(g.shape)]))
        total, parts = energy(state, p, None)
        assert abs(parts.kinetic - 0.5) < 1e-14
        assert total == parts.kinetic

    def test_all_zero_without_kernel_or_regularizers(self):
        g = TorusGrid(1, 4.0, 32)
        p = params_for(4.0)
        state = State(0.0, Field.full(g, 2.0), VecField.zero(g))
        total, parts = energy(state, p, None)
        assert total == 0.0

    def test_constant_density_attraction_vs_double_sum(self):
        g = TorusGrid(1, 4.0, 32)
        p = params_for(4.0)
        spec = KernelSpec(
            alpha=0.5, half_length=4.0, include_attraction=True, include_repulsion=False
        )
        table = build_kernel_table(g, spec, build_cutoff(4.0))
        c = 1.3
        state = State(0.0, Field.full(g, c), VecField.zero(g))
        _, parts = energy(state, p, table)
        conv = direct_convolution(g, table.values, np.full(g.shape, c))
        expected = 0.5 * float(np.sum(c * conv) * g.cell_volume)
        assert abs(parts.interaction - expected) < 1e-10 * abs(expected)


class TestBdEntropy:
    def test_constant_state_zero(self):
        g = TorusGrid(1, 4.0, 64)
        p = params_for(4.0)
        state = State(0.0, Field.full(g, 1.4), VecField.zero(g))
        assert abs(bd_entropy(state, p, None)) < 1e-12

    def test_effective_velocity_cancels(self, rng):
        g = TorusGrid(1, 4.0, 128)
        p = params_for(4.0)
        rho = smooth_positive_density(g, rng)
        glog = grad_arrays(g, np.log(rho.values))
        state = State(0.0, rho, VecField(g, [-glog[0]]))
        assert abs(bd_entropy(state, p, None)) < 1e-12

    def test_difference_to_energy_is_log_gradient(self, rng):
        g = TorusGrid(1, 4.0, 128)
        p = params_for(4.0)
        rho = smooth_positive_density(g, rng)
        state = State(0.0, rho, VecField.zero(g))
        diff = bd_entropy(state, p, None) - energy(state, p, None)[0]
        glog = grad_arrays(g, np.log(rho.values))
        expected = 0.5 * float(np.sum(rho.values * glog[0] ** 2) * g.cell_volume)
        assert abs(diff - expected) < 1e-12 * max(1.0, expected)

    def test_requires_positive_density(self):
        g = TorusGrid(1, 4.0, 32)
        p = params_for(4.0)
        vals = np.ones(g.shape)
        vals[0] = 0.0
        state = State(0.0, Field(g, vals), VecField.zero(g))
        with pytest.raises(ValidationError):
            bd_entropy(state, p, None)


class TestMvFunctional:
    def test_zero_velocity(self, rng):
        g = TorusGrid(1, 4.0, 64)
        f_table = radial_table(g, F)
        state = State(0.0, nonnegative_density(g, rng), VecField.zero(g))
        vel, _ = mv_functional(state, f_table)
        assert vel == 0.0

    def test_single_cell_pair_part_vanishes(self):
        g = TorusGrid(1, 4.0, 64)
        f_table = radial_table(g, F)
        vals = np.zeros(g.shape)
        vals[10] = 3.0
        state = State(0.0, Field(g, vals), VecField.zero(g))
        _, pair = mv_functional(state, f_table)
        assert abs(pair) < 1e-12

    def test_unit_speed_closed_form(self):
        g = TorusGrid(2, 2.0, 16)
        f_table = radial_table(g, F)
        c = 0.7
        state = State(
            0.0,
            Field.full(g, c),
            VecField(g, [np.ones(g.shape), np.zeros(g.shape)]),
        )
        vel, _ = mv_functional(state, f_table)
        expected = c * g.volume * np.log(2.0)
        assert abs(vel - expected) < 1e-12 * expected

    def test_pair_part_against_double_sum(self, rng):
        g = TorusGrid(2, 2.0, 16)
        f_table = radial_table(g, F)
        rho = nonnegative_density(g, rng)
        state = State(0.0, rho, VecField.zero(g))
        _, pair = mv_functional(state, f_table)
        conv = direct_convolution(g, f_table.values, rho.values)
        expected = float(np.sum(rho.values * conv) * g.cell_volume)
        assert abs(pair - expected) < 1e-10 * max(1.0, abs(expected))


class TestDissipations:
    def test_zero_velocity_kills_velocity_terms(self, rng):
        g = TorusGrid(1, 4.0, 64)
        p = params_for(4.0, nu=1.0, r0=1.0, r1=1.0)
        state = State(0.0, smooth_positive_density(g, rng), VecField.zero(g))
        d, _ = dissipation_suite(state, p, None)
        assert d.viscous == 0.0
        assert d.bilaplacian == 0.0
        assert d.friction_linear == 0.0
        assert d.friction_cubic == 0.0

    def test_single_mode_closed_form(self):
        g = TorusGrid(1, 4.0, 64)
        p = params_for(4.0)
        x = g.axis_coords()
        a, k = 0.3, 2 * np.pi / 4.0
        state = State(0.0, Field.full(g, 1.0), VecField(g, [a * np.sin(k * x)]))
        d, _ = dissipation_suite(state, p, None)
        expected = a**2 * k**2 * g.volume / 2.0
        assert abs(d.viscous - expected) < 1e-10 * expected

    def test_symmetric_antisymmetric_decomposition(self, rng):
        g = TorusGrid(2, 4.0, 32)
        rho = smooth_positive_density(g, rng)
        u = [band_limited(g, rng) for _ in range(2)]
        from nlns.grid import deriv_array

        grad_u = [[deriv_array(g, u[b], a, 1) for b in range(2)] for a in range(2)]
        full = sum(grad_u[a][b] ** 2 for a in range(2) for b in range(2))
        sym = sum(
            (0.5 * (grad_u[a][b] + grad_u[b][a])) ** 2 for a in range(2) for b in range(2)
        )
        anti = sum(
            (grad_u[a][b] - grad_u[b][a]) ** 2 for a in range(2) for b in range(2)
        )
        lhs = float(np.sum(rho.values * full) * g.cell_volume)
        rhs = float(np.sum(rho.values * (sym + 0.25 * anti)) * g.cell_volume)
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))

    def test_kernel_pairing_with_bound_flag(self, rng):
        g = TorusGrid(2, 4.0, 32)
        p = params_for(4.0, epsilon=1e-3)
        cut = build_cutoff(4.0)
        table = build_kernel_table(g, KernelSpec(alpha=0.5, half_length=4.0), cut)
        from nlns.kernel import kl_lower_bound_constant

        c_impl = kl_lower_bound_constant(0.5, 2, 4.0, cut)
        state = State(0.0, nonnegative_density(g, rng), VecField.zero(g))
        d, aux = dissipation_suite(state, p, table, c_impl)
        assert aux["kernel_pairing_bound_holds"]
        assert d.kernel_cross == pytest.approx(1e-3 * aux["kernel_pairing"])


class TestJungel:
    def test_constant_passes_with_zeros(self):
        g = TorusGrid(1, 4.0, 64)
        lhs, r1, r2, ok = jungel_check(Field.full(g, 2.0))
        assert ok
        assert lhs < 1e-20 and r1 < 1e-20 and r2 < 1e-20

    def test_exp_sine_profile(self):
        g = TorusGrid(1, 4.0, 256)
        x = g.axis_coords()
        rho = Field(g, np.exp(np.sin(2 * np.pi * x / 4.0)))
        lhs, r1, r2, ok = jungel_check(rho)
        assert ok
        assert lhs >= r1 and lhs >= r2

    @pytest.mark.parametrize("dim,n", [(1, 256), (2, 64)])
    def test_random_smooth_densities(self, dim, n, rng):
        g = TorusGrid(dim, 4.0, n)
        for _ in range(5):
            rho = smooth_positive_density(g, rng)
            _, _, _, ok = jungel_check(rho)
            assert ok

    def test_rejects_nonpositive(self):
        g = TorusGrid(1, 4.0, 32)
        vals = np.ones(g.shape)
        vals[0] = 0.0
        with pytest.raises(ValidationError):
            jungel_check(Field(g, vals))


class TestMoment2:
    def test_single_cell_zero(self):
        g = TorusGrid(1, 4.0, 32)
        r2 = radial_table(g, lambda r: r**2)
        vals = np.zeros(g.shape)
        vals[5] = 2.0
        assert abs(moment2(Field(g, vals), r2)) < 1e-14

    def test_two_cell_formula(self):
        g = TorusGrid(1, 4.0, 32)
        r2 = radial_table(g, lambda r: r**2)
        vals = np.zeros(g.shape)
        i, j = 5, 12
        vals[i] = 2.0 / g.cell_volume  # mass 2
        vals[j] = 3.0 / g.cell_volume  # mass 3
        dist = abs(i - j) * g.spacing
        out = moment2(Field(g, vals), r2)
        assert abs(out - 2 * 2.0 * 3.0 * dist**2) < 1e-10 * out

    @pytest.mark.parametrize("dim,n", [(1, 24), (2, 24), (1, 16), (2, 8)])
    def test_double_sum_oracle(self, dim, n, rng):
        g = TorusGrid(dim, 4.0, n)
        r2 = radial_table(g, lambda r: r**2)
        rho = nonnegative_density(g, rng)
        fast = moment2(rho, r2)
        conv = direct_convolution(g, r2.values, rho.values)
        slow = float(np.sum(rho.values * conv) * g.cell_volume)
        assert abs(fast - slow) < 1e-10 * max(1.0, abs(slow))


def _make_records(ts, energies, diss_totals):
    records = []
    for t, e, d in zip(ts, energies, diss_totals):
        records.append(
            DiagnosticsRecord(
                t=t,
                mass=1.0,
                energy_E=e,
                energy_parts=EnergyParts(kinetic=e),
                bd_entropy=0.0,
                mv_velocity=0.0,
                mv_pair=0.0,
                dissipations=Dissipations(viscous=d),
                moment2=0.0,
                rho_min=1.0,
            )
        )
    return records


class TestBudgetResidual:
    def test_rest_series_zero(self):
        records = _make_records(np.linspace(0, 1, 11), np.full(11, 5.0), np.zeros(11))
        res = energy_budget_residual(records)
        assert np.isnan(res[0]) and np.isnan(res[-1])
        assert np.allclose(res[1:-1], 0.0)

    def test_exact_exponential_budget_is_second_order(self):
        # E(t) = exp(-2t) with D = -dE/dt exactly: residual is the centered
        # difference error, which drops by 4 when the sampling interval halves
        def max_resid(h):
            ts = h * np.arange(0, 41)
            E = np.exp(-2.0 * ts)
            D = 2.0 * np.exp(-2.0 * ts)
            res = energy_budget_residual(_make_records(ts, E, D))
            return np.nanmax(np.abs(res))

        r1, r2 = max_resid(0.02), max_resid(0.01)
        assert r1 / r2 == pytest.approx(4.0, rel=0.05)

    def test_requires_three_records(self):
        with pytest.raises(ValidationError):
            energy_budget_residual(_make_records([0.0, 1.0], [1.0, 1.0], [0.0, 0.0]))

    def test_requires_uniform_spacing(self):
        with pytest.raises(ValidationError):
            energy_budget_residual(
                _make_records([0.0, 1.0, 2.5], [1.0, 1.0, 1.0], [0.0, 0.0, 0.0])
            )


class TestCsvRoundTrip:
    def test_exact_roundtrip_and_header(self, tmp_path):
        records = _make_records([0.0, 0.1, 0.2], [1.0, 0.9, np.pi], [0.1, 0.2, 0.3])
        attach_budget_residuals(records)
        path = tmp_path / "diag.csv"
        write_diagnostics_csv(path, records)
        header = path.read_text().splitlines()[0].split(",")
        assert "energy_parts.kinetic" in header
        assert "dissipations.kernel_cross" in header
        assert header[0] == "t"
        loaded = read_diagnostics_csv(path)
        for a, b in zip(records, loaded):
            fa, fb = a.flatten(), b.flatten()
            for key in fa:
                if np.isnan(fa[key]):
                    assert np.isnan(fb[key])
                else:
                    assert fa[key] == fb[key]  # full precision round trip
