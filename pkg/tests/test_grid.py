"""Grid, differentiation, convolution, mollification and snapshot format."""

import numpy as np
import pytest

from conftest import band_limited, nonnegative_density
from nlns.errors import ValidationError
from nlns.grid import (
    DensityField,
    Field,
    TorusGrid,
    VecField,
    convolve_periodic,
    gradient,
    laplacian,
    mollify,
    read_snapshot,
    spectral_derivative,
    write_snapshot,
)
from nlns.kernel import KernelSpec, build_cutoff, build_kernel_table
from nlns.reference import direct_convolution


class TestTorusGrid:
    def test_spacing_identity(self):
        g = TorusGrid(1, 8.0, 128)
        assert g.spacing * g.n == 2.0 * g.half_length  # exact for binary L
        assert g.spacing**g.dim * g.n**g.dim == g.volume

    def test_wavenumbers_antisymmetric_with_single_nyquist(self):
        g = TorusGrid(1, 4.0, 16)
        k = g.wavenumbers
        assert k[0] == 0.0
        for j in range(1, g.n // 2):
            assert k[j] == -k[-j]
        nyquist = np.pi * (g.n // 2) / g.half_length
        assert np.sum(np.isclose(np.abs(k), nyquist)) == 1
        assert np.isclose(k[g.n // 2], -nyquist)

    def test_wavenumber_value(self):
        g = TorusGrid(1, 8.0, 64)
        assert np.isclose(g.wavenumbers[3], 3 * np.pi / 8.0)

    @pytest.mark.parametrize("dim,n", [(0, 16), (4, 16), (1, 15), (1, 0)])
    def test_invalid_grid(self, dim, n):
        with pytest.raises(ValidationError):
            TorusGrid(dim if dim else 1, 4.0, n) if dim else TorusGrid(0, 4.0, n)

    def test_negative_length(self):
        with pytest.raises(ValidationError):
            TorusGrid(1, -1.0, 16)


class TestSpectralDerivative:
    def test_sine_eigenfunction(self):
        g = TorusGrid(1, 8.0, 64)
        x = g.axis_coords()
        f = Field(g, np.sin(np.pi * x / g.half_length))
        d = spectral_derivative(f, 0, 1)
        exact = np.pi / g.half_length * np.cos(np.pi * x / g.half_length)
        assert np.max(np.abs(d.values - exact)) < 1e-13

    @pytest.mark.parametrize("order", range(1, 7))
    def test_constant_annihilated(self, order):
        g = TorusGrid(2, 4.0, 16)
        f = Field.full(g, 3.7)
        d = spectral_derivative(f, 1, order)
        assert np.max(np.abs(d.values)) < 1e-12

    def test_second_derivative_against_stencil(self, rng):
        # sixth-order centered second-difference oracle on a band-limited field
        g = TorusGrid(1, 8.0, 256)
        f = band_limited(g, rng, modes=3)
        d2 = spectral_derivative(Field(g, f), 0, 2).values
        c = np.array([2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0]) / 180.0
        fd = sum(
            coeff * np.roll(f, -off) for off, coeff in zip(range(-3, 4), c)
        ) / g.spacing**2
        scale = np.max(np.abs(d2))
        assert np.max(np.abs(d2 - fd)) / scale < 1e-6

    def test_linearity(self, rng):
        g = TorusGrid(1, 4.0, 64)
        f = band_limited(g, rng)
        h = band_limited(g, rng)
        a, b = 2.3, -0.7
        lhs = spectral_derivative(Field(g, a * f + b * h), 0, 1).values
        rhs = a * spectral_derivative(Field(g, f), 0, 1).values + b * spectral_derivative(
            Field(g, h), 0, 1
        ).values
        assert np.max(np.abs(lhs - rhs)) < 1e-12 * max(1.0, np.max(np.abs(lhs)))

    def test_parseval(self, rng):
        g = TorusGrid(2, 4.0, 32)
        f = rng.normal(size=g.shape)
        phys = np.sum(f**2) * g.cell_volume
        spec = np.sum(np.abs(np.fft.fftn(f)) ** 2) / g.size * g.cell_volume
        assert abs(phys - spec) / phys < 1e-10

    def test_even_field_has_odd_derivative(self):
        g = TorusGrid(1, 4.0, 64)
        x = g.axis_coords()
        f = Field(g, np.cos(2 * np.pi * x / 4.0) + 0.3 * np.cos(np.pi * x / 4.0))
        d = spectral_derivative(f, 0, 1).values
        mirrored = np.roll(d[::-1], 1)
        assert np.max(np.abs(d + mirrored)) < 1e-12

    def test_rejects_non_finite(self):
        g = TorusGrid(1, 4.0, 16)
        vals = np.zeros(g.shape)
        vals[3] = np.nan
        with pytest.raises(ValidationError, match=r"index \(3,\)"):
            spectral_derivative(Field(g, vals), 0, 1)

    def test_order_range(self):
        g = TorusGrid(1, 4.0, 16)
        with pytest.raises(ValidationError):
            spectral_derivative(Field.full(g, 1.0), 0, 7)

    def test_gradient_divergence_roundtrip(self, rng):
        g = TorusGrid(2, 4.0, 32)
        f = band_limited(g, rng)
        lap1 = laplacian(Field(g, f)).values
        from nlns.grid import divergence

        lap2 = divergence(gradient(Field(g, f))).values
        assert np.max(np.abs(lap1 - lap2)) < 1e-10 * max(1.0, np.max(np.abs(lap1)))


class TestConvolution:
    def _table(self, g):
        return build_kernel_table(
            g, KernelSpec(alpha=0.5, half_length=g.half_length), build_cutoff(g.half_length)
        )

    def test_dirac_reproduces_table(self):
        g = TorusGrid(1, 4.0, 32)
        table = self._table(g)
        f = np.zeros(g.shape)
        j0 = 5
        f[j0] = 1.0 / g.cell_volume
        out = convolve_periodic(Field(g, f), table).values
        kernel_disp = np.fft.ifftshift(table.values)
        expected = np.roll(kernel_disp, j0)
        assert np.max(np.abs(out - expected)) < 1e-12 * np.max(np.abs(table.values))

    def test_constant_in_constant_out(self):
        g = TorusGrid(2, 4.0, 16)
        table = self._table(g)
        c = 1.7
        out = convolve_periodic(Field.full(g, c), table).values
        expected = c * np.sum(table.values) * g.cell_volume
        assert np.max(np.abs(out - expected)) < 1e-10 * abs(expected)

    @pytest.mark.parametrize("dim,n", [(1, 16), (1, 32), (2, 16), (2, 32)])
    def test_direct_sum_oracle(self, dim, n, rng):
        g = TorusGrid(dim, 4.0, n)
        table = self._table(g)
        f = rng.normal(size=g.shape)
        fast = convolve_periodic(Field(g, f), table).values
        slow = direct_convolution(g, table.values, f)
        scale = np.max(np.abs(f)) * np.sum(np.abs(table.values)) * g.cell_volume
        assert np.max(np.abs(fast - slow)) <= 1e-10 * scale

    def test_grid_mismatch_rejected(self):
        g = TorusGrid(1, 4.0, 32)
        other = TorusGrid(1, 4.0, 64)
        table = self._table(g)
        with pytest.raises(ValidationError):
            convolve_periodic(Field.full(other, 1.0), table)


class TestMollify:
    def test_positivity_and_mass(self, rng):
        g = TorusGrid(1, 4.0, 64)
        f = nonnegative_density(g, rng)
        out = mollify(f, 4 * g.spacing)
        assert np.all(out.values >= 0.0)
        assert abs(out.integral() - f.integral()) < 1e-12 * max(1.0, abs(f.integral()))

    def test_constant_preserved(self):
        g = TorusGrid(2, 4.0, 16)
        out = mollify(Field.full(g, 2.5), 3 * g.spacing)
        assert np.max(np.abs(out.values - 2.5)) < 1e-14

    def test_half_torus_indicator(self):
        g = TorusGrid(1, 4.0, 128)
        x = g.axis_coords()
        f = Field(g, (x < 0).astype(float))
        out = mollify(f, 4 * g.spacing)
        assert abs(out.integral() - f.integral()) < 1e-12 * abs(f.integral())
        # transition is smoothed: intermediate values appear near the jump
        assert np.any((out.values > 0.1) & (out.values < 0.9))
        # smoothing is local: values far from the jump are untouched
        assert abs(out.values[g.n // 4] - 1.0) < 1e-14

    def test_mollifier_l1_modulus(self, rng):
        # |f*xi_w - f|_L1 <= w * |grad f|_L1 for smooth f
        g = TorusGrid(1, 4.0, 128)
        f = nonnegative_density(g, rng)
        w = 4 * g.spacing
        out = mollify(f, w)
        l1 = np.sum(np.abs(out.values - f.values)) * g.cell_volume
        grad_l1 = np.sum(np.abs(spectral_derivative(f, 0, 1).values)) * g.cell_volume
        assert l1 <= w * grad_l1

    def test_width_bounds(self):
        g = TorusGrid(1, 4.0, 32)
        with pytest.raises(ValidationError):
            mollify(Field.full(g, 1.0), 4.0)
        with pytest.raises(ValidationError):
            mollify(Field.full(g, 1.0), 0.0)


class TestFieldTypes:
    def test_density_rejects_negative_with_index(self):
        g = TorusGrid(1, 4.0, 16)
        vals = np.ones(g.shape)
        vals[7] = -1e-3
        with pytest.raises(ValidationError, match=r"\(7,\)"):
            DensityField(g, vals)

    def test_vecfield_component_count(self):
        g = TorusGrid(2, 4.0, 16)
        with pytest.raises(ValidationError):
            VecField(g, [np.zeros(g.shape)])

    def test_field_shape_checked(self):
        g = TorusGrid(1, 4.0, 16)
        with pytest.raises(ValidationError):
            Field(g, np.zeros(17))


class TestSnapshot:
    def test_roundtrip(self, tmp_path, rng):
        g = TorusGrid(2, 4.0, 16)
        fields = {"rho": rng.normal(size=g.shape), "u0": rng.normal(size=g.shape)}
        path = tmp_path / "state.nlns"
        write_snapshot(path, g, fields)
        g2, loaded = read_snapshot(path)
        assert g2.same_as(g)
        for name in fields:
            assert np.array_equal(loaded[name], fields[name])

    def test_format_header(self, tmp_path):
        g = TorusGrid(1, 2.0, 4)
        path = tmp_path / "s.nlns"
        write_snapshot(path, g, {"rho": np.arange(4.0)})
        raw = path.read_bytes()
        assert raw[:4] == b"NLNS"
        assert int.from_bytes(raw[4:6], "little") == 1
        assert raw[6] == 1  # dim
        assert int.from_bytes(raw[7:11], "little") == 4  # n

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.nlns"
        path.write_bytes(b"XXXX" + b"\x00" * 32)
        with pytest.raises(ValidationError):
            read_snapshot(path)
