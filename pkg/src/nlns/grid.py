"""Periodic torus discretization and Fourier-collocation primitives.

The domain is the torus [-L, L)^dim sampled on a uniform grid with n points
per axis (n even), so the spacing is h = 2L/n and the angular wavenumbers
are k_j = pi*j/L for j in the standard DFT index set.  Fields are stored as
real float64 arrays in row-major order with axis 0 slowest.

Differentiation, periodic convolution and mollification are provided here;
everything downstream (kernels, dynamics, functionals) builds on these.
Operations are pure: they never modify their inputs, and all reductions use
numpy's fixed summation order so repeated runs are bit-identical.
"""

from __future__ import annotations

import struct

import numpy as np
from scipy import ndimage

from .errors import ValidationError

__all__ = [
    "TorusGrid",
    "Field",
    "VecField",
    "DensityField",
    "spectral_derivative",
    "gradient",
    "divergence",
    "laplacian",
    "convolve_periodic",
    "mollify",
    "integral",
    "write_snapshot",
    "read_snapshot",
]

SNAPSHOT_MAGIC = b"NLNS"
SNAPSHOT_VERSION = 1


class TorusGrid:
    """Uniform periodic grid on [-L, L)^dim with spectral metadata.

    Attributes
    ----------
    dim : int in {1, 2, 3}
    half_length : L, so the period is 2L per axis
    n : points per axis (even)
    spacing : h = 2L/n
    wavenumbers : 1D array of angular frequencies in FFT order,
        k_j = pi*j/L for j = 0..n/2-1, -n/2..-1 (Nyquist appears once)
    """

    def __init__(self, dim: int, half_length: float, points_per_axis: int):
        if dim not in (1, 2, 3):
            raise ValidationError(f"dim must be 1, 2 or 3, got {dim}")
        if half_length <= 0:
            raise ValidationError(f"half_length must be positive, got {half_length}")
        n = int(points_per_axis)
        if n <= 0 or n % 2 != 0:
            raise ValidationError(f"points_per_axis must be positive and even, got {points_per_axis}")
        self.dim = int(dim)
        self.half_length = float(half_length)
        self.n = n
        self.spacing = 2.0 * self.half_length / n
        self.shape = (n,) * self.dim
        self.size = n**self.dim
        self.cell_volume = self.spacing**self.dim
        self.volume = (2.0 * self.half_length) ** self.dim
        # angular frequencies 2*pi*fftfreq(n, h) == pi*j/L in FFT order
        self.wavenumbers = 2.0 * np.pi * np.fft.fftfreq(n, d=self.spacing)
        self._k_axis = []
        for a in range(self.dim):
            shp = [1] * self.dim
            shp[a] = n
            self._k_axis.append(self.wavenumbers.reshape(shp))
        self.k_squared = sum(k**2 for k in self._k_axis)
        # 2/3-rule mask for products of two band-limited fields
        keep = np.abs(np.fft.fftfreq(n) * n) <= n / 3.0
        mask = np.ones(self.shape, dtype=bool)
        for a in range(self.dim):
            shp = [1] * self.dim
            shp[a] = n
            mask &= keep.reshape(shp)
        self.dealias_mask = mask

    def axis_coords(self) -> np.ndarray:
        """Sample points along one axis: x_j = -L + j*h."""
        return -self.half_length + self.spacing * np.arange(self.n)

    def coordinate_mesh(self) -> list[np.ndarray]:
        x = self.axis_coords()
        return list(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def radius_mesh(self) -> np.ndarray:
        """Minimum-image distance from the origin at each grid point.

        Points live in the fundamental cell [-L, L)^dim, so the minimum
        image of x is x itself and the distance is plain |x|.
        """
        mesh = self.coordinate_mesh()
        return np.sqrt(sum(x**2 for x in mesh))

    def wavenumber_axis(self, axis: int, zero_nyquist: bool = False) -> np.ndarray:
        """Broadcastable wavenumber array for one axis."""
        k = self._k_axis[axis]
        if zero_nyquist:
            k = k.copy()
            idx = [slice(None)] * self.dim
            idx[axis] = self.n // 2
            k[tuple(idx)] = 0.0
        return k

    def same_as(self, other: "TorusGrid") -> bool:
        return (
            self.dim == other.dim
            and self.n == other.n
            and self.half_length == other.half_length
        )

    def __repr__(self):
        return f"TorusGrid(dim={self.dim}, half_length={self.half_length}, n={self.n})"


def _as_values(f) -> np.ndarray:
    return f.values if isinstance(f, Field) else np.asarray(f)


class Field:
    """Real scalar field sampled on a TorusGrid."""

    def __init__(self, grid: TorusGrid, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != grid.shape:
            raise ValidationError(
                f"field shape {values.shape} does not match grid shape {grid.shape}"
            )
        self.grid = grid
        self.values = values

    @classmethod
    def full(cls, grid: TorusGrid, value: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: TorusGrid, fn) -> "Field":
        """Sample fn(*coordinate meshes) on the grid."""
        return cls(grid, np.asarray(fn(*grid.coordinate_mesh()), dtype=np.float64))

    def integral(self) -> float:
        """Trapezoid quadrature, exact midpoint rule on a periodic grid."""
        return float(self.values.sum() * self.grid.cell_volume)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def __repr__(self):
        return f"Field({self.grid!r}, min={self.values.min():.3g}, max={self.values.max():.3g})"


class DensityField(Field):
    """Non-negative scalar field; negativity is rejected, never clamped."""

    def __init__(self, grid: TorusGrid, values: np.ndarray):
        super().__init__(grid, values)
        if np.any(self.values < 0):
            idx = tuple(int(i) for i in np.unravel_index(int(np.argmin(self.values)), self.grid.shape))
            raise ValidationError(
                f"density must be non-negative; first offending index {idx} "
                f"has value {self.values[idx]:.6g}"
            )


class VecField:
    """Vector field: one real array per spatial component, shared grid."""

    def __init__(self, grid: TorusGrid, components):
        comps = tuple(np.asarray(c, dtype=np.float64) for c in components)
        if len(comps) != grid.dim:
            raise ValidationError(f"expected {grid.dim} components, got {len(comps)}")
        for c in comps:
            if c.shape != grid.shape:
                raise ValidationError("all components must share the grid shape")
        self.grid = grid
        self.components = comps

    @classmethod
    def zero(cls, grid: TorusGrid) -> "VecField":
        return cls(grid, [np.zeros(grid.shape) for _ in range(grid.dim)])

    def magnitude(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self.components))

    def copy(self) -> "VecField":
        return VecField(self.grid, [c.copy() for c in self.components])


def integral(grid: TorusGrid, values: np.ndarray) -> float:
    return float(np.sum(values) * grid.cell_volume)


def _check_finite(values: np.ndarray, what: str):
    if not np.all(np.isfinite(values)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(values))[0])
        raise ValidationError(f"{what} contains a non-finite value at index {bad}")


def deriv_array(grid: TorusGrid, values: np.ndarray, axis: int, order: int) -> np.ndarray:
    """Fourier-collocation derivative of order 1..6 along one axis.

    Odd orders zero the Nyquist mode (its odd derivative is ambiguous on a
    real grid; zero is the symmetric choice).
    """
    if not 1 <= order <= 6:
        raise ValidationError(f"derivative order must be in 1..6, got {order}")
    if not 0 <= axis < grid.dim:
        raise ValidationError(f"axis {axis} out of range for dim {grid.dim}")
    k = grid.wavenumber_axis(axis, zero_nyquist=(order % 2 == 1))
    mult = (1j * k) ** order
    return np.real(np.fft.ifftn(np.fft.fftn(values) * mult))


def spectral_derivative(f: Field, axis: int, order: int = 1) -> Field:
    """Spectral derivative of a Field; exact for trig polynomials below Nyquist."""
    _check_finite(f.values, "spectral_derivative input")
    return Field(f.grid, deriv_array(f.grid, f.values, axis, order))


def grad_arrays(grid: TorusGrid, values: np.ndarray) -> list[np.ndarray]:
    fhat = np.fft.fftn(values)
    out = []
    for a in range(grid.dim):
        k = grid.wavenumber_axis(a, zero_nyquist=True)
        out.append(np.real(np.fft.ifftn(1j * k * fhat)))
    return out


def div_arrays(grid: TorusGrid, comps) -> np.ndarray:
    out = np.zeros(grid.shape)
    for a, c in enumerate(comps):
        k = grid.wavenumber_axis(a, zero_nyquist=True)
        out += np.real(np.fft.ifftn(1j * k * np.fft.fftn(c)))
    return out


def lap_array(grid: TorusGrid, values: np.ndarray, power: int = 1) -> np.ndarray:
    """(Laplacian^power) f, computed with the multiplier (-|k|^2)^power."""
    mult = (-grid.k_squared) ** power
    return np.real(np.fft.ifftn(np.fft.fftn(values) * mult))


def hessian_arrays(grid: TorusGrid, values: np.ndarray) -> list[list[np.ndarray]]:
    """All second derivatives d2 f / dx_a dx_b (symmetric)."""
    fhat = np.fft.fftn(values)
    H: list[list[np.ndarray]] = [[None] * grid.dim for _ in range(grid.dim)]
    for a in range(grid.dim):
        for b in range(a, grid.dim):
            if a == b:
                mult = -(grid.wavenumber_axis(a) ** 2)
            else:
                mult = -(
                    grid.wavenumber_axis(a, zero_nyquist=True)
                    * grid.wavenumber_axis(b, zero_nyquist=True)
                )
            H[a][b] = H[b][a] = np.real(np.fft.ifftn(mult * fhat))
    return H


def gradient(f: Field) -> VecField:
    return VecField(f.grid, grad_arrays(f.grid, f.values))


def divergence(v: VecField) -> Field:
    return Field(v.grid, div_arrays(v.grid, v.components))


def laplacian(f: Field, power: int = 1) -> Field:
    return Field(f.grid, lap_array(f.grid, f.values, power))


def dealias_array(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """Apply the 2/3-rule mask in spectral space."""
    return np.real(np.fft.ifftn(np.fft.fftn(values) * grid.dealias_mask))


def convolve_periodic(f: Field, table) -> Field:
    """Discrete periodic convolution with a sampled kernel table.

    Returns IFFT(FFT(f) * table.spectrum) where the table spectrum already
    carries the cell-volume factor, so the result approximates the integral
    convolution (K * f)(x) = sum_y K(x - y) f(y) h^dim.
    """
    if not f.grid.same_as(table.grid):
        raise ValidationError("field and kernel table live on different grids")
    out = np.real(np.fft.ifftn(np.fft.fftn(f.values) * table.spectrum))
    return Field(f.grid, out)


def convolve_array(grid: TorusGrid, values: np.ndarray, spectrum: np.ndarray) -> np.ndarray:
    return np.real(np.fft.ifftn(np.fft.fftn(values) * spectrum))


def mollifier_stencil(grid: TorusGrid, width: float) -> np.ndarray:
    """Normalized bump weights on the offset stencil |delta| < width.

    The profile is the standard bump exp(-1/(1 - (r/width)^2)); weights sum
    to 1, so direct convolution preserves the integral and non-negativity.
    """
    if width <= 0:
        raise ValidationError(f"mollifier width must be positive, got {width}")
    if width >= grid.half_length:
        raise ValidationError(
            f"mollifier width {width} must be smaller than half_length {grid.half_length}"
        )
    h = grid.spacing
    m = int(np.ceil(width / h - 1e-12)) - 1
    m = max(m, 0)
    offs = np.arange(-m, m + 1) * h
    mesh = np.meshgrid(*([offs] * grid.dim), indexing="ij")
    r2 = sum(o**2 for o in mesh) / width**2
    w = np.zeros_like(r2)
    inside = r2 < 1.0
    w[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return w / w.sum()


def mollify(f: Field, width: float) -> Field:
    """Convolve with a periodized unit-mass bump of support radius `width`.

    Implemented as a direct stencil convolution with wrap-around, so the
    output of a non-negative field is non-negative exactly.
    """
    w = mollifier_stencil(f.grid, width)
    out = ndimage.convolve(f.values, w, mode="wrap")
    return Field(f.grid, out)


# ---------------------------------------------------------------------------
# snapshot file format: magic "NLNS", u16 version, u8 dim, u32 n, f64 L,
# u16 field count, then per field u8 name length + UTF-8 name + n^dim
# little-endian f64 values, row-major with axis 0 slowest.
# ---------------------------------------------------------------------------


def write_snapshot(path, grid: TorusGrid, fields: dict[str, np.ndarray]):
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<H", SNAPSHOT_VERSION))
        fh.write(struct.pack("<B", grid.dim))
        fh.write(struct.pack("<I", grid.n))
        fh.write(struct.pack("<d", grid.half_length))
        fh.write(struct.pack("<H", len(fields)))
        for name, values in fields.items():
            raw = name.encode("utf-8")
            if len(raw) > 255:
                raise ValidationError(f"field name too long: {name!r}")
            arr = np.ascontiguousarray(values, dtype="<f8")
            if arr.shape != grid.shape:
                raise ValidationError(f"field {name!r} shape {arr.shape} != grid shape")
            fh.write(struct.pack("<B", len(raw)))
            fh.write(raw)
            fh.write(arr.tobytes())


def read_snapshot(path):
    """Read a snapshot file; returns (grid, {name: values})."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise ValidationError(f"bad snapshot magic {magic!r}")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != SNAPSHOT_VERSION:
            raise ValidationError(f"unsupported snapshot version {version}")
        (dim,) = struct.unpack("<B", fh.read(1))
        (n,) = struct.unpack("<I", fh.read(4))
        (half_length,) = struct.unpack("<d", fh.read(8))
        (count,) = struct.unpack("<H", fh.read(2))
        grid = TorusGrid(dim, half_length, n)
        fields = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<B", fh.read(1))
            name = fh.read(nlen).decode("utf-8")
            raw = fh.read(8 * grid.size)
            fields[name] = np.frombuffer(raw, dtype="<f8").reshape(grid.shape).copy()
    return grid, fields
