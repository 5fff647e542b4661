# spectral_core.py

"""
Periodic-domain spectral representation.

A Grid describes the box [0, length)^dim sampled with n points per axis, and
precomputes its integer wavevector table. A SpectralField stores the full set
of Fourier coefficients of a real scalar or vector field, normalised so that
the zero mode equals the spatial mean. All operations return new fields.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from errors import ComponentError, GridError, GridMismatchError, ShapeMismatchError

log = logging.getLogger(__name__)

# --- CONFIGURATION ---
MIN_POINTS = 8
ALLOWED_DIMS = (2, 3)
DEALIAS_RATIO = 1.0 / 3.0          # keep |xi_axis| <= n/3
SNAPSHOT_HEADER = "dim,n,length,components,time"


def _freeze(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Grid:
    dim: int
    n: int
    length: float = 2 * math.pi

    def __post_init__(self):
        if self.dim not in ALLOWED_DIMS:
            raise GridError(f"dim must be one of {ALLOWED_DIMS}, got {self.dim}")
        if self.n < MIN_POINTS or self.n & (self.n - 1):
            raise GridError(f"n must be a power of two >= {MIN_POINTS}, got {self.n}")
        if not self.length > 0:
            raise GridError(f"length must be positive, got {self.length}")
        object.__setattr__(self, "length", float(self.length))

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def size(self):
        return self.n ** self.dim

    @property
    def volume(self):
        return self.length ** self.dim

    @property
    def spacing(self):
        return self.length / self.n

    @cached_property
    def wavevectors(self):
        """Integer wavevectors, shape (dim, n, ..., n), each axis in {-n/2, ..., n/2 - 1}."""
        axis = np.fft.fftfreq(self.n, 1.0 / self.n).astype(np.int64)
        return _freeze(np.array(np.meshgrid(*([axis] * self.dim), indexing="ij")))

    @cached_property
    def kphys(self):
        """Physical wavevectors 2*pi*xi/length."""
        return _freeze(self.wavevectors * (2 * math.pi / self.length))

    @cached_property
    def k2(self):
        return _freeze(np.sum(self.kphys ** 2, axis=0))

    @cached_property
    def kabs(self):
        return _freeze(np.sqrt(self.k2))

    @cached_property
    def dealias_mask(self):
        return _freeze(np.all(np.abs(self.wavevectors) <= self.n * DEALIAS_RATIO, axis=0))

    def coordinates(self):
        """Physical sample coordinates x_i = i*length/n, one array per axis."""
        x = np.arange(self.n) * self.spacing
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))


def make_grid(dim, n, length=2 * math.pi):
    grid = Grid(int(dim), int(n), length)
    grid.wavevectors  # precompute the table
    return grid


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a real field, shape (components, n, ..., n)."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=np.complex128)
        if coeffs.shape == self.grid.shape:
            coeffs = coeffs[np.newaxis]
        if coeffs.ndim != self.grid.dim + 1 or coeffs.shape[1:] != self.grid.shape:
            raise ShapeMismatchError(
                f"coefficient shape {coeffs.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "coeffs", _freeze(coeffs))

    @classmethod
    def zeros(cls, grid, components=1):
        return cls(grid, np.zeros((components,) + grid.shape, dtype=np.complex128))

    @property
    def components(self):
        return self.coeffs.shape[0]

    @property
    def is_scalar(self):
        return self.components == 1

    @property
    def is_vector(self):
        return self.components == self.grid.dim

    def component(self, i):
        return SpectralField(self.grid, self.coeffs[i:i + 1])

    def with_coeffs(self, coeffs):
        return SpectralField(self.grid, coeffs)

    def mean(self):
        """Spatial mean per component (the zero mode)."""
        return self.coeffs[(slice(None),) + (0,) * self.grid.dim].real.copy()

    def without_mean(self):
        coeffs = self.coeffs.copy()
        coeffs[(slice(None),) + (0,) * self.grid.dim] = 0.0
        return self.with_coeffs(coeffs)

    def _coerce(self, other):
        _check_grid(self.grid, other.grid)
        if other.components != self.components:
            raise ComponentError(
                f"component mismatch: {self.components} vs {other.components}"
            )
        return other.coeffs

    def __add__(self, other):
        return self.with_coeffs(self.coeffs + self._coerce(other))

    def __sub__(self, other):
        return self.with_coeffs(self.coeffs - self._coerce(other))

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            return NotImplemented
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self.with_coeffs(self.coeffs / scalar)


def _check_grid(a, b):
    if a != b:
        raise GridMismatchError(f"grid mismatch: {a} vs {b}")


def transform(grid, samples):
    """Physical samples (grid.shape or (components,) + grid.shape) -> SpectralField."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape == grid.shape:
        samples = samples[np.newaxis]
    if samples.ndim != grid.dim + 1 or samples.shape[1:] != grid.shape:
        raise ShapeMismatchError(f"sample shape {samples.shape} does not match grid {grid.shape}")
    axes = tuple(range(1, grid.dim + 1))
    return SpectralField(grid, np.fft.fftn(samples, axes=axes) / grid.size)


def inverse_transform(f):
    """SpectralField -> real samples; scalars come back with shape grid.shape."""
    axes = tuple(range(1, f.grid.dim + 1))
    samples = np.fft.ifftn(f.coeffs * f.grid.size, axes=axes).real
    return samples[0] if f.is_scalar else samples


def physical_samples(f, truncate=True):
    """Real samples of every component, shape (components,) + grid.shape."""
    coeffs = f.coeffs * f.grid.dealias_mask if truncate else f.coeffs
    axes = tuple(range(1, f.grid.dim + 1))
    return np.fft.ifftn(coeffs * f.grid.size, axes=axes).real


def from_samples(grid, samples, truncate=True):
    """Transform samples of shape (components,) + grid.shape, 2/3-truncating the result."""
    axes = tuple(range(1, grid.dim + 1))
    coeffs = np.fft.fftn(samples, axes=axes) / grid.size
    if truncate:
        coeffs *= grid.dealias_mask
    return SpectralField(grid, coeffs)


def apply_multiplier(f, multiplier):
    return f.with_coeffs(f.coeffs * multiplier)


def truncate(f):
    """2/3-rule truncation: zero every mode with |xi_axis| > n/3."""
    return apply_multiplier(f, f.grid.dealias_mask)


def derivative(f, axis, order=1):
    if not 0 <= axis < f.grid.dim:
        raise ValueError(f"axis must lie in [0, {f.grid.dim}), got {axis}")
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    return apply_multiplier(f, (1j * f.grid.kphys[axis]) ** order)


def gradient(f):
    """Gradient; component c*dim + i holds d_i f_c."""
    grid = f.grid
    coeffs = 1j * grid.kphys[np.newaxis, :] * f.coeffs[:, np.newaxis]
    return SpectralField(grid, coeffs.reshape((f.components * grid.dim,) + grid.shape))


def divergence(v):
    if not v.is_vector:
        raise ComponentError(f"divergence needs a {v.grid.dim}-vector, got {v.components} components")
    return SpectralField(v.grid, np.sum(1j * v.grid.kphys * v.coeffs, axis=0))


def laplacian(f):
    return apply_multiplier(f, -f.grid.k2)


def inverse_laplacian(f):
    """Divide by -|xi|^2; the zero mode is annihilated."""
    k2 = f.grid.k2
    inverse = np.divide(-1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    return apply_multiplier(f, inverse)


def dealiased_product(f, g):
    """Pointwise product with 2/3-rule truncation before and after multiplying.

    Scalar * scalar, scalar * vector and componentwise vector * vector are supported.
    """
    _check_grid(f.grid, g.grid)
    if f.components != g.components and 1 not in (f.components, g.components):
        raise ComponentError(
            f"cannot multiply fields with {f.components} and {g.components} components"
        )
    return from_samples(f.grid, physical_samples(f, True) * physical_samples(g, True))


def advect(w, f):
    """Dealiased transport term w . grad f for scalar or vector f."""
    _check_grid(w.grid, f.grid)
    if not w.is_vector:
        raise ComponentError("advecting field must be a vector field")
    grid = f.grid
    w_x = physical_samples(w, True)
    total = np.zeros((f.components,) + grid.shape)
    f_trunc = truncate(f)
    for axis in range(grid.dim):
        total += w_x[axis] * physical_samples(derivative(f_trunc, axis), False)
    return from_samples(grid, total)


def inner(f, g):
    """L2 inner product over the periodic box (Parseval)."""
    _check_grid(f.grid, g.grid)
    return f.grid.volume * float(np.sum((f.coeffs * np.conj(g.coeffs)).real))


def l2_norm(f):
    return math.sqrt(f.grid.volume * float(np.sum(np.abs(f.coeffs) ** 2)))


def max_abs(f):
    """Max over grid points of |f| (Euclidean norm across components)."""
    samples = physical_samples(f, False)
    return float(np.sqrt(np.max(np.sum(samples ** 2, axis=0))))


# --- SNAPSHOT FILES ---

def save_snapshot(path, f, time=0.0):
    """Write physical samples as CSV (header `dim,n,length,components,time`) or .npz."""
    path = Path(path)
    grid = f.grid
    samples = physical_samples(f, False)
    if path.suffix == ".npz":
        np.savez(path, samples=samples, dim=grid.dim, n=grid.n, length=grid.length, time=time)
        return path
    header = f"{SNAPSHOT_HEADER}\n{grid.dim},{grid.n},{grid.length!r},{f.components},{float(time)!r}"
    rows = samples.reshape(f.components, -1).T
    np.savetxt(path, rows, fmt="%.17g", delimiter=",", header=header, comments="")
    return path


def load_snapshot(path):
    """Read a snapshot written by save_snapshot. Returns (field, time)."""
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as data:
            grid = make_grid(int(data["dim"]), int(data["n"]), float(data["length"]))
            return transform(grid, data["samples"]), float(data["time"])

    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        values = fh.readline().strip().split(",")
    if header != SNAPSHOT_HEADER or len(values) != 5:
        raise ShapeMismatchError(f"{path} is not a field snapshot (header {header!r})")
    dim, n, length, components, time = values
    grid = make_grid(int(dim), int(n), float(length))
    rows = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    if rows.shape != (grid.size, int(components)):
        raise ShapeMismatchError(f"{path}: expected {grid.size}x{components} samples, got {rows.shape}")
    samples = rows.T.reshape((int(components),) + grid.shape)
    return transform(grid, samples), float(time)
