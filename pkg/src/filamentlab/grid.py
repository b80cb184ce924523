"""Periodic grids, discrete Fourier transforms, and Fourier multipliers.

Every solver in the package works on a uniform periodic box in 1 or 2 space
dimensions.  Fields are complex arrays with a trailing component axis; the
operators applied to them are diagonal (scalar symbol) or block-diagonal
(matrix symbol) in Fourier space.  Wavenumbers follow the standard DFT layout,
``2*pi*fftfreq(n, d=dx)``, i.e. the set {2*pi*m/L : m = -N/2 .. N/2-1} per
dimension, so spectral dumps are reproducible from (N, L) alone.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    """Invalid grid construction or a field/grid mismatch."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic box. Coordinates run over [-L/2, L/2) per dimension."""

    dims: int
    points: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        if self.dims not in (1, 2):
            raise GridError(f"dims must be 1 or 2, got {self.dims}")
        if len(self.points) != self.dims or len(self.lengths) != self.dims:
            raise GridError("points and lengths must have one entry per dimension")
        for n in self.points:
            if n < 4 or n % 2 != 0:
                raise GridError(f"points per dimension must be even and >= 4, got {n}")
        for length in self.lengths:
            if not (length > 0):
                raise GridError(f"lengths must be positive, got {length}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(l / n for l, n in zip(self.lengths, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def total_points(self) -> int:
        return int(np.prod(self.points))

    def axis_coordinates(self, axis: int) -> np.ndarray:
        n, length = self.points[axis], self.lengths[axis]
        return -length / 2 + (length / n) * np.arange(n)

    def axis_wavenumbers(self, axis: int) -> np.ndarray:
        n = self.points[axis]
        return 2 * np.pi * np.fft.fftfreq(n, d=self.spacing[axis])

    def coordinate_mesh(self) -> tuple[np.ndarray, ...]:
        axes = [self.axis_coordinates(d) for d in range(self.dims)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def wavenumber_mesh(self) -> tuple[np.ndarray, ...]:
        axes = [self.axis_wavenumbers(d) for d in range(self.dims)]
        return tuple(np.meshgrid(*axes, indexing="ij"))


def make_grid(dims, points_per_dim, lengths) -> GridSpec:
    """Build a :class:`GridSpec`, validating point counts and lengths."""
    return GridSpec(int(dims), tuple(int(n) for n in points_per_dim),
                    tuple(float(l) for l in lengths))


@dataclass
class SpectralField:
    """Complex field on a grid; the last axis of ``values`` indexes components."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape[:-1] != self.grid.shape:
            raise GridError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape} + (c,)")

    @property
    def ncomp(self) -> int:
        return self.values.shape[-1]

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.values.copy())


def zeros_field(grid: GridSpec, ncomp: int) -> SpectralField:
    return SpectralField(grid, np.zeros(grid.shape + (ncomp,), dtype=complex))


def spatial_axes(grid: GridSpec) -> tuple[int, ...]:
    return tuple(range(grid.dims))


def forward_transform(field: SpectralField) -> np.ndarray:
    return np.fft.fftn(field.values, axes=spatial_axes(field.grid))


def inverse_transform(grid: GridSpec, values_hat: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(values_hat, axes=spatial_axes(grid))


def _evaluate_symbol(grid: GridSpec, symbol) -> np.ndarray:
    if callable(symbol):
        table = symbol(*grid.wavenumber_mesh())
    else:
        table = symbol
    return np.asarray(table, dtype=complex)


def _check_finite_symbol(grid: GridSpec, table: np.ndarray):
    bad = ~np.isfinite(table)
    if bad.any():
        idx = tuple(np.argwhere(bad)[0])[:grid.dims]
        offending = tuple(grid.axis_wavenumbers(d)[idx[d]] for d in range(grid.dims))
        raise GridError(f"symbol is not finite at wavenumber {offending}")


def apply_scalar_multiplier(field: SpectralField, symbol) -> SpectralField:
    """Apply a scalar Fourier multiplier to every component of the field.

    ``symbol`` is either a callable of the wavenumber mesh arrays or a
    precomputed complex array of the grid's shape.
    """
    table = _evaluate_symbol(field.grid, symbol)
    if table.shape != field.grid.shape:
        raise GridError(f"scalar symbol shape {table.shape} != grid shape {field.grid.shape}")
    _check_finite_symbol(field.grid, table)
    out = inverse_transform(field.grid, forward_transform(field) * table[..., None])
    return SpectralField(field.grid, out)


def apply_matrix_multiplier(field: SpectralField, symbol) -> SpectralField:
    """Apply a matrix-valued Fourier multiplier (per-mode matrix-vector product).

    ``symbol`` is a callable of the wavenumber mesh arrays, or a precomputed
    array, of shape ``grid.shape + (c, c)`` with c the component count.
    """
    table = _evaluate_symbol(field.grid, symbol)
    c = field.ncomp
    if table.shape != field.grid.shape + (c, c):
        raise GridError(
            f"matrix symbol shape {table.shape} != expected {field.grid.shape + (c, c)}")
    _check_finite_symbol(field.grid, table)
    transformed = forward_transform(field)
    mixed = np.einsum("...ij,...j->...i", table, transformed)
    return SpectralField(field.grid, inverse_transform(field.grid, mixed))


def dealias_mask(grid: GridSpec) -> np.ndarray:
    """2/3-rule mask (True on kept modes), optional in the split-step solvers."""
    mask = np.ones(grid.shape, dtype=bool)
    mesh = grid.wavenumber_mesh()
    for d in range(grid.dims):
        cutoff = (2.0 / 3.0) * np.abs(grid.axis_wavenumbers(d)).max()
        mask &= np.abs(mesh[d]) <= cutoff + 1e-12
    return mask


def l2_norm(field: SpectralField) -> float:
    """Discrete L2 norm over the box, all components."""
    return float(np.sqrt(np.sum(np.abs(field.values) ** 2) * field.grid.cell_volume))


def spectral_l2_norm(field: SpectralField) -> float:
    """Same norm computed on the Fourier side (Parseval)."""
    hat = forward_transform(field)
    scale = field.grid.cell_volume / field.grid.total_points
    return float(np.sqrt(np.sum(np.abs(hat) ** 2) * scale))


def write_field_csv(field: SpectralField, path):
    """Field snapshot: columns x[, y], comp<i>_re, comp<i>_im with a header row."""
    grid = field.grid
    coord_names = ["x", "y"][:grid.dims]
    header = coord_names + [f"comp{i}_{part}" for i in range(field.ncomp)
                            for part in ("re", "im")]
    mesh = grid.coordinate_mesh()
    flat_coords = [m.reshape(-1) for m in mesh]
    flat_vals = field.values.reshape(-1, field.ncomp)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(flat_vals.shape[0]):
            row = [repr(float(c[i])) for c in flat_coords]
            for comp in range(field.ncomp):
                row.append(repr(float(flat_vals[i, comp].real)))
                row.append(repr(float(flat_vals[i, comp].imag)))
            writer.writerow(row)


def read_field_csv(path, grid: GridSpec) -> SpectralField:
    """Read a snapshot written by :func:`write_field_csv` back onto ``grid``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    data = np.asarray(rows)
    ncoord = grid.dims
    ncomp = (len(header) - ncoord) // 2
    if data.shape[0] != grid.total_points:
        raise GridError(f"snapshot has {data.shape[0]} rows, grid expects {grid.total_points}")
    vals = data[:, ncoord::2] + 1j * data[:, ncoord + 1::2]
    return SpectralField(grid, vals.reshape(grid.shape + (ncomp,)))
