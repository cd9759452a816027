"""Rectangular cell-centred grids with homogeneous Neumann boundaries.

Values live at cell centres.  The boundary condition is imposed through a
ghost layer that mirrors the adjacent interior cell, so the face flux is zero
and the discrete Laplacian sums to zero over the domain.  The same stencil is
diagonalised by the orthonormal type-II DCT, which the implicit solvers use.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft
import scipy.sparse as sp
from scipy.integrate import trapezoid

MIN_CELLS = 4


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular grid on ``[0, L_1] x ... x [0, L_dims]``."""

    extents: tuple[float, ...]
    cells: tuple[int, ...]

    def __post_init__(self):
        extents = tuple(float(e) for e in np.atleast_1d(self.extents))
        cells = tuple(int(c) for c in np.atleast_1d(self.cells))
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "cells", cells)
        if len(extents) not in (1, 2):
            raise ValueError(f"grid must be 1D or 2D, got {len(extents)} axes")
        if len(cells) != len(extents):
            raise ValueError("extents and cells must have the same length")
        if any(c < MIN_CELLS for c in cells):
            raise ValueError(f"need at least {MIN_CELLS} cells per axis, got {cells}")
        if any(not math.isfinite(e) or e <= 0 for e in extents):
            raise ValueError(f"extents must be positive and finite, got {extents}")

    @property
    def dims(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / c for e, c in zip(self.extents, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def measure(self) -> float:
        return float(np.prod(self.extents))

    def centers(self) -> tuple[np.ndarray, ...]:
        """Cell-centre coordinates along each axis."""
        return tuple((np.arange(c) + 0.5) * h for c, h in zip(self.cells, self.spacing))

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.centers(), indexing="ij"))

    def field(self, values) -> "ScalarField":
        return ScalarField(self, values)

    def constant(self, value: float) -> "ScalarField":
        return ScalarField(self, np.full(self.shape, float(value)))

    def to_dict(self) -> dict:
        return {"dims": self.dims, "extents": list(self.extents), "cells": list(self.cells)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, desc: dict) -> "Grid":
        unknown = set(desc) - {"dims", "extents", "cells"}
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        grid = cls(tuple(desc["extents"]), tuple(desc["cells"]))
        if "dims" in desc and int(desc["dims"]) != grid.dims:
            raise ValueError(f"dims={desc['dims']} disagrees with {grid.dims} axes")
        return grid

    @classmethod
    def from_json(cls, text: str) -> "Grid":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ScalarField:
    """One real value per cell of ``grid``."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.size == 1 and self.grid.size != 1:
            values = np.full(self.grid.shape, float(values.ravel()[0]))
        if values.shape != self.grid.shape:
            if values.size != self.grid.size:
                raise ValueError(
                    f"field has {values.size} values, grid has {self.grid.size} cells"
                )
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class Trajectory:
    """Snapshots of one or more species on a common grid.

    ``data`` has shape ``(len(times), n_species, *grid.shape)``.
    """

    grid: Grid
    times: np.ndarray
    data: np.ndarray = field(repr=False)
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        data = np.asarray(self.data, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("trajectory needs at least one sample time")
        if times[0] != 0.0:
            raise ValueError(f"trajectory must start at t=0, got {times[0]}")
        if np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if data.ndim == 1 + self.grid.dims:
            data = data[:, None]
        if data.shape != (times.size, data.shape[1], *self.grid.shape):
            raise ValueError(f"data shape {data.shape} does not match times/grid")
        times.setflags(write=False)
        data.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "data", data)

    @property
    def n_species(self) -> int:
        return self.data.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def snapshot(self, index: int, species: int = 0) -> ScalarField:
        return ScalarField(self.grid, self.data[index, species])

    def final(self, species: int = 0) -> ScalarField:
        return self.snapshot(-1, species)


# --------------------------------------------------------------------------
# stencil
# --------------------------------------------------------------------------

def apply_laplacian(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Neumann Laplacian acting on the trailing ``grid.dims`` axes of ``values``."""
    values = np.asarray(values, dtype=float)
    lead = values.ndim - grid.dims
    out = np.zeros_like(values)
    for axis, h in enumerate(grid.spacing):
        ax = lead + axis
        pad = [(0, 0)] * values.ndim
        pad[ax] = (1, 1)
        ext = np.pad(values, pad, mode="edge")
        n = values.shape[ax]
        up = np.take(ext, np.arange(2, n + 2), axis=ax)
        down = np.take(ext, np.arange(0, n), axis=ax)
        out += (up - 2.0 * values + down) / h**2
    return out


def neumann_laplacian(f: ScalarField) -> ScalarField:
    """Second-order central difference Laplacian with zero normal flux."""
    return ScalarField(f.grid, apply_laplacian(f.grid, f.values))


def laplacian_eigenvalues(grid: Grid) -> np.ndarray:
    """Eigenvalues (all <= 0) of the stencil in the DCT-II basis, shaped like the grid."""
    lam = np.zeros(grid.shape)
    for axis, (n, h) in enumerate(zip(grid.cells, grid.spacing)):
        k = np.arange(n)
        lam1 = -(4.0 / h**2) * np.sin(np.pi * k / (2 * n)) ** 2
        shape = [1] * grid.dims
        shape[axis] = n
        lam = lam + lam1.reshape(shape)
    return lam


def dct(grid: Grid, values: np.ndarray) -> np.ndarray:
    axes = tuple(range(-grid.dims, 0))
    return scipy.fft.dctn(values, type=2, norm="ortho", axes=axes)


def idct(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    axes = tuple(range(-grid.dims, 0))
    return scipy.fft.idctn(coeffs, type=2, norm="ortho", axes=axes)


def solve_shifted(grid: Grid, rhs: np.ndarray, coef, eig: np.ndarray | None = None) -> np.ndarray:
    """Solve ``(I - coef * L) x = rhs`` on the trailing grid axes.

    ``coef`` is a scalar or an array broadcasting against the leading axes of
    ``rhs`` (one coefficient per species, say).
    """
    if eig is None:
        eig = laplacian_eigenvalues(grid)
    rhs = np.asarray(rhs, dtype=float)
    coef = np.asarray(coef, dtype=float)
    coef = coef.reshape(coef.shape + (1,) * grid.dims)
    out = idct(grid, dct(grid, rhs) / (1.0 - coef * eig))
    # the zero mode is untouched by the solve; strip transform rounding from it
    axes = tuple(range(-grid.dims, 0))
    out += rhs.mean(axis=axes, keepdims=True) - out.mean(axis=axes, keepdims=True)
    return out


def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """Sparse matrix of the stencil, acting on C-ordered flattened fields."""
    mats = []
    for n, h in zip(grid.cells, grid.spacing):
        main = -2.0 * np.ones(n)
        main[0] = main[-1] = -1.0
        off = np.ones(n - 1)
        mats.append(sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2)
    if grid.dims == 1:
        return mats[0].tocsr()
    eye = [sp.identity(n, format="csr") for n in grid.cells]
    return (sp.kron(mats[0], eye[1]) + sp.kron(eye[0], mats[1])).tocsr()


# --------------------------------------------------------------------------
# norms
# --------------------------------------------------------------------------

def _check_p(p: float) -> float:
    p = float(p)
    if not (p >= 1.0):
        raise ValueError(f"norm exponent must satisfy p >= 1, got {p}")
    return p


def lp_norm_space(f: ScalarField, p: float) -> float:
    """``(sum |f|^p * cell volume)^(1/p)``, or ``max |f|`` for ``p = inf``."""
    p = _check_p(p)
    vals = np.abs(f.values)
    if math.isinf(p):
        return float(vals.max())
    return float((np.sum(vals**p) * f.grid.cell_volume) ** (1.0 / p))


def spatial_power_integrals(grid: Grid, data: np.ndarray, p: float) -> np.ndarray:
    """``int_Omega |u|^p`` for each leading index of ``data``."""
    axes = tuple(range(-grid.dims, 0))
    return np.sum(np.abs(data) ** p, axis=axes) * grid.cell_volume


def lp_norm_spacetime(tr: Trajectory, species: int = 0, p: float = 2.0) -> float:
    """``L^p`` norm over ``[0, T] x Omega`` with trapezoidal quadrature in time."""
    p = _check_p(p)
    if tr.times.size < 2:
        raise ValueError("space-time norm needs at least two sample times")
    u = tr.data[:, species]
    if math.isinf(p):
        return float(np.abs(u).max())
    per_time = spatial_power_integrals(tr.grid, u, p)
    return float(trapezoid(per_time, tr.times) ** (1.0 / p))


def grid_from_flags(cells: Sequence[int], extents: Sequence[float] | None = None) -> Grid:
    """Build a grid from ``--grid NxM`` / ``--extent LX,LY`` style values."""
    cells = tuple(int(c) for c in cells)
    if extents is None:
        extents = (1.0,) * len(cells)
    extents = tuple(float(e) for e in extents)
    if len(extents) == 1 and len(cells) == 2:
        extents = extents * 2
    return Grid(extents, cells)
