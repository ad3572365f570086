"""Uniform Dirichlet grids on an interval or rectangle.

Only interior values are stored; the boundary is identically zero. Grid
functions are plain float arrays of shape ``(nx,)`` or ``(nx, ny)``.

The gradient form uses forward differences over every cell including the
two boundary cells, which makes it the exact summation-by-parts partner of
the 3/5-point Laplacian: ``grad_sq(f) == -inner(laplacian(f), f)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    extents: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        extents = tuple(float(e) for e in self.extents)
        counts = tuple(int(n) for n in self.counts)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "counts", counts)
        if len(extents) not in (1, 2) or len(extents) != len(counts):
            raise GridError(f"grid needs 1 or 2 matching extents/counts, got {extents} / {counts}")
        if any(not (math.isfinite(e) and e > 0) for e in extents):
            raise GridError(f"grid extents must be positive, got {extents}")
        if any(n < 1 for n in counts):
            raise GridError(f"grid needs at least one interior point per axis, got {counts}")
        if len(extents) == 2:
            hx, hy = (e / (n + 1) for e, n in zip(extents, counts))
            if not math.isclose(hx, hy, rel_tol=1e-12):
                raise GridError(f"2D cells must be square: hx = {hx:g}, hy = {hy:g}")

    @classmethod
    def line(cls, length: float = 1.0, n: int = 256) -> "Grid":
        return cls((length,), (n,))

    @classmethod
    def rectangle(cls, lx: float = 1.0, ly: float = 1.0, nx: int = 64, ny: int = 64) -> "Grid":
        return cls((lx, ly), (nx, ny))

    @property
    def dim(self) -> int:
        return len(self.extents)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def h(self) -> float:
        return self.extents[0] / (self.counts[0] + 1)

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def axes(self) -> list[np.ndarray]:
        return [np.arange(1, n + 1) * self.h for n in self.counts]

    def coords(self) -> tuple[np.ndarray, ...]:
        """Interior coordinates, broadcast to ``shape`` (``ij`` indexing)."""
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def _check(self, f: np.ndarray) -> None:
        if np.shape(f) != self.shape:
            raise GridError(f"grid function shape {np.shape(f)} does not match grid {self.shape}")

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        """Second-order Laplacian with zero ghost values."""
        self._check(f)
        p = np.pad(f, 1)
        if self.dim == 1:
            lap = p[:-2] - 2.0 * f + p[2:]
        else:
            lap = p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * f
        return lap / self.h**2

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Discrete ``int f g dx`` (trapezoid rule with zero boundary values)."""
        self._check(f)
        self._check(g)
        return float(np.vdot(f, g)) * self.cell_volume

    def norm_sq(self, f: np.ndarray) -> float:
        return self.inner(f, f)

    def grad_inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Discrete ``int grad f . grad g dx`` from forward differences."""
        self._check(f)
        self._check(g)
        pf, pg = np.pad(f, 1), np.pad(g, 1)
        total = 0.0
        for axis in range(self.dim):
            df = np.diff(pf, axis=axis)
            dg = np.diff(pg, axis=axis)
            # diff along one axis keeps the padded (zero) rows of the others
            inner_sl = tuple(slice(None) if a == axis else slice(1, -1) for a in range(self.dim))
            total += float(np.vdot(df[inner_sl], dg[inner_sl]))
        return total * self.cell_volume / self.h**2

    def grad_sq(self, f: np.ndarray) -> float:
        return self.grad_inner(f, f)

    def eigenvalues(self, modes: tuple[int, ...]) -> float:
        """Eigenvalue of ``-laplacian`` for the discrete sine mode ``modes``."""
        return sum(
            4.0 / self.h**2 * math.sin(m * math.pi * self.h / (2.0 * length)) ** 2
            for m, length in zip(modes, self.extents)
        )

    def poincare_constant(self) -> float:
        """Smallest eigenvalue of ``-laplacian``; ``grad_sq >= it * norm_sq``."""
        return self.eigenvalues((1,) * self.dim)

    def sine_mode(self, modes: tuple[int, ...], amp: float = 1.0) -> np.ndarray:
        f = np.full(self.shape, float(amp))
        for x, m, length in zip(self.coords(), modes, self.extents):
            f = f * np.sin(m * np.pi * x / length)
        return f

    def gaussian(self, center: tuple[float, ...], width: float, amp: float = 1.0) -> np.ndarray:
        r2 = sum((x - c) ** 2 for x, c in zip(self.coords(), center))
        return amp * np.exp(-r2 / (2.0 * width**2))


def laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    return grid.laplacian(f)


def inner(grid: Grid, f: np.ndarray, g: np.ndarray) -> float:
    return grid.inner(f, g)


def grad_sq(grid: Grid, f: np.ndarray) -> float:
    return grid.grad_sq(f)
