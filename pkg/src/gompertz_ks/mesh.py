"""Uniform cell-centred rectangular grid with homogeneous Neumann boundaries.

Fields are plain ``numpy`` arrays of shape ``(ny, nx)``; row index is y,
column index is x, so ``field.ravel()`` is row-major by y then x. Boundary
conditions are imposed by mirror ghost cells, which makes every
boundary-normal face difference exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalFailure


@dataclass(frozen=True)
class Grid:
    Lx: float
    Ly: float
    nx: int
    ny: int

    def __post_init__(self):
        for name in ("Lx", "Ly"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f"{name} must be positive, got {value!r}", field=name)
        for name in ("nx", "ny"):
            value = getattr(self, name)
            if int(value) != value or value < 3:
                raise ConfigError(f"{name} must be an integer >= 3, got {value!r}", field=name)

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def h_min(self) -> float:
        return min(self.hx, self.hy)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates as two ``(ny, nx)`` arrays ``(X, Y)``."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y)

    def sample(self, func) -> np.ndarray:
        X, Y = self.centers()
        return np.asarray(func(X, Y), dtype=float) * np.ones(self.shape)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def full(self, value: float) -> np.ndarray:
        return np.full(self.shape, float(value))


def build_grid(Lx: float, Ly: float, nx: int, ny: int) -> Grid:
    g = Grid(float(Lx), float(Ly), nx, ny)  # validates integrality before the cast
    return Grid(g.Lx, g.Ly, int(nx), int(ny))


def check_field(grid: Grid, w: np.ndarray, name: str = "field") -> np.ndarray:
    """Validate shape and finiteness; non-finite entries are a hard failure."""
    w = np.asarray(w, dtype=float)
    if w.shape != grid.shape:
        raise ConfigError(f"{name} has shape {w.shape}, grid expects {grid.shape}", field=name)
    if not np.all(np.isfinite(w)):
        raise NumericalFailure(f"{name} contains NaN or Inf")
    return w


def integrate(grid: Grid, w: np.ndarray) -> float:
    """Midpoint quadrature ``hx*hy*sum(w)``."""
    return float(grid.cell_area * np.sum(w))


def face_differences(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Differences across interior faces: ``(w[:, i+1]-w[:, i], w[j+1, :]-w[j, :])``.

    Boundary faces carry zero difference under mirror ghosts and are omitted.
    """
    return w[:, 1:] - w[:, :-1], w[1:, :] - w[:-1, :]


def gradient_energy(grid: Grid, w: np.ndarray) -> float:
    """Discrete Dirichlet energy ``hx*hy * sum_faces (dw/h)^2``."""
    dx, dy = face_differences(w)
    total = np.sum(dx * dx) / grid.hx**2 + np.sum(dy * dy) / grid.hy**2
    return float(grid.cell_area * total)


def laplacian(grid: Grid, w: np.ndarray) -> np.ndarray:
    """Five-point Neumann Laplacian with mirror ghosts."""
    dx = (w[:, 1:] - w[:, :-1]) * (1.0 / grid.hx**2)
    dy = (w[1:, :] - w[:-1, :]) * (1.0 / grid.hy**2)
    out = np.zeros(w.shape)
    out[:, :-1] += dx
    out[:, 1:] -= dx
    out[:-1, :] += dy
    out[1:, :] -= dy
    return out


def field_norms(grid: Grid, w: np.ndarray) -> tuple[float, float, float]:
    """Return ``(max, min, L2 norm)`` of a cell field."""
    l2 = np.sqrt(grid.cell_area * np.sum(w * w))
    return float(np.max(w)), float(np.min(w)), float(l2)
