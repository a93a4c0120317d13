"""Matrix-free conjugate gradients for ``(a I - b Lap_h) w = rhs`` with Neumann walls."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import fft

from .errors import ConfigError, SolverFailure
from .mesh import Grid, check_field, laplacian


@dataclass(frozen=True)
class SolveSpec:
    a: float = 1.0
    b: float = 1.0
    rel_tol: float = 1e-10
    max_iter: Optional[int] = None  # None -> 10*(nx+ny)
    preconditioner: str = "dct"  # "dct" or "none"

    def __post_init__(self):
        if not (self.a >= 0):
            raise ConfigError(f"a must be >= 0, got {self.a}", field="a")
        if not (self.b > 0):
            raise ConfigError(f"b must be > 0, got {self.b}", field="b")
        if not (0 < self.rel_tol < 1):
            raise ConfigError(f"rel_tol must lie in (0, 1), got {self.rel_tol}", field="rel_tol")
        if self.max_iter is not None and self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}", field="max_iter")
        if self.preconditioner not in ("dct", "none"):
            raise ConfigError(f"unknown preconditioner {self.preconditioner!r}", field="preconditioner")

    def with_coefficients(self, a: float, b: float) -> "SolveSpec":
        return SolveSpec(a=a, b=b, rel_tol=self.rel_tol, max_iter=self.max_iter, preconditioner=self.preconditioner)

    def iteration_cap(self, grid: Grid) -> int:
        return self.max_iter if self.max_iter is not None else 10 * (grid.nx + grid.ny)


def apply_operator(grid: Grid, w: np.ndarray, a: float, b: float) -> np.ndarray:
    """``a*w - b*Lap_h(w)``."""
    out = a * w
    if b != 0:
        out = out - b * laplacian(grid, w)
    return out


def laplacian_eigenvalues(grid: Grid) -> np.ndarray:
    """Eigenvalues of ``-Lap_h`` on the DCT-II basis, shape ``(ny, nx)``."""
    kx = (2 - 2 * np.cos(np.pi * np.arange(grid.nx) / grid.nx)) / grid.hx**2
    ky = (2 - 2 * np.cos(np.pi * np.arange(grid.ny) / grid.ny)) / grid.hy**2
    return ky[:, None] + kx[None, :]


def _dct_inverse(grid: Grid, a: float, b: float):
    """Exact inverse of ``a I - b Lap_h`` (pseudo-inverse when a = 0).

    Mirror-ghost Neumann differences are diagonalised by the type-II DCT, so
    as a preconditioner this turns CG into a one-or-two iteration method.
    """
    denom = a + b * laplacian_eigenvalues(grid)
    inv = np.zeros_like(denom)
    np.divide(1.0, denom, out=inv, where=denom > 0)

    def apply(r):
        return fft.idctn(fft.dctn(r, type=2, norm="ortho") * inv, type=2, norm="ortho")

    return apply


def solve_shifted_poisson(
    grid: Grid,
    rhs: np.ndarray,
    spec: SolveSpec = SolveSpec(),
    guess: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Solve the shifted Neumann Poisson problem to ``rel_tol`` in cell l2.

    Constants are an exact eigenvector of the operator (eigenvalue ``a``), so
    after CG converges the mean of the residual is removed by a constant
    correction. That keeps ``a*integrate(w) == integrate(rhs)`` at rounding
    level regardless of the tolerance.
    """
    rhs = check_field(grid, rhs, "rhs")
    a, b = spec.a, spec.b
    rhs_norm = float(np.linalg.norm(rhs))
    if a == 0:
        mean = float(np.mean(rhs))
        if abs(mean) * np.sqrt(rhs.size) > spec.rel_tol * max(rhs_norm, np.finfo(float).tiny):
            raise ConfigError("a = 0 requires a zero-mean right-hand side", field="a")
        rhs = rhs - mean
    if rhs_norm == 0.0:
        return np.zeros_like(rhs)

    x = np.zeros_like(rhs) if guess is None else check_field(grid, guess, "guess").copy()
    if a == 0:
        x -= np.mean(x)
    target = spec.rel_tol * rhs_norm
    cap = spec.iteration_cap(grid)
    it = 0
    # restart from the true residual if the recursive one drifted
    precond = _dct_inverse(grid, a, b) if spec.preconditioner == "dct" else None
    r = rhs - apply_operator(grid, x, a, b)
    for _ in range(4):
        it = _cg(grid, a, b, r, x, target, cap, it, precond)
        r = rhs - apply_operator(grid, x, a, b)
        if a > 0:
            x += np.mean(r) / a
            r -= np.mean(r)
        else:
            x -= np.mean(x)
        res = float(np.linalg.norm(r))
        if res <= target or it >= cap:
            break
    if not np.all(np.isfinite(x)) or res > target:
        raise SolverFailure(
            f"CG did not reach rel_tol {spec.rel_tol:g} in {it} iterations",
            residual=res / rhs_norm,
            iterations=it,
        )
    return x


def _cg(grid, a, b, r, x, target, cap, it, precond=None):
    """(Preconditioned) CG in place on ``x`` from residual ``r``.

    Returns the running iteration count.
    """
    r = r.copy()
    z = precond(r) if precond else r
    rz = float(np.vdot(r, z))
    p = z.copy()
    while np.linalg.norm(r) > target and it < cap:
        Ap = apply_operator(grid, p, a, b)
        pAp = float(np.vdot(p, Ap))
        if pAp <= 0:
            break
        step = rz / pAp
        x += step * p
        r -= step * Ap
        z = precond(r) if precond else r
        rz_new = float(np.vdot(r, z))
        p *= rz_new / rz
        p += z
        rz = rz_new
        it += 1
    return it
