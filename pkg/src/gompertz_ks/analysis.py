"""Gagliardo-Nirenberg constant search and the smallness-condition checker.

The ratio maximised here is

    Q(w) = |w|_4 / (|grad w|_2^(1/2) |w|_2^(1/2) + |w|_2)

with the discrete norms of :mod:`gompertz_ks.mesh`. Any field gives a lower
bound on the best constant for the grid, never an upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .kinetics import Gompertz, mass_cap
from .linsolve import apply_operator
from .mesh import Grid, gradient_energy


def _norm_parts(grid: Grid, w: np.ndarray):
    n4 = (grid.cell_area * np.sum(w**4)) ** 0.25
    n2 = math.sqrt(grid.cell_area * np.sum(w * w))
    g = gradient_energy(grid, w)
    return n4, n2, g


def gn_ratio(grid: Grid, w: np.ndarray) -> float:
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ConfigError("gn_ratio needs w >= 0", field="w")
    if not np.any(w):
        raise ConfigError("gn_ratio is undefined for the zero field", field="w")
    n4, n2, g = _norm_parts(grid, w)
    return float(n4 / (g**0.25 * math.sqrt(n2) + n2))


def log_ratio_gradient(grid: Grid, w: np.ndarray) -> tuple[float, np.ndarray]:
    """``log Q(w)`` and its exact gradient with respect to the cell values.

    Undefined where ``grad w = 0`` (the energy enters with power 1/4).
    """
    n4, n2, g = _norm_parts(grid, w)
    A = grid.cell_area
    g14 = g**0.25
    denom = g14 * math.sqrt(n2) + n2
    d_n4 = A * w**3 / n4**3
    d_n2 = A * w / n2
    d_g = 2 * A * apply_operator(grid, w, 0.0, 1.0)  # 2 A (-Lap_h w)
    d_denom = 0.25 * g ** (-0.75) * math.sqrt(n2) * d_g + (0.5 * g14 / math.sqrt(n2) + 1.0) * d_n2
    value = math.log(n4) - math.log(denom)
    return value, d_n4 / n4 - d_denom / denom


@dataclass(frozen=True)
class SearchBudget:
    multistarts: int = 12
    ascent_iters: int = 200

    def __post_init__(self):
        if self.multistarts < 1:
            raise ConfigError("budget needs at least one multistart", field="multistarts")
        if self.ascent_iters < 0:
            raise ConfigError("ascent_iters must be >= 0", field="ascent_iters")


@dataclass
class GnEstimate:
    c_gn_lower: float
    argmax_field: np.ndarray = field(repr=False)
    budget: SearchBudget
    grid: Grid
    seed: int
    start_ratios: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "c_gn_lower": self.c_gn_lower,
            "multistarts": self.budget.multistarts,
            "ascent_iters": self.budget.ascent_iters,
            "seed": self.seed,
            "grid": {"Lx": self.grid.Lx, "Ly": self.grid.Ly, "nx": self.grid.nx, "ny": self.grid.ny},
            "start_ratios": [float(q) for q in self.start_ratios],
        }


def starting_fields(grid: Grid, count: int, seed: int) -> list:
    """Deterministic ordered list of ``count`` nonnegative starting fields.

    The constant field always comes first, followed by centred, corner and
    edge bumps, then seeded random smooth fields.
    """
    X, Y = grid.centers()
    L = min(grid.Lx, grid.Ly)
    starts = [grid.full(1.0)]

    def bump(cx, cy, width):
        return np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * (width * L) ** 2))

    for width in (0.4, 0.2, 0.1, 0.05):
        starts.append(bump(grid.Lx / 2, grid.Ly / 2, width))
    for width in (0.3, 0.1):
        starts.append(bump(0.0, 0.0, width))
        starts.append(bump(grid.Lx / 2, 0.0, width))
    rng = np.random.default_rng(seed)
    while len(starts) < count:
        k = 4
        coef = rng.normal(size=(k, k)) / (1 + np.add.outer(np.arange(k), np.arange(k)))
        w = np.zeros(grid.shape)
        for i in range(k):
            for j in range(k):
                w += coef[i, j] * np.cos(np.pi * i * X / grid.Lx) * np.cos(np.pi * j * Y / grid.Ly)
        w = np.maximum(w - np.quantile(w, rng.uniform(0.0, 0.9)), 0.0)
        if not np.any(w):
            continue
        starts.append(w)
    return starts[:count]


def ascend(grid: Grid, w: np.ndarray, iters: int, rel_stop: float = 1e-10) -> tuple[float, np.ndarray]:
    """Projected gradient ascent on ``log Q`` with step halving.

    Returns the best ratio seen and its field; the result never falls below
    the ratio of the starting field.
    """
    best_w = w / math.sqrt(grid.cell_area * np.sum(w * w))
    best_q = gn_ratio(grid, best_w)
    if iters == 0 or gradient_energy(grid, best_w) == 0.0:
        return best_q, best_w
    step = 0.1
    logq, grad = log_ratio_gradient(grid, best_w)
    for _ in range(iters):
        gnorm = math.sqrt(grid.cell_area * np.sum(grad * grad))
        if gnorm == 0 or not math.isfinite(gnorm):
            break
        improved = False
        while step > 1e-12:
            trial = np.maximum(best_w + (step / gnorm) * grad, 0.0)
            if np.any(trial) and gradient_energy(grid, trial) > 0:
                trial /= math.sqrt(grid.cell_area * np.sum(trial * trial))
                q = gn_ratio(grid, trial)
                if q > best_q:
                    improved = True
                    break
            step *= 0.5
        if not improved:
            break
        gain = (q - best_q) / best_q
        best_q, best_w = q, trial
        logq, grad = log_ratio_gradient(grid, best_w)
        step = min(2 * step, 1.0)
        if gain < rel_stop:
            break
    return best_q, best_w


def estimate_gn(grid: Grid, budget: SearchBudget = SearchBudget(), seed: int = 0) -> GnEstimate:
    """Multistart ascent for the largest discrete Gagliardo-Nirenberg ratio."""
    best_q, best_w = -math.inf, None
    ratios = []
    for w0 in starting_fields(grid, budget.multistarts, seed):
        q, w = ascend(grid, w0, budget.ascent_iters)
        ratios.append(q)
        if q > best_q:
            best_q, best_w = q, w
    return GnEstimate(c_gn_lower=float(best_q), argmax_field=best_w, budget=budget, grid=grid, seed=seed, start_ratios=ratios)


@dataclass(frozen=True)
class TheoremReport:
    M: float
    alpha: float
    K: float
    chi: float
    c_gn_used: float
    cond_K: bool
    margin_K: float
    cond_chiM: bool
    margin_chiM: float
    c_gn_source: str = "estimated"
    c1: Optional[float] = None

    @property
    def overall(self) -> bool:
        return self.cond_K and self.cond_chiM

    @property
    def heuristic(self) -> bool:
        return self.c_gn_source != "user"

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "alpha": self.alpha,
            "K": self.K,
            "chi": self.chi,
            "c_gn_used": self.c_gn_used,
            "c_gn_source": self.c_gn_source,
            "heuristic": self.heuristic,
            "cond_K": self.cond_K,
            "margin_K": self.margin_K,
            "cond_chiM": self.cond_chiM,
            "margin_chiM": self.margin_chiM,
            "overall": self.overall,
            "c1": self.c1,
        }


def check_conditions(params, u0_mass: float, area: float, c_gn: float, c_gn_source: str = "estimated") -> TheoremReport:
    """Evaluate ``K > exp(-2/alpha)`` (strict) and ``chi*M <= 1/(2 c_gn^4)``."""
    source = params.source
    if not isinstance(source, Gompertz):
        raise ConfigError("theorem conditions apply to the Gompertz source only", field="source")
    if u0_mass <= 0 or area <= 0 or c_gn <= 0:
        raise ConfigError("check_conditions needs positive mass, area and c_gn")
    from .diagnostics import absorption_c1

    M = mass_cap(u0_mass, source, area)
    k_floor = math.exp(-2.0 / source.alpha)
    limit = 1.0 / (2.0 * c_gn**4)
    return TheoremReport(
        M=M,
        alpha=source.alpha,
        K=source.K,
        chi=params.chi,
        c_gn_used=float(c_gn),
        cond_K=source.K > k_floor,
        margin_K=source.K - k_floor,
        cond_chiM=params.chi * M <= limit,
        margin_chiM=limit - params.chi * M,
        c_gn_source=c_gn_source,
        c1=absorption_c1(M, source.alpha, source.K, area),
    )
