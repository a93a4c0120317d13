"""Kinetic source terms f(u) and their pointwise bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigError


def _require_finite(**values):
    for name, value in values.items():
        if not math.isfinite(value):
            raise ConfigError(f"{name} must be finite, got {value!r}", field=name)


@dataclass(frozen=True)
class Gompertz:
    alpha: float
    K: float

    def __post_init__(self):
        _require_finite(alpha=self.alpha, K=self.K)
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}", field="alpha")
        if self.K <= 0:
            raise ConfigError(f"K must be positive, got {self.K}", field="K")


@dataclass(frozen=True)
class Logistic:
    a: float
    b: float

    def __post_init__(self):
        _require_finite(a=self.a, b=self.b)
        if self.b <= 0:
            raise ConfigError(f"b must be positive, got {self.b}", field="b")


@dataclass(frozen=True)
class SubLogistic:
    a: float
    b: float

    def __post_init__(self):
        _require_finite(a=self.a, b=self.b)
        if self.b <= 0:
            raise ConfigError(f"b must be positive, got {self.b}", field="b")


@dataclass(frozen=True)
class NoSource:
    pass


SourceKind = Union[Gompertz, Logistic, SubLogistic, NoSource]


def source_eval(kind: SourceKind, s):
    """Evaluate f(s) for scalar or array ``s >= 0``.

    Gompertz and sub-logistic terms are continuously extended by 0 at s = 0.
    """
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ConfigError("source_eval requires finite s >= 0", field="s")
    with np.errstate(divide="ignore", invalid="ignore"):
        if isinstance(kind, Gompertz):
            out = kind.alpha * arr * (math.log(kind.K) - np.log(arr))
            out = np.where(arr > 0, out, 0.0)
        elif isinstance(kind, Logistic):
            out = kind.a * arr - kind.b * arr * arr
        elif isinstance(kind, SubLogistic):
            damping = kind.b * arr * arr / np.log(np.log(arr + math.e))
            out = kind.a * arr - np.where(arr > 0, damping, 0.0)
        elif isinstance(kind, NoSource):
            out = np.zeros_like(arr)
        else:
            raise ConfigError(f"unknown source kind {kind!r}")
    return float(out) if np.ndim(out) == 0 else out


def source_sup_bound(kind: SourceKind) -> float:
    """``sup_{s>=0} f(s)``; ``math.inf`` flags a source with no finite supremum."""
    if isinstance(kind, Gompertz):
        return kind.alpha * kind.K / math.e
    if isinstance(kind, Logistic):
        return kind.a**2 / (4 * kind.b) if kind.a > 0 else 0.0
    if isinstance(kind, NoSource):
        return 0.0
    if isinstance(kind, SubLogistic):
        return _numerical_sup(kind)
    raise ConfigError(f"unknown source kind {kind!r}")


def _numerical_sup(kind, lo=1e-12, hi=1e12, n=4001):
    s = np.logspace(math.log10(lo), math.log10(hi), n)
    f = source_eval(kind, s)
    i = int(np.argmax(f))
    if i == n - 1:
        return math.inf
    best = max(float(f[i]), 0.0)
    if i == 0:
        return best
    res = minimize_scalar(
        lambda x: -source_eval(kind, x),
        bounds=(s[i - 1], s[i + 1]),
        method="bounded",
        options={"xatol": 1e-14 * s[i + 1]},
    )
    return max(best, -float(res.fun))


def mass_cap(u0_mass: float, kind: SourceKind, area: float):
    """``max{u0_mass, K*area}`` for Gompertz; ``None`` for other kinds."""
    if not isinstance(kind, Gompertz):
        return None
    if u0_mass <= 0 or area <= 0:
        raise ConfigError("mass_cap needs positive mass and area")
    return max(float(u0_mass), kind.K * area)


def reaction_rate_bound(kind: SourceKind, u: np.ndarray) -> float:
    """Largest per-capita reaction rate ``|f(u)/u|`` over the field."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore"):
        if isinstance(kind, Gompertz):
            pos = u[u > 0]
            if pos.size == 0:
                return 0.0
            return kind.alpha * float(np.max(np.abs(math.log(kind.K) - np.log(pos))))
        if isinstance(kind, Logistic):
            return float(np.max(np.abs(kind.a - kind.b * u)))
        if isinstance(kind, SubLogistic):
            damping = np.where(u > 0, kind.b * u / np.log(np.log(u + math.e)), 0.0)
            return float(np.max(np.abs(kind.a - damping)))
    return 0.0


def reaction_loss_rate(kind: SourceKind, u: np.ndarray) -> np.ndarray:
    """Per-cell per-capita decay rate ``max(0, -f(u)/u)`` (zero where u = 0)."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(u > 0, -source_eval(kind, u) / np.where(u > 0, u, 1.0), 0.0)
    return np.maximum(rate, 0.0)
