"""Functionals monitored along trajectories, the mass envelope and the run classifier."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import astuple, dataclass
from typing import Iterable, Optional, Union

import numpy as np

from .errors import ConfigError
from .kinetics import Gompertz, Logistic, SourceKind
from .mesh import Grid, field_norms, gradient_energy, integrate

CSV_HEADER = ("t", "dt", "mass", "entropy", "grad_v_energy", "F", "u_max", "u_min", "u_l2", "v_max")


class TerminationStatus(str, enum.Enum):
    COMPLETED_HORIZON = "CompletedHorizon"
    DT_COLLAPSE = "DtCollapse"
    POSITIVITY_LOSS = "PositivityLoss"
    SOLVER_FAILURE = "SolverFailure"
    LINF_OVERFLOW = "LinfOverflow"

    def __str__(self):
        return self.value


def entropy(grid: Grid, u: np.ndarray) -> float:
    """``integral of u ln u`` with the convention ``0 ln 0 = 0``."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ConfigError("entropy requires u >= 0", field="u")
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(u > 0, u * np.log(np.where(u > 0, u, 1.0)), 0.0)
    return integrate(grid, dens)


def lyapunov_F(grid: Grid, u: np.ndarray, v: np.ndarray, chi: float, tau: int) -> float:
    """Entropy plus ``tau * (chi/2) * integral |grad v|^2``."""
    value = entropy(grid, u)
    if tau:
        value += tau * 0.5 * chi * gradient_energy(grid, v)
    return value


def mass_envelope(z0: float, alpha: float, K: float, area: float, t) -> float:
    """Closed-form solution of ``z' = alpha z ln(K*area/z)``, ``z(0) = z0``."""
    cap = K * area
    if z0 <= 0 or alpha <= 0 or cap <= 0:
        raise ConfigError("mass_envelope needs z0, alpha, K*area > 0")
    return cap * np.exp(math.log(z0 / cap) * np.exp(-alpha * np.asarray(t, dtype=float)))


def absorption_c1(M: float, alpha: float, K: float, area: float) -> float:
    """Explicit part of the absorption constant for the entropy functional.

    The remaining part comes from an interpolation inequality whose constant
    is not explicit, so only this piece is reported.
    """
    return M * (alpha * math.log(K) + 2) / (4 * alpha) + alpha * area * K / math.e


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    dt: float
    mass: float
    entropy: float
    grad_v_energy: float
    F: float
    u_max: float
    u_min: float
    u_l2: float
    v_max: float


def make_record(grid: Grid, u, v, t: float, dt: float, chi: float, tau: int) -> DiagnosticsRecord:
    u_max, u_min, u_l2 = field_norms(grid, u)
    ent = entropy(grid, u)
    gv = gradient_energy(grid, v)
    return DiagnosticsRecord(
        t=float(t),
        dt=float(dt),
        mass=integrate(grid, u),
        entropy=ent,
        grad_v_energy=gv,
        F=ent + tau * 0.5 * chi * gv,
        u_max=u_max,
        u_min=u_min,
        u_l2=u_l2,
        v_max=float(np.max(v)),
    )


class DiagnosticsSeries:
    """Ordered list of records with column access."""

    def __init__(self, records: Iterable[DiagnosticsRecord] = ()):
        self.records: list[DiagnosticsRecord] = list(records)

    def append(self, record: DiagnosticsRecord) -> None:
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __iter__(self):
        return iter(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for rec in self.records:
            # repr gives the shortest round-trip decimal for a float
            writer.writerow([repr(float(x)) for x in astuple(rec)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str) -> "DiagnosticsSeries":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ConfigError(f"unexpected diagnostics header {header}")
        return cls(DiagnosticsRecord(*map(float, row)) for row in reader if row)


@dataclass
class ClassifierConfig:
    bounded_factor: float = 10.0
    # relative growth of u_max over the last quarter above which a finished run is not called bounded
    terminal_growth_tol: float = 1e-3

    def __post_init__(self):
        if not self.bounded_factor > 1:
            raise ConfigError("bounded_factor must exceed 1", field="bounded_factor")
        if not self.terminal_growth_tol > 0:
            raise ConfigError("terminal_growth_tol must be positive", field="terminal_growth_tol")


@dataclass(frozen=True)
class Bounded:
    sup_linf: float
    sup_F: float
    label = "Bounded"


@dataclass(frozen=True)
class BlowupSuspect:
    reason: TerminationStatus
    t_event: float
    label = "BlowupSuspect"


@dataclass(frozen=True)
class Inconclusive:
    note: str
    label = "Inconclusive"


RunVerdict = Union[Bounded, BlowupSuspect, Inconclusive]


def reference_scale(source: Optional[SourceKind]) -> float:
    """Density scale of the kinetics: K for Gompertz, a/b for logistic, else 0."""
    if isinstance(source, Gompertz):
        return source.K
    if isinstance(source, Logistic) and source.a > 0:
        return source.a / source.b
    return 0.0


def terminal_log_growth(t: np.ndarray, u_max: np.ndarray) -> float:
    """Fitted growth of ``ln u_max`` across the last quarter of the series."""
    n = len(t)
    k = max(2, int(math.ceil(n / 4)))
    tt, yy = t[-k:], np.log(u_max[-k:])
    span = tt[-1] - tt[0]
    if span <= 0:
        return 0.0
    slope = np.polyfit(tt - tt[0], yy, 1)[0]
    return float(slope * span)


def classify(
    series: DiagnosticsSeries,
    status: TerminationStatus,
    thresholds: ClassifierConfig = ClassifierConfig(),
    source: Optional[SourceKind] = None,
) -> RunVerdict:
    if len(series) == 0:
        raise ConfigError("cannot classify an empty series")
    status = TerminationStatus(status)
    if status in (TerminationStatus.DT_COLLAPSE, TerminationStatus.LINF_OVERFLOW):
        return BlowupSuspect(status, series[-1].t)
    if status is not TerminationStatus.COMPLETED_HORIZON:
        return Inconclusive(f"run ended with {status.value}")

    t = series.column("t")
    u_max = series.column("u_max")
    F = series.column("F")
    growth = terminal_log_growth(t, u_max) if len(series) > 1 else 0.0
    if growth > math.log1p(thresholds.terminal_growth_tol):
        return Inconclusive(f"u_max still growing at horizon end (log-growth {growth:.3g})")
    scale = max(u_max[0], reference_scale(source))
    late = u_max[t >= t[0] + 0.5 * (t[-1] - t[0])]
    if late.max() > thresholds.bounded_factor * scale:
        return Inconclusive(f"late u_max {late.max():.6g} exceeds {thresholds.bounded_factor:g} x {scale:.6g}")
    return Bounded(sup_linf=float(u_max.max()), sup_F=float(F.max()))
