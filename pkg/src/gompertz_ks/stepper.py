"""IMEX time integration of the Keller-Segel system with a kinetic source.

Diffusion is implicit; the chemotactic flux (donor-cell upwind, conservative)
and the reaction are explicit. For ``tau = 0`` the signal solves
``(I - Lap_h) v = u`` at every time level; for ``tau = 1`` it is advanced by
backward Euler.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .diagnostics import DiagnosticsSeries, TerminationStatus, make_record
from .errors import ConfigError, DtCollapse, NumericalFailure, PositivityLoss, SolverFailure
from .kinetics import Gompertz, NoSource, SourceKind, reaction_loss_rate, reaction_rate_bound, source_eval
from .linsolve import SolveSpec, solve_shifted_poisson
from .mesh import Grid, check_field, face_differences

log = logging.getLogger(__name__)

_TINY = 1e-300


@dataclass(frozen=True)
class ModelParams:
    chi: float
    tau: int
    source: SourceKind = NoSource()

    def __post_init__(self):
        if not (math.isfinite(self.chi) and self.chi > 0):
            raise ConfigError(f"chi must be positive and finite, got {self.chi}", field="chi")
        if self.tau not in (0, 1) or isinstance(self.tau, bool):
            raise ConfigError(f"tau must be 0 or 1, got {self.tau!r}", field="tau")


@dataclass(frozen=True)
class State:
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0


@dataclass(frozen=True)
class StepControl:
    t_end: float
    dt_init: float = 1e-3
    dt_min: float = 1e-10
    dt_max: float = 1e-2
    cfl_safety: float = 0.5
    record_dt: Optional[float] = None  # record on this time grid
    record_steps: Optional[int] = None  # or every n steps; neither -> every step

    def __post_init__(self):
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive", field="t_end")
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ConfigError("need 0 < dt_min <= dt_init <= dt_max", field="dt_init")
        if not (0 < self.cfl_safety <= 1):
            raise ConfigError("cfl_safety must lie in (0, 1]", field="cfl_safety")
        if self.record_dt is not None and not self.record_dt > 0:
            raise ConfigError("record_dt must be positive", field="record_dt")
        if self.record_steps is not None and self.record_steps < 1:
            raise ConfigError("record_steps must be >= 1", field="record_steps")


_MAX_DT_REFINE = 60


def _face_velocities(grid: Grid, v: np.ndarray, chi: float):
    dvx, dvy = face_differences(v)
    return chi * dvx / grid.hx, chi * dvy / grid.hy


def chemotactic_divergence(grid: Grid, u: np.ndarray, v: np.ndarray, chi: float) -> np.ndarray:
    """Upwind discretisation of ``-chi div(u grad v)``.

    The face flux is ``chi * (dv/h) * u_donor`` with the donor cell upstream of
    the face velocity; boundary fluxes vanish, so the cell sum telescopes to 0.
    """
    gx, gy = _face_velocities(grid, v, chi)
    fx = gx * np.where(gx > 0, u[:, :-1], u[:, 1:]) / grid.hx
    fy = gy * np.where(gy > 0, u[:-1, :], u[1:, :]) / grid.hy
    out = np.zeros_like(u, dtype=float)
    out[:, :-1] -= fx
    out[:, 1:] += fx
    out[:-1, :] -= fy
    out[1:, :] += fy
    return out


def outflow_rate(grid: Grid, v: np.ndarray, chi: float) -> np.ndarray:
    """Per-cell rate at which the upwind flux drains the cell's own density."""
    gx, gy = _face_velocities(grid, v, chi)
    rate = np.zeros(grid.shape)
    rate[:, :-1] += np.maximum(gx, 0) / grid.hx
    rate[:, 1:] += np.maximum(-gx, 0) / grid.hx
    rate[:-1, :] += np.maximum(gy, 0) / grid.hy
    rate[1:, :] += np.maximum(-gy, 0) / grid.hy
    return rate


def dt_bounds(state: State, params: ModelParams, grid: Grid) -> dict:
    """Raw explicit-part step limits before the safety factor and clamping.

    ``advection`` and ``reaction`` are the classical CFL-type limits;
    ``positivity`` is the exact per-cell limit under which the explicit update
    cannot produce a negative density, which for a cell draining through all
    four faces is tighter than the advective limit.
    """
    gx, gy = _face_velocities(grid, state.v, params.chi)
    slope = max(np.max(np.abs(gx), initial=0.0), np.max(np.abs(gy), initial=0.0))
    rate = reaction_rate_bound(params.source, state.u)
    loss = outflow_rate(grid, state.v, params.chi) + reaction_loss_rate(params.source, state.u)
    loss_max = float(np.max(loss))
    return {
        "diffusion": math.inf,  # diffusion is implicit
        "advection": grid.h_min / slope if slope > 0 else math.inf,
        "reaction": 0.5 / rate if rate > 0 else math.inf,
        "positivity": 1.0 / loss_max if loss_max > 0 else math.inf,
    }


def stable_dt(
    state: State, params: ModelParams, grid: Grid, control: StepControl, solver: SolveSpec = SolveSpec()
) -> float:
    """Largest admissible step, clamped to ``dt_max``.

    For ``tau = 1`` the chemotactic flux uses the signal after its own implicit
    update, so the limits are re-evaluated on that predicted signal and dt is
    shrunk until it satisfies them.
    """
    dt = min(control.cfl_safety * min(dt_bounds(state, params, grid).values()), control.dt_max)
    if params.tau == 1:
        for _ in range(_MAX_DT_REFINE):
            if dt < control.dt_min:
                break
            v_pred = _signal_update(grid, state, params, dt, solver)
            limit = control.cfl_safety * min(dt_bounds(State(state.u, v_pred, state.t), params, grid).values())
            if dt <= limit:
                break
            dt = min(limit, 0.5 * dt)
        else:
            raise DtCollapse(f"no consistent dt found near {dt:.3e}", t=state.t, dt=dt)
    if dt < control.dt_min:
        raise DtCollapse(f"stable dt {dt:.3e} below dt_min {control.dt_min:.3e}", t=state.t, dt=dt)
    return dt


def _solve(grid, rhs, solver, a, b, guess, what, t):
    try:
        return solve_shifted_poisson(grid, rhs, solver.with_coefficients(a, b), guess)
    except SolverFailure as exc:
        raise SolverFailure(f"{what} solve failed at t={t:.6g}: {exc}", t=t, **exc.context) from exc


def signal_from_density(grid: Grid, u: np.ndarray, solver: SolveSpec = SolveSpec(), guess=None) -> np.ndarray:
    """Elliptic signal ``(I - Lap_h) v = u``."""
    return _solve(grid, u, solver, 1.0, 1.0, guess, "elliptic", 0.0)


def _signal_update(grid, state: State, params: ModelParams, dt: float, solver: SolveSpec) -> np.ndarray:
    """Signal used by the chemotactic flux of a step of size ``dt``."""
    if params.tau == 0:
        # warm start: an already consistent v returns after zero CG iterations
        return _solve(grid, state.u, solver, 1.0, 1.0, state.v, "elliptic", state.t)
    return _solve(grid, state.v + dt * state.u, solver, 1.0 + dt, dt, state.v, "signal", state.t)


def step(state: State, params: ModelParams, grid: Grid, dt: float, solver: SolveSpec = SolveSpec()) -> State:
    """Advance one IMEX step of size ``dt``."""
    u, t = state.u, state.t
    v = _signal_update(grid, state, params, dt, solver)

    explicit = u + dt * (chemotactic_divergence(grid, u, v, params.chi) + source_eval(params.source, u))
    if np.min(explicit) < 0:
        raise PositivityLoss(f"explicit update went negative at t={t:.6g}", t=t, dt=dt)
    u_new = _solve(grid, explicit, solver, 1.0, dt, u, "diffusion", t)
    check_field(grid, u_new, "u")

    # the implicit solve is exact only to solver tolerance; entries within that
    # noise of zero are zeroed, anything below is a genuine loss of positivity
    noise = solver.rel_tol * float(np.max(np.abs(explicit)))
    u_min = float(np.min(u_new))
    if u_min < -noise:
        raise PositivityLoss(f"u_min = {u_min:.3e} at t={t + dt:.6g}", t=t + dt, dt=dt)
    if u_min < 0:
        u_new = np.maximum(u_new, 0.0)

    if params.tau == 0:
        v_new = _solve(grid, u_new, solver, 1.0, 1.0, v, "elliptic", t + dt)
    else:
        v_new = v
    if np.min(v_new) < -solver.rel_tol * float(np.max(np.abs(v_new))):
        raise PositivityLoss(f"v went negative at t={t + dt:.6g}", t=t + dt, dt=dt)
    return State(u=u_new, v=v_new, t=t + dt)


def initial_state(grid: Grid, params: ModelParams, u0, v0=None, solver: SolveSpec = SolveSpec()) -> State:
    """Build the t = 0 state; for ``tau = 0`` any ``v0`` is ignored."""
    u0 = check_field(grid, u0, "u0")
    if np.any(u0 < 0):
        raise ConfigError("u0 must be nonnegative", field="u0")
    if params.tau == 0:
        v = signal_from_density(grid, u0, solver)
    else:
        if v0 is None:
            raise ConfigError("tau = 1 needs an initial signal v0", field="v0")
        v = check_field(grid, v0, "v0")
        if np.any(v < 0):
            raise ConfigError("v0 must be nonnegative", field="v0")
    return State(u=u0.copy(), v=np.array(v, dtype=float), t=0.0)


@dataclass
class SimResult:
    series: DiagnosticsSeries
    status: TerminationStatus
    state: State
    steps: int
    message: str = ""


def overflow_threshold(u0: np.ndarray, source: SourceKind, factor: float) -> float:
    scale = float(np.max(u0))
    if isinstance(source, Gompertz):
        scale = max(scale, source.K)
    return factor * scale


def simulate(
    grid: Grid,
    params: ModelParams,
    u0,
    control: StepControl,
    solver: SolveSpec = SolveSpec(),
    v0=None,
    overflow_factor: float = 1e6,
    observer: Optional[Callable[[State], None]] = None,
) -> SimResult:
    """Run from t = 0 to ``control.t_end``; failures end the run with a status.

    ``observer`` is called with every recorded state.
    """
    state = initial_state(grid, params, u0, v0, solver)
    threshold = overflow_threshold(state.u, params.source, overflow_factor)
    series = DiagnosticsSeries()

    def record(s: State, dt: float):
        series.append(make_record(grid, s.u, s.v, s.t, dt, params.chi, params.tau))
        if observer is not None:
            observer(s)

    record(state, 0.0)
    t_end = control.t_end
    eps = 1e-12 * t_end
    next_record = control.record_dt if control.record_dt else None
    status = TerminationStatus.COMPLETED_HORIZON
    message = ""
    steps = 0
    last_dt = 0.0
    recorded = True
    while state.t < t_end - eps:
        try:
            dt = stable_dt(state, params, grid, control, solver)
            if steps == 0:
                dt = min(dt, control.dt_init)
            dt = min(dt, t_end - state.t)
            if next_record is not None:
                dt = min(dt, next_record - state.t)
            new = step(state, params, grid, dt, solver)
        except DtCollapse as exc:
            status, message = TerminationStatus.DT_COLLAPSE, str(exc)
            break
        except PositivityLoss as exc:
            status, message = TerminationStatus.POSITIVITY_LOSS, str(exc)
            break
        except SolverFailure as exc:
            status, message = TerminationStatus.SOLVER_FAILURE, str(exc)
            break
        except NumericalFailure as exc:
            status, message = TerminationStatus.SOLVER_FAILURE, f"non-finite values: {exc}"
            break
        steps += 1
        last_dt = dt
        if next_record is not None and new.t >= next_record - eps:
            new = replace(new, t=next_record) if abs(new.t - next_record) <= eps else new
            while next_record <= new.t + eps:
                next_record += control.record_dt
        state = new
        recorded = False
        if np.max(state.u) > threshold:
            status = TerminationStatus.LINF_OVERFLOW
            message = f"u_max {np.max(state.u):.6g} crossed {threshold:.6g} at t={state.t:.6g}"
            record(state, dt)
            recorded = True
            break
        if _due(control, steps, state.t, series[-1].t, eps):
            record(state, dt)
            recorded = True
    if not recorded:
        record(state, last_dt)
    if message:
        log.info("run ended: %s (%s)", status.value, message)
    return SimResult(series=series, status=status, state=state, steps=steps, message=message)


def _due(control: StepControl, steps: int, t: float, last_t: float, eps: float) -> bool:
    if t >= control.t_end - eps:
        return True
    if control.record_dt is not None:
        k_now = math.floor((t + eps) / control.record_dt)
        k_last = math.floor((last_t + eps) / control.record_dt)
        return k_now > k_last
    if control.record_steps is not None:
        return steps % control.record_steps == 0
    return True
