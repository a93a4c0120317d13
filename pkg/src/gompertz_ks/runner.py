"""Single-run orchestration and on-disk artifacts.

A run directory holds::

    manifest.yaml         echoed configuration (defaults filled) + provenance
    diagnostics.csv       one row per recorded time
    theorem_report.json   hypothesis check (Gompertz source only)
    verdict.json          termination status, verdict and summary numbers
    failure.json          only when the run failed
"""

from __future__ import annotations

import functools
import json
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .analysis import GnEstimate, SearchBudget, TheoremReport, check_conditions, estimate_gn
from .config import SimConfig, render_config
from .diagnostics import BlowupSuspect, Bounded, TerminationStatus, classify
from .errors import ConfigError, NumericalFailure
from .kinetics import Gompertz
from .mesh import build_grid, integrate
from .stepper import SimResult, simulate

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_BLOWUP = 3

NUMERICAL_FAILURES = (TerminationStatus.POSITIVITY_LOSS, TerminationStatus.SOLVER_FAILURE)


@functools.lru_cache(maxsize=32)
def cached_gn_estimate(Lx: float, Ly: float, nx: int, ny: int, multistarts: int, ascent_iters: int, seed: int) -> GnEstimate:
    return estimate_gn(build_grid(Lx, Ly, nx, ny), SearchBudget(multistarts, ascent_iters), seed)


def gn_constant_for(cfg: SimConfig, override: Optional[float] = None) -> tuple[float, str]:
    """The constant to test the smallness condition with, and where it came from."""
    if override is not None:
        return float(override), "user"
    if cfg.gn_constant is not None:
        return cfg.gn_constant, "user"
    g, b = cfg.grid, cfg.gn_budget
    est = cached_gn_estimate(g.Lx, g.Ly, g.nx, g.ny, b.multistarts, b.ascent_iters, cfg.seed)
    return est.c_gn_lower, "estimated"


def theorem_report(cfg: SimConfig, u0: Optional[np.ndarray] = None, gn_override=None) -> Optional[TheoremReport]:
    if not isinstance(cfg.params.source, Gompertz):
        return None
    u0 = cfg.initial_u() if u0 is None else u0
    c_gn, origin = gn_constant_for(cfg, gn_override)
    return check_conditions(cfg.params, integrate(cfg.grid, u0), cfg.grid.area, c_gn, origin)


def provenance(cfg: SimConfig) -> dict:
    return {
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "seed": cfg.seed,
    }


@dataclass
class RunOutcome:
    result: SimResult
    verdict: object
    report: Optional[TheoremReport]
    mass0: float
    wall_s: float

    @property
    def status(self) -> TerminationStatus:
        return self.result.status

    def summary(self) -> dict:
        s = self.result.series
        verdict = self.verdict
        out = {
            "status": self.status.value,
            "verdict": verdict.label,
            "message": self.result.message,
            "steps": self.result.steps,
            "t_final": s[-1].t,
            "mass0": self.mass0,
            "sup_mass": float(s.column("mass").max()),
            "sup_F": float(s.column("F").max()),
            "sup_umax": float(s.column("u_max").max()),
            "wall_s": self.wall_s,
        }
        if isinstance(verdict, BlowupSuspect):
            out.update(reason=verdict.reason.value, t_event=verdict.t_event)
        elif isinstance(verdict, Bounded):
            out.update(sup_linf=verdict.sup_linf, F_ceiling=verdict.sup_F)
        else:
            out.update(note=verdict.note)
        return out


def execute(cfg: SimConfig, observer=None) -> RunOutcome:
    """Build initial data, simulate, classify. No file output."""
    start = time.perf_counter()
    u0 = cfg.initial_u()
    v0 = cfg.initial_v(u0)
    report = theorem_report(cfg, u0)
    result = simulate(cfg.grid, cfg.params, u0, cfg.control, cfg.solver, v0, cfg.overflow_factor, observer)
    verdict = classify(result.series, result.status, cfg.classifier, cfg.params.source)
    return RunOutcome(result, verdict, report, integrate(cfg.grid, u0), time.perf_counter() - start)


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_failure(out_dir: Optional[str], kind: str, message: str, exit_code: int, **extra) -> None:
    """Machine-readable failure record: always to stderr, and to the run dir when writable."""
    record = {"failure": kind, "message": message, "exit_code": exit_code, **extra}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    if out_dir:
        try:
            os.makedirs(out_dir, exist_ok=True)
            _write_json(os.path.join(out_dir, "failure.json"), record)
        except OSError:
            pass


def prepare_out_dir(out_dir: str) -> None:
    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, ".write_probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise ConfigError(f"output directory {out_dir} is not writable: {exc}", field="output") from exc


def write_run_artifacts(cfg: SimConfig, outcome: RunOutcome, out_dir: str) -> None:
    with open(os.path.join(out_dir, "manifest.yaml"), "w") as fh:
        fh.write(render_config(cfg, provenance(cfg)))
    outcome.result.series.to_csv(os.path.join(out_dir, "diagnostics.csv"))
    if outcome.report is not None:
        _write_json(os.path.join(out_dir, "theorem_report.json"), outcome.report.to_dict())
    _write_json(os.path.join(out_dir, "verdict.json"), outcome.summary())


def exit_code_for(outcome: RunOutcome, fail_on_blowup: bool) -> int:
    if outcome.status in NUMERICAL_FAILURES:
        return EXIT_NUMERICAL
    if fail_on_blowup and isinstance(outcome.verdict, BlowupSuspect):
        return EXIT_BLOWUP
    return EXIT_OK


def run_command(cfg: SimConfig, out_dir: Optional[str] = None, fail_on_blowup: bool = False) -> int:
    """Run one configuration and write its artifacts; returns the process exit code."""
    out_dir = out_dir or cfg.output_dir
    if not out_dir:
        write_failure(None, "config", "no output directory given", EXIT_CONFIG)
        return EXIT_CONFIG
    try:
        prepare_out_dir(out_dir)
    except ConfigError as exc:
        write_failure(None, "io", str(exc), EXIT_CONFIG)
        return EXIT_CONFIG
    try:
        outcome = execute(cfg)
    except ConfigError as exc:
        write_failure(out_dir, "config", str(exc), EXIT_CONFIG, field=exc.field)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        write_failure(out_dir, exc.kind, str(exc), EXIT_NUMERICAL)
        return EXIT_NUMERICAL
    write_run_artifacts(cfg, outcome, out_dir)
    code = exit_code_for(outcome, fail_on_blowup)
    if outcome.status in NUMERICAL_FAILURES:
        write_failure(out_dir, outcome.status.value, outcome.result.message, code)
    log.info("%s: %s, verdict %s", out_dir, outcome.status.value, outcome.verdict.label)
    return code
