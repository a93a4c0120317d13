"""Cross-product parameter sweeps with resumable per-run directories.

Sweep document::

    base: run.yaml          # path (relative to the sweep file) or an inline run document
    axes:                   # ordered; cross product in this order, last axis fastest
      chi: [0.01, 1.0]
      mass0: [0.1, 10.0]
    max_runs: 10000
    jobs: 1

Axis names are dotted paths into the run document (``model.chi``) or one of
the aliases in ``AXIS_ALIASES``. ``mass0`` sets the Gaussian ``total_mass``
or, for uniform data, the value ``mass0 / area``; ``nx`` sets both
``grid.nx`` and ``grid.ny``.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .config import config_from_dict
from .errors import ConfigError, NumericalFailure
from .runner import (
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_OK,
    NUMERICAL_FAILURES,
    _write_json,
    execute,
    prepare_out_dir,
    write_run_artifacts,
)

SUMMARY_HEADER = (
    "run_id", "chi", "alpha", "K", "mass0", "nx", "cond_K", "cond_chiM",
    "verdict", "sup_mass", "sup_F", "sup_umax", "status", "wall_s",
)

AXIS_ALIASES = {
    "chi": ("model.chi",),
    "tau": ("model.tau",),
    "alpha": ("model.source.alpha",),
    "K": ("model.source.K",),
    "nx": ("grid.nx", "grid.ny"),
}


@dataclass
class SweepConfig:
    base: dict
    axes: list  # [(name, [values...]), ...]
    jobs: int = 1
    max_runs: int = 10_000
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self):
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1", field="jobs")
        for name, values in self.axes:
            if not isinstance(values, list) or not values:
                raise ConfigError(f"axis '{name}' needs a non-empty list of values", field=name)
        if self.size > self.max_runs:
            raise ConfigError(f"sweep has {self.size} runs, above max_runs={self.max_runs}", field="max_runs")

    @property
    def size(self) -> int:
        n = 1
        for _, values in self.axes:
            n *= len(values)
        return n

    def points(self) -> list:
        names = [name for name, _ in self.axes]
        return [dict(zip(names, combo)) for combo in itertools.product(*(v for _, v in self.axes))]


def parse_sweep(text: str, base_dir: str = ".") -> SweepConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"syntax error in sweep file at line {line}: {exc}", line=line) from exc
    if not isinstance(doc, dict):
        raise ConfigError("sweep document must be a mapping")
    extra = set(doc) - {"base", "axes", "jobs", "max_runs"}
    if extra:
        raise ConfigError(f"unknown sweep key(s) {sorted(extra)}", field=sorted(extra)[0])
    base = doc.get("base")
    run_base_dir = base_dir
    if isinstance(base, str):
        path = base if os.path.isabs(base) else os.path.join(base_dir, base)
        try:
            with open(path) as fh:
                base = yaml.safe_load(fh)
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot load base config {path}: {exc}", field="base") from exc
        run_base_dir = os.path.dirname(os.path.abspath(path))
    if not isinstance(base, dict):
        raise ConfigError("sweep needs a base run document", field="base")
    axes = doc.get("axes") or {}
    if not isinstance(axes, dict):
        raise ConfigError("axes must be a mapping of parameter -> values", field="axes")
    cfg = SweepConfig(
        base=base,
        axes=[(str(k), v) for k, v in axes.items()],
        jobs=int(doc.get("jobs", 1)),
        max_runs=int(doc.get("max_runs", 10_000)),
        base_dir=run_base_dir,
    )
    config_from_dict(copy.deepcopy(base), run_base_dir)  # fail early on a broken base
    return cfg


def load_sweep(path: str) -> SweepConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read sweep config {path}: {exc}") from exc
    return parse_sweep(text, os.path.dirname(os.path.abspath(path)))


def _set_path(doc: dict, path: str, value) -> None:
    keys = path.split(".")
    node = doc
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set '{path}': '{key}' is not a mapping", field=path)
    node[keys[-1]] = value


def apply_point(base: dict, point: dict) -> dict:
    doc = copy.deepcopy(base)
    for name, value in point.items():
        if name in ("mass0", "total_mass"):
            u0 = doc.get("initial", {}).get("u0", {})
            if u0.get("kind") == "uniform":
                g = doc.get("grid", {})
                u0["value"] = value / (g.get("Lx", 1.0) * g.get("Ly", 1.0))
            else:
                u0["total_mass"] = value
        else:
            for path in AXIS_ALIASES.get(name, (name,)):
                _set_path(doc, path, value)
    return doc


def run_id(doc: dict) -> str:
    """Stable directory name from the fully resolved run document."""
    blob = json.dumps(doc, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _run_point(doc: dict, base_dir: str, run_dir: str, rid: str) -> dict:
    row_path = os.path.join(run_dir, "row.json")
    if os.path.exists(row_path):
        with open(row_path) as fh:
            return json.load(fh)
    row = {key: None for key in SUMMARY_HEADER}
    row["run_id"] = rid
    start = time.perf_counter()
    try:
        prepare_out_dir(run_dir)
        cfg = config_from_dict(doc, base_dir)
        row.update(chi=cfg.params.chi, nx=cfg.grid.nx)
        src = cfg.params.source
        row.update(alpha=getattr(src, "alpha", None), K=getattr(src, "K", None))
        outcome = execute(cfg)
        write_run_artifacts(cfg, outcome, run_dir)
        summary = outcome.summary()
        row.update(
            mass0=outcome.mass0,
            verdict=summary["verdict"],
            sup_mass=summary["sup_mass"],
            sup_F=summary["sup_F"],
            sup_umax=summary["sup_umax"],
            status=summary["status"],
        )
        if outcome.report is not None:
            row.update(cond_K=outcome.report.cond_K, cond_chiM=outcome.report.cond_chiM)
        failed = outcome.status in NUMERICAL_FAILURES
        row["failure"] = "numerical" if failed else None
    except ConfigError as exc:
        row.update(verdict="Failed", status="ConfigError", failure="config", message=str(exc))
    except NumericalFailure as exc:
        row.update(verdict="Failed", status=type(exc).__name__, failure="numerical", message=str(exc))
    row["wall_s"] = time.perf_counter() - start
    if os.path.isdir(run_dir):
        _write_json(row_path, row)
    return row


@dataclass
class SweepOutcome:
    rows: list
    exit_code: int
    summary_csv: str


def summary_csv(rows: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for row in rows:
        writer.writerow([_fmt(row.get(key)) for key in SUMMARY_HEADER])
    return buf.getvalue()


def sweep(cfg: SweepConfig, out_root: str, jobs: Optional[int] = None) -> SweepOutcome:
    """Execute the cross product; rows come back in parameter-index order."""
    prepare_out_dir(out_root)
    jobs = cfg.jobs if jobs is None else jobs
    tasks = []
    for point in cfg.points():
        doc = apply_point(cfg.base, point)
        rid = run_id(doc)
        tasks.append((doc, cfg.base_dir, os.path.join(out_root, rid), rid))
    with open(os.path.join(out_root, "sweep_points.json"), "w") as fh:
        json.dump([{"run_id": t[3], **p} for t, p in zip(tasks, cfg.points())], fh, indent=2, default=repr)

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_point, *task) for task in tasks]
            rows = [f.result() for f in futures]
    else:
        rows = [_run_point(*task) for task in tasks]

    text = summary_csv(rows)
    with open(os.path.join(out_root, "summary.csv"), "w", newline="") as fh:
        fh.write(text)
    failures = [r.get("failure") for r in rows]
    if rows and all(failures):
        code = EXIT_CONFIG if all(f == "config" for f in failures) else EXIT_NUMERICAL
    else:
        code = EXIT_OK
    return SweepOutcome(rows=rows, exit_code=code, summary_csv=text)
