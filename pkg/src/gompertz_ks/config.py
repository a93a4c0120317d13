"""Run configuration: YAML schema, validation, defaults and round-trip rendering.

Document layout (every section except ``grid``, ``model`` and ``initial.u0``
may be omitted)::

    grid:   {Lx: 1.0, Ly: 1.0, nx: 64, ny: 64}
    model:
      chi: 0.5
      tau: 0                       # 0 or 1
      source: {kind: gompertz, alpha: 1.0, K: 1.0}
                                   # kind: gompertz | logistic | sublogistic | none
                                   # logistic/sublogistic take a, b
    initial:
      u0: {kind: gaussian, center: [0.5, 0.5], width: 0.1, total_mass: 1.0, floor_rel: 1.0e-8}
          # or {kind: uniform, value: c}
          #    {kind: sum_of_gaussians, bumps: [{center, width, total_mass}, ...], floor_rel}
          #    {kind: file, path: u0.npy}    (.npy or whitespace text, shape ny x nx)
      v0: {kind: uniform, value: 0.0}       # tau = 1 only; kind may also be "elliptic"
    time:   {t_end, dt_init, dt_min, dt_max, cfl_safety, record_dt, record_steps}
    solver: {rel_tol, max_iter, preconditioner}
    classifier: {bounded_factor, terminal_growth_tol, overflow_factor}
    analysis: {gn_constant: null, gn_multistarts: 12, gn_ascent_iters: 200}
    output: {dir: null}
    seed: 0

A rendered manifest may carry an extra ``provenance`` mapping, which is
ignored on parsing.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import yaml

from .analysis import SearchBudget
from .diagnostics import ClassifierConfig
from .errors import ConfigError
from .kinetics import Gompertz, Logistic, NoSource, SubLogistic
from .linsolve import SolveSpec
from .mesh import Grid, integrate
from .stepper import ModelParams, StepControl, signal_from_density


@dataclass(frozen=True)
class Uniform:
    value: float


@dataclass(frozen=True)
class Gaussian:
    center: tuple
    width: float
    total_mass: float
    floor_rel: float = 1e-8


@dataclass(frozen=True)
class SumOfGaussians:
    bumps: tuple
    floor_rel: float = 1e-8


@dataclass(frozen=True)
class FromFile:
    path: str


@dataclass(frozen=True)
class Elliptic:
    """Signal from ``(I - Lap_h) v0 = u0``."""


InitialSpec = Union[Uniform, Gaussian, SumOfGaussians, FromFile, Elliptic]


@dataclass
class SimConfig:
    grid: Grid
    params: ModelParams
    u0: InitialSpec
    control: StepControl
    v0: Optional[InitialSpec] = None
    solver: SolveSpec = SolveSpec()
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    overflow_factor: float = 1e6
    gn_constant: Optional[float] = None
    gn_budget: SearchBudget = SearchBudget()
    output_dir: Optional[str] = None
    seed: int = 0
    base_dir: str = field(default=".", compare=False, repr=False)

    def initial_u(self) -> np.ndarray:
        return build_initial(self.grid, self.u0, self.base_dir)

    def initial_v(self, u0: Optional[np.ndarray] = None) -> Optional[np.ndarray]:
        if self.params.tau == 0 or self.v0 is None:
            return None
        if isinstance(self.v0, Elliptic):
            u0 = self.initial_u() if u0 is None else u0
            return signal_from_density(self.grid, u0, self.solver)
        return build_initial(self.grid, self.v0, self.base_dir)


def _bump(grid: Grid, g: Gaussian) -> np.ndarray:
    cx, cy = g.center
    shape = grid.sample(lambda X, Y: np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * g.width**2)))
    mass = integrate(grid, shape)
    if not mass > 0:
        raise ConfigError("Gaussian bump has no mass on this grid", field="width")
    return g.total_mass * shape / mass


def _floored(grid: Grid, u: np.ndarray, floor_rel: float) -> np.ndarray:
    """Add ``floor_rel * peak`` everywhere and rescale back to the original mass."""
    mass = integrate(grid, u)
    u = u + floor_rel * float(np.max(u))
    return u * (mass / integrate(grid, u))


def build_initial(grid: Grid, spec: InitialSpec, base_dir: str = ".") -> np.ndarray:
    if isinstance(spec, Uniform):
        return grid.full(spec.value)
    if isinstance(spec, Gaussian):
        return _floored(grid, _bump(grid, spec), spec.floor_rel)
    if isinstance(spec, SumOfGaussians):
        total = sum(_bump(grid, g) for g in spec.bumps)
        return _floored(grid, total, spec.floor_rel)
    if isinstance(spec, FromFile):
        path = spec.path if os.path.isabs(spec.path) else os.path.join(base_dir, spec.path)
        try:
            data = np.load(path) if path.endswith(".npy") else np.loadtxt(path)
        except OSError as exc:
            raise ConfigError(f"cannot read initial data {path}: {exc}", field="path") from exc
        data = np.asarray(data, dtype=float)
        if data.shape != grid.shape:
            raise ConfigError(f"initial data {path} has shape {data.shape}, expected {grid.shape}", field="path")
        return data
    raise ConfigError(f"initial spec {spec!r} cannot be built directly")


# ---------------------------------------------------------------- parsing


def _section(doc, key, required=False):
    value = doc.get(key)
    if value is None:
        if required:
            raise ConfigError(f"missing required section '{key}'", field=key)
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"section '{key}' must be a mapping", field=key)
    return value


def _check_keys(section: dict, allowed, where: str):
    extra = set(section) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) {sorted(extra)} in {where}", field=sorted(extra)[0])


def _num(section, key, default=None, required=False):
    if key not in section or section[key] is None:
        if required:
            raise ConfigError(f"missing required key '{key}'", field=key)
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {value!r}", field=key)
    if not math.isfinite(value):
        raise ConfigError(f"'{key}' must be finite", field=key)
    return float(value)


def _int(section, key, default=None, required=False):
    value = _num(section, key, default, required)
    if value is None:
        return None
    if value != int(value):
        raise ConfigError(f"'{key}' must be an integer, got {value!r}", field=key)
    return int(value)


def _parse_source(doc) -> object:
    kind = str(doc.get("kind", "none")).lower()
    if kind == "gompertz":
        _check_keys(doc, ("kind", "alpha", "K"), "model.source")
        alpha, K = _num(doc, "alpha", required=True), _num(doc, "K", required=True)
        if K <= 0:
            raise ConfigError(f"K must be positive, got {K}", field="K")
        if alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {alpha}", field="alpha")
        return Gompertz(alpha, K)
    if kind in ("logistic", "sublogistic"):
        _check_keys(doc, ("kind", "a", "b"), "model.source")
        cls = Logistic if kind == "logistic" else SubLogistic
        return cls(_num(doc, "a", required=True), _num(doc, "b", required=True))
    if kind == "none":
        _check_keys(doc, ("kind",), "model.source")
        return NoSource()
    raise ConfigError(f"unknown source kind '{kind}'", field="source")


def _parse_gaussian(doc, where) -> Gaussian:
    _check_keys(doc, ("kind", "center", "width", "total_mass", "floor_rel"), where)
    center = doc.get("center")
    if not (isinstance(center, (list, tuple)) and len(center) == 2):
        raise ConfigError(f"{where}.center must be a pair [x, y]", field="center")
    width = _num(doc, "width", required=True)
    mass = _num(doc, "total_mass", required=True)
    if width <= 0:
        raise ConfigError("Gaussian width must be positive", field="width")
    if mass <= 0:
        raise ConfigError("Gaussian total_mass must be positive", field="total_mass")
    floor_rel = _num(doc, "floor_rel", 1e-8)
    if floor_rel <= 0:
        raise ConfigError("floor_rel must be positive so that u0 > 0", field="floor_rel")
    return Gaussian((float(center[0]), float(center[1])), width, mass, floor_rel)


def _parse_initial(doc, where, allow_elliptic=False):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a mapping", field=where)
    kind = str(doc.get("kind", "")).lower()
    if kind == "uniform":
        _check_keys(doc, ("kind", "value"), where)
        return Uniform(_num(doc, "value", required=True))
    if kind == "gaussian":
        return _parse_gaussian(doc, where)
    if kind == "sum_of_gaussians":
        _check_keys(doc, ("kind", "bumps", "floor_rel"), where)
        bumps = doc.get("bumps")
        if not isinstance(bumps, list) or not bumps:
            raise ConfigError(f"{where}.bumps must be a non-empty list", field="bumps")
        floor_rel = _num(doc, "floor_rel", 1e-8)
        if floor_rel <= 0:
            raise ConfigError("floor_rel must be positive so that u0 > 0", field="floor_rel")
        return SumOfGaussians(tuple(_parse_gaussian(b, f"{where}.bumps") for b in bumps), floor_rel)
    if kind == "file":
        _check_keys(doc, ("kind", "path"), where)
        if not isinstance(doc.get("path"), str):
            raise ConfigError(f"{where}.path must be a string", field="path")
        return FromFile(doc["path"])
    if kind == "elliptic" and allow_elliptic:
        _check_keys(doc, ("kind",), where)
        return Elliptic()
    raise ConfigError(f"unknown initial-data kind '{kind}' in {where}", field=where)


def config_from_dict(doc: dict, base_dir: str = ".") -> SimConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration document must be a mapping")
    _check_keys(doc, ("grid", "model", "initial", "time", "solver", "classifier", "analysis", "output", "seed", "provenance"), "document")

    g = _section(doc, "grid", required=True)
    _check_keys(g, ("Lx", "Ly", "nx", "ny"), "grid")
    grid = Grid(_num(g, "Lx", 1.0), _num(g, "Ly", 1.0), _int(g, "nx", required=True), _int(g, "ny", required=True))

    m = _section(doc, "model", required=True)
    _check_keys(m, ("chi", "tau", "source"), "model")
    tau = m.get("tau", 0)
    if isinstance(tau, bool) or tau not in (0, 1):
        raise ConfigError(f"tau must be 0 or 1, got {tau!r}", field="tau")
    source = _parse_source(_section(m, "source") or {"kind": "none"})
    params = ModelParams(_num(m, "chi", required=True), int(tau), source)

    ini = _section(doc, "initial", required=True)
    _check_keys(ini, ("u0", "v0"), "initial")
    if "u0" not in ini:
        raise ConfigError("missing initial.u0", field="u0")
    u0 = _parse_initial(ini["u0"], "initial.u0")
    if isinstance(u0, Uniform) and not u0.value > 0:
        raise ConfigError(f"u0 must be strictly positive, got uniform value {u0.value}", field="u0")
    v0 = None
    if ini.get("v0") is not None:
        if params.tau == 0:
            warnings.warn("initial.v0 is ignored for tau = 0; v is solved from u0", stacklevel=2)
        else:
            v0 = _parse_initial(ini["v0"], "initial.v0", allow_elliptic=True)
            if isinstance(v0, Uniform) and v0.value < 0:
                raise ConfigError("v0 must be nonnegative", field="v0")
    elif params.tau == 1:
        raise ConfigError("tau = 1 requires initial.v0", field="v0")

    t = _section(doc, "time", required=True)
    _check_keys(t, ("t_end", "dt_init", "dt_min", "dt_max", "cfl_safety", "record_dt", "record_steps"), "time")
    control = StepControl(
        t_end=_num(t, "t_end", required=True),
        dt_init=_num(t, "dt_init", 1e-3),
        dt_min=_num(t, "dt_min", 1e-10),
        dt_max=_num(t, "dt_max", 1e-2),
        cfl_safety=_num(t, "cfl_safety", 0.5),
        record_dt=_num(t, "record_dt"),
        record_steps=_int(t, "record_steps"),
    )

    s = _section(doc, "solver")
    _check_keys(s, ("rel_tol", "max_iter", "preconditioner"), "solver")
    solver = SolveSpec(
        rel_tol=_num(s, "rel_tol", 1e-10),
        max_iter=_int(s, "max_iter"),
        preconditioner=str(s.get("preconditioner", "dct")),
    )

    c = _section(doc, "classifier")
    _check_keys(c, ("bounded_factor", "terminal_growth_tol", "overflow_factor"), "classifier")
    classifier = ClassifierConfig(_num(c, "bounded_factor", 10.0), _num(c, "terminal_growth_tol", 1e-3))
    overflow = _num(c, "overflow_factor", 1e6)
    if overflow <= 1:
        raise ConfigError("overflow_factor must exceed 1", field="overflow_factor")

    a = _section(doc, "analysis")
    _check_keys(a, ("gn_constant", "gn_multistarts", "gn_ascent_iters"), "analysis")
    gn_constant = _num(a, "gn_constant")
    if gn_constant is not None and gn_constant <= 0:
        raise ConfigError("gn_constant must be positive", field="gn_constant")
    budget = SearchBudget(_int(a, "gn_multistarts", 12), _int(a, "gn_ascent_iters", 200))

    o = _section(doc, "output")
    _check_keys(o, ("dir",), "output")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}", field="seed")

    cfg = SimConfig(
        grid=grid,
        params=params,
        u0=u0,
        v0=v0,
        control=control,
        solver=solver,
        classifier=classifier,
        overflow_factor=overflow,
        gn_constant=gn_constant,
        gn_budget=budget,
        output_dir=o.get("dir"),
        seed=seed,
        base_dir=base_dir,
    )
    if isinstance(u0, FromFile):
        data = cfg.initial_u()
        if not np.all(data > 0):
            raise ConfigError("u0 read from file must be strictly positive", field="u0")
    return cfg


def parse_config(text: str, base_dir: str = ".") -> SimConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        where = f" at line {line}" if line else ""
        raise ConfigError(f"syntax error{where}: {getattr(exc, 'problem', exc)}", line=line) from exc
    return config_from_dict(doc, base_dir)


def load_config(path: str) -> SimConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------- rendering


def _source_dict(source) -> dict:
    if isinstance(source, Gompertz):
        return {"kind": "gompertz", "alpha": source.alpha, "K": source.K}
    if isinstance(source, Logistic):
        return {"kind": "logistic", "a": source.a, "b": source.b}
    if isinstance(source, SubLogistic):
        return {"kind": "sublogistic", "a": source.a, "b": source.b}
    return {"kind": "none"}


def _gaussian_dict(g: Gaussian, with_kind=True) -> dict:
    out = {"kind": "gaussian"} if with_kind else {}
    out.update(center=[g.center[0], g.center[1]], width=g.width, total_mass=g.total_mass)
    return out


def _initial_dict(spec) -> dict:
    if isinstance(spec, Uniform):
        return {"kind": "uniform", "value": spec.value}
    if isinstance(spec, Gaussian):
        return {**_gaussian_dict(spec), "floor_rel": spec.floor_rel}
    if isinstance(spec, SumOfGaussians):
        return {
            "kind": "sum_of_gaussians",
            "bumps": [_gaussian_dict(b, with_kind=False) for b in spec.bumps],
            "floor_rel": spec.floor_rel,
        }
    if isinstance(spec, FromFile):
        return {"kind": "file", "path": spec.path}
    return {"kind": "elliptic"}


def config_to_dict(cfg: SimConfig) -> dict:
    """Full document with every default made explicit."""
    ctl = cfg.control
    initial = {"u0": _initial_dict(cfg.u0)}
    if cfg.v0 is not None:
        initial["v0"] = _initial_dict(cfg.v0)
    return {
        "grid": {"Lx": cfg.grid.Lx, "Ly": cfg.grid.Ly, "nx": cfg.grid.nx, "ny": cfg.grid.ny},
        "model": {"chi": cfg.params.chi, "tau": cfg.params.tau, "source": _source_dict(cfg.params.source)},
        "initial": initial,
        "time": {
            "t_end": ctl.t_end,
            "dt_init": ctl.dt_init,
            "dt_min": ctl.dt_min,
            "dt_max": ctl.dt_max,
            "cfl_safety": ctl.cfl_safety,
            "record_dt": ctl.record_dt,
            "record_steps": ctl.record_steps,
        },
        "solver": {
            "rel_tol": cfg.solver.rel_tol,
            "max_iter": cfg.solver.max_iter,
            "preconditioner": cfg.solver.preconditioner,
        },
        "classifier": {
            "bounded_factor": cfg.classifier.bounded_factor,
            "terminal_growth_tol": cfg.classifier.terminal_growth_tol,
            "overflow_factor": cfg.overflow_factor,
        },
        "analysis": {
            "gn_constant": cfg.gn_constant,
            "gn_multistarts": cfg.gn_budget.multistarts,
            "gn_ascent_iters": cfg.gn_budget.ascent_iters,
        },
        "output": {"dir": cfg.output_dir},
        "seed": cfg.seed,
    }


def render_config(cfg: SimConfig, provenance: Optional[dict] = None) -> str:
    doc = config_to_dict(cfg)
    if provenance:
        doc["provenance"] = provenance
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)
