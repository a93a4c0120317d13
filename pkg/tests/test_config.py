import os
import warnings

import numpy as np
import pytest

from gompertz_ks.config import (
    Elliptic,
    FromFile,
    Gaussian,
    Uniform,
    build_initial,
    config_to_dict,
    load_config,
    parse_config,
    render_config,
)
from gompertz_ks.errors import ConfigError
from gompertz_ks.kinetics import Gompertz, NoSource
from gompertz_ks.mesh import integrate

MINIMAL = """
grid: {nx: 8, ny: 6}
model: {chi: 0.5}
initial:
  u0: {kind: uniform, value: 2.0}
time: {t_end: 1.0}
"""

FULL = """
grid: {Lx: 2.0, Ly: 1.0, nx: 16, ny: 8}
model:
  chi: 0.3
  tau: 1
  source: {kind: gompertz, alpha: 1.5, K: 2.0}
initial:
  u0: {kind: gaussian, center: [1.0, 0.5], width: 0.2, total_mass: 0.7}
  v0: {kind: elliptic}
time: {t_end: 2.0, dt_max: 0.05, record_dt: 0.5}
classifier: {bounded_factor: 20}
analysis: {gn_constant: 1.1}
seed: 4
"""

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def test_minimal_document_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert (cfg.grid.Lx, cfg.grid.Ly, cfg.grid.nx, cfg.grid.ny) == (1.0, 1.0, 8, 6)
    assert cfg.params.tau == 0 and cfg.params.source == NoSource()
    assert cfg.u0 == Uniform(2.0) and cfg.v0 is None
    assert cfg.control.dt_max == 1e-2 and cfg.control.record_dt is None
    assert cfg.solver.preconditioner == "dct"
    assert cfg.overflow_factor == 1e6 and cfg.gn_constant is None and cfg.seed == 0
    np.testing.assert_array_equal(cfg.initial_u(), 2.0)
    assert cfg.initial_v() is None


def test_full_document():
    cfg = parse_config(FULL)
    assert cfg.params.source == Gompertz(1.5, 2.0)
    assert isinstance(cfg.u0, Gaussian) and cfg.v0 == Elliptic()
    u0 = cfg.initial_u()
    assert integrate(cfg.grid, u0) == pytest.approx(0.7, rel=1e-13)
    assert np.all(u0 > 0)
    v0 = cfg.initial_v(u0)
    assert integrate(cfg.grid, v0) == pytest.approx(0.7, rel=1e-12)


@pytest.mark.parametrize(
    "edit, field",
    [
        (("model: {chi: 0.5}", "model: {chi: 0.5, tau: 2}"), "tau"),
        (("model: {chi: 0.5}", "model: {chi: 0.5, source: {kind: gompertz, alpha: 1, K: 0}}"), "K"),
        (("model: {chi: 0.5}", "model: {chi: 0.5, source: {kind: gompertz, alpha: -1, K: 1}}"), "alpha"),
        (("model: {chi: 0.5}", "model: {chi: 0.5, tau: 1}"), "v0"),
        (("value: 2.0", "value: 0.0"), "u0"),
        (("value: 2.0", "value: -1.0"), "u0"),
        (("model: {chi: 0.5}", "model: {chi: 0.5, bogus: 1}"), "bogus"),
        (("{nx: 8, ny: 6}", "{nx: 2, ny: 6}"), None),
    ],
)
def test_invalid_documents_name_the_field(edit, field):
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL.replace(*edit))
    if field is not None:
        assert info.value.field == field
        assert field in str(info.value)


def test_syntax_error_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config("grid: {nx: 8, ny: 6}\nmodel: [chi: 0.5\ninitial: {}\n")
    assert info.value.line is not None and "line" in str(info.value)


def test_v0_ignored_for_parabolic_elliptic():
    text = MINIMAL.replace("u0: {kind: uniform, value: 2.0}", "u0: {kind: uniform, value: 2.0}\n  v0: {kind: uniform, value: 1.0}")
    with pytest.warns(UserWarning, match="ignored"):
        cfg = parse_config(text)
    assert cfg.v0 is None


@pytest.mark.parametrize("text", [MINIMAL, FULL])
def test_manifest_round_trip(text):
    cfg = parse_config(text)
    rendered = render_config(cfg, {"package_version": "x"})
    assert parse_config(rendered) == cfg
    assert config_to_dict(parse_config(rendered)) == config_to_dict(cfg)


@pytest.mark.parametrize("name", sorted(f for f in os.listdir(CONFIG_DIR) if f.endswith(".yaml") and not f.startswith("sweep")))
def test_shipped_configs_parse(name):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        cfg = load_config(os.path.join(CONFIG_DIR, name))
    assert np.all(cfg.initial_u() > 0)


def test_initial_from_file(tmp_path):
    data = np.arange(1, 49, dtype=float).reshape(6, 8)
    np.save(tmp_path / "u0.npy", data)
    np.savetxt(tmp_path / "u0.txt", data)
    for fname in ("u0.npy", "u0.txt"):
        (tmp_path / "run.yaml").write_text(MINIMAL.replace("{kind: uniform, value: 2.0}", f"{{kind: file, path: {fname}}}"))
        cfg = load_config(str(tmp_path / "run.yaml"))
        assert cfg.u0 == FromFile(fname)
        np.testing.assert_array_equal(cfg.initial_u(), data)
    np.save(tmp_path / "bad.npy", np.ones((3, 3)))
    (tmp_path / "run.yaml").write_text(MINIMAL.replace("{kind: uniform, value: 2.0}", "{kind: file, path: bad.npy}"))
    with pytest.raises(ConfigError, match="shape"):
        load_config(str(tmp_path / "run.yaml"))


def test_gaussian_floor_keeps_mass_and_positivity(unit_grid):
    u = build_initial(unit_grid, Gaussian((0.1, 0.1), 0.02, 3.0, floor_rel=1e-6))
    assert integrate(unit_grid, u) == pytest.approx(3.0, rel=1e-14)
    assert u.min() > 0
    assert u.min() / u.max() == pytest.approx(1e-6, rel=1e-2)
