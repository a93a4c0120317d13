import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gompertz_ks.diagnostics import TerminationStatus
from gompertz_ks.errors import ConfigError, DtCollapse, PositivityLoss
from gompertz_ks.kinetics import Gompertz, Logistic, NoSource, SubLogistic, source_eval
from gompertz_ks.mesh import build_grid, integrate
from gompertz_ks.stepper import (
    ModelParams,
    State,
    StepControl,
    chemotactic_divergence,
    dt_bounds,
    initial_state,
    simulate,
    stable_dt,
    step,
)

from .oracles import gompertz_rk4, loop_upwind_divergence


def bump(g, x0=0.4, y0=0.55, w=0.1, amp=5.0, base=0.5):
    return g.sample(lambda x, y: base + amp * np.exp(-((x - x0) ** 2 + (y - y0) ** 2) / (2 * w * w)))


def test_model_params_validation():
    with pytest.raises(ConfigError, match="tau"):
        ModelParams(1.0, 2)
    with pytest.raises(ConfigError, match="chi"):
        ModelParams(0.0, 0)


def test_divergence_vanishes_for_flat_signal(rect_grid, rng):
    u = rng.random(rect_grid.shape)
    assert not np.any(chemotactic_divergence(rect_grid, u, rect_grid.full(3.0), 2.0))


def test_divergence_is_conservative_and_matches_loop_oracle(rect_grid, rng):
    u, v = rng.random((2, *rect_grid.shape))
    d = chemotactic_divergence(rect_grid, u, v, 1.7)
    assert integrate(rect_grid, d) == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(d, loop_upwind_divergence(u, v, 1.7, rect_grid.hx, rect_grid.hy), rtol=1e-12, atol=1e-12)


def test_divergence_reduces_to_minus_chi_laplacian():
    for n in (16, 64):
        g = build_grid(1, 1, n, n)
        d = chemotactic_divergence(g, g.full(1.0), g.sample(lambda x, y: x**2), 3.0)
        np.testing.assert_allclose(d[:, 1:-1], -6.0, rtol=1e-9)


def test_stable_dt_examples():
    g = build_grid(1, 1, 10, 10)
    ctl = StepControl(t_end=1.0, dt_init=1e-3, dt_max=0.05, cfl_safety=0.9)
    flat = State(g.full(2.0), g.full(1.0))
    assert stable_dt(flat, ModelParams(1.0, 0, NoSource()), g, ctl) == 0.05

    u = g.full(1.0)
    u[0, 0], u[5, 5] = math.exp(-1), math.exp(1)
    bounds = dt_bounds(State(u, g.full(1.0)), ModelParams(1.0, 0, Gompertz(1.0, 1.0)), g)
    assert bounds["reaction"] == pytest.approx(0.5, rel=1e-14)

    ramp = g.sample(lambda x, y: 10 * x)
    bounds = dt_bounds(State(g.full(1.0), ramp), ModelParams(1.0, 0, NoSource()), g)
    assert bounds["advection"] == pytest.approx(0.01, rel=1e-12)
    assert bounds["diffusion"] == math.inf


def test_stable_dt_collapse_raises():
    g = build_grid(1, 1, 10, 10)
    ctl = StepControl(t_end=1.0, dt_init=1e-2, dt_min=1e-2, dt_max=1e-2)
    state = State(g.full(1.0), g.sample(lambda x, y: 1e4 * x))
    with pytest.raises(DtCollapse):
        stable_dt(state, ModelParams(1.0, 0, NoSource()), g, ctl)


@pytest.mark.parametrize("tau", [0, 1])
def test_homogeneous_steady_state_is_fixed(tau):
    g = build_grid(1, 1, 12, 12)
    K = 2.5
    params = ModelParams(1.3, tau, Gompertz(0.7, K))
    state = initial_state(g, params, g.full(K), g.full(K))
    np.testing.assert_allclose(state.v, K, rtol=1e-15)
    for _ in range(20):
        state = step(state, params, g, 0.01)
    np.testing.assert_allclose(state.u, K, rtol=1e-12)
    np.testing.assert_allclose(state.v, K, rtol=1e-12)


@pytest.mark.parametrize("tau", [0, 1])
def test_uniform_state_takes_one_euler_reaction_step(tau):
    g = build_grid(1, 1, 8, 8)
    c, alpha, K, dt = 0.3, 1.5, 2.0, 0.01
    params = ModelParams(4.0, tau, Gompertz(alpha, K))
    state = initial_state(g, params, g.full(c), g.full(0.7))
    new = step(state, params, g, dt)
    np.testing.assert_allclose(new.u, c * (1 + dt * alpha * math.log(K / c)), rtol=1e-14)


@pytest.mark.parametrize("tau", [0, 1])
@pytest.mark.parametrize("source", [NoSource(), Gompertz(1.0, 2.0), Logistic(1.0, 0.5), SubLogistic(2.0, 0.5)])
def test_exact_mass_balance(tau, source):
    g = build_grid(1, 1.2, 20, 24)
    params = ModelParams(2.0, tau, source)
    state = initial_state(g, params, bump(g), bump(g, 0.6, 0.3, amp=1.0))
    ctl = StepControl(t_end=1.0, dt_max=0.01)
    for _ in range(30):
        dt = stable_dt(state, params, g, ctl)
        new = step(state, params, g, dt)
        expected = integrate(g, state.u) + dt * integrate(g, source_eval(source, state.u))
        assert integrate(g, new.u) == pytest.approx(expected, rel=1e-13)
        state = new


@pytest.mark.parametrize("tau", [0, 1])
def test_reflection_symmetry_is_preserved(tau):
    g = build_grid(1, 1, 16, 16)
    u0 = bump(g, 0.5, 0.5, 0.12, amp=8.0)
    params = ModelParams(2.0, tau, Gompertz(1.0, 1.0))
    state = initial_state(g, params, u0, u0.copy())
    ctl = StepControl(t_end=1.0, dt_max=0.01)
    for _ in range(25):
        state = step(state, params, g, stable_dt(state, params, g, ctl))
    for flip in (lambda a: a[:, ::-1], lambda a: a[::-1, :], lambda a: a.T):
        np.testing.assert_allclose(flip(state.u), state.u, rtol=1e-10)
        np.testing.assert_allclose(flip(state.v), state.v, rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    chi=st.floats(0.01, 20.0),
    tau=st.sampled_from([0, 1]),
    cfl=st.floats(0.05, 1.0),
    alpha=st.floats(0.1, 5.0),
    K=st.floats(0.1, 10.0),
)
def test_positivity_under_stable_dt(seed, chi, tau, cfl, alpha, K):
    r = np.random.default_rng(seed)
    g = build_grid(1, 1, 10, 12)
    u0 = r.random(g.shape) ** 4 * 20 + 1e-6
    params = ModelParams(chi, tau, Gompertz(alpha, K))
    state = initial_state(g, params, u0, r.random(g.shape) * 5)
    ctl = StepControl(t_end=1.0, dt_min=1e-14, dt_max=0.05, cfl_safety=cfl)
    for _ in range(15):
        state = step(state, params, g, stable_dt(state, params, g, ctl))
        assert np.min(state.u) >= 0
        assert np.min(state.v) >= 0


def test_simulate_uniform_follows_gompertz_ode():
    g = build_grid(1, 1, 6, 6)
    c, alpha, K = 0.2, 1.0, 1.5
    ctl = StepControl(t_end=2.0, dt_init=1e-3, dt_max=1e-3, record_dt=0.25)
    res = simulate(g, ModelParams(1.0, 0, Gompertz(alpha, K)), g.full(c), ctl)
    assert res.status is TerminationStatus.COMPLETED_HORIZON
    t = res.series.column("t")
    np.testing.assert_allclose(t, np.arange(0, 2.0001, 0.25), atol=1e-12)
    exact = K * np.exp(np.log(c / K) * np.exp(-alpha * t))
    np.testing.assert_allclose(res.series.column("u_max"), exact, rtol=1e-3)
    assert gompertz_rk4(c, alpha, K, 2.0) == pytest.approx(exact[-1], rel=1e-10)


def test_simulate_steady_state_series_is_constant():
    g = build_grid(1, 1, 8, 8)
    ctl = StepControl(t_end=0.5, dt_init=0.01, dt_max=0.01, record_steps=5)
    res = simulate(g, ModelParams(1.0, 0, Gompertz(1.0, 1.0)), g.full(1.0), ctl)
    assert res.status is TerminationStatus.COMPLETED_HORIZON
    assert len(res.series) == 11
    for name in ("mass", "u_max", "u_min", "v_max"):
        np.testing.assert_allclose(res.series.column(name), 1.0, rtol=1e-14)


def test_simulate_reports_dt_collapse():
    g = build_grid(1, 1, 16, 16)
    u0 = bump(g, 0.5, 0.5, 0.05, amp=500.0, base=0.01)
    ctl = StepControl(t_end=1.0, dt_init=0.5, dt_min=0.5, dt_max=0.5)
    res = simulate(g, ModelParams(1.0, 0, NoSource()), u0, ctl)
    assert res.status is TerminationStatus.DT_COLLAPSE
    assert res.steps == 0 and len(res.series) == 1


def test_simulate_observer_sees_every_record():
    g = build_grid(1, 1, 8, 8)
    seen = []
    ctl = StepControl(t_end=0.1, dt_init=0.01, dt_max=0.01, record_steps=2)
    res = simulate(g, ModelParams(1.0, 1, NoSource()), bump(g), ctl, v0=g.zeros(), observer=seen.append)
    assert [s.t for s in seen] == list(res.series.column("t"))


def test_stable_dt_accounts_for_signal_update():
    # flat v0: limits from the old signal are all infinite, the updated signal is steep
    g = build_grid(1, 1, 16, 16)
    u0 = g.sample(lambda x, y: 1e-3 + 2e3 * np.exp(-((x - 0.3) ** 2 + (y - 0.6) ** 2) / (2 * 0.03**2)))
    params = ModelParams(10.0, 1, NoSource())
    state = initial_state(g, params, u0, g.zeros())
    ctl = StepControl(t_end=1.0, dt_init=0.05, dt_max=0.05, cfl_safety=1.0)
    assert all(b == math.inf for b in dt_bounds(state, params, g).values())
    with pytest.raises(PositivityLoss):
        step(state, params, g, ctl.dt_max)
    dt = stable_dt(state, params, g, ctl)
    assert dt < ctl.dt_max
    assert np.min(step(state, params, g, dt).u) >= 0
