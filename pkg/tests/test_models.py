import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from botrl.models import (
    InvalidGeometryError,
    PlatformState,
    ScenarioConfig,
    load_scenario_config,
    measure_bearing,
    process_noise_cov,
    propagate_relative,
    run_leg,
    sample_scenario,
    transition_matrix,
    wrap_angle,
)


def still(pos=(0.0, 0.0)):
    return PlatformState(np.array(pos, dtype=float), np.zeros(2))


def test_default_scenario_values():
    cfg = ScenarioConfig()
    assert (cfg.steps_per_leg, cfg.platform_speed, cfg.d_min, cfg.d_max) == (12, 1.0, 18.0, 26.0)
    assert cfg.bearing_noise_sigma == 0.0175
    assert cfg.process_noise_q == 1e-6
    assert (cfg.nominal_range, cfg.range_sigma, cfg.v_max) == (23.0, 5.0, 3.0)


@pytest.mark.parametrize("bad", [dict(d_min=0.0), dict(d_min=30.0), dict(steps_per_leg=0),
                                 dict(bearing_noise_sigma=0.0), dict(process_noise_q=-1.0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        ScenarioConfig(**bad)


def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("steps_per_leg: 8\nd_max: 30\nlearning_rate: 0.001\n")
    cfg = load_scenario_config(path)
    assert cfg.steps_per_leg == 8 and cfg.d_max == 30
    assert cfg.bearing_noise_sigma == 0.0175


def test_transition_matrix():
    F = transition_matrix(1.0)
    assert F[0, 2] == 1 and F[1, 3] == 1
    np.testing.assert_array_equal(np.diag(F), np.ones(4))
    np.testing.assert_array_equal(transition_matrix(0.0), np.eye(4))
    np.testing.assert_array_equal(F @ [0, 0, 1, 0], [1, 0, 1, 0])


@given(st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_transition_semigroup(t1, t2):
    np.testing.assert_allclose(transition_matrix(t1) @ transition_matrix(t2),
                               transition_matrix(t1 + t2), atol=1e-12)


def test_process_noise():
    np.testing.assert_array_equal(process_noise_cov(1.0, 0.0), np.zeros((4, 4)))
    Q = process_noise_cov(1.0, 1e-6)
    assert Q[0, 0] == pytest.approx(1e-6 / 3, rel=1e-12)
    assert Q[0, 2] == pytest.approx(0.5e-6, rel=1e-12)
    assert Q[2, 2] == pytest.approx(1e-6, rel=1e-12)
    for T in (1.0, 2.0, 5.0):
        Q = process_noise_cov(T, 1.0)
        np.testing.assert_allclose(Q, Q.T)
        assert np.linalg.eigvalsh(Q).min() >= -1e-12


def test_propagate_stationary_observer():
    out = propagate_relative([10, 0, 0, 1], still(), still(), 1.0, 0.0)
    np.testing.assert_allclose(out, [10, 1, 0, 1])


def test_propagate_moving_observer_frame_subtraction():
    # target fixed in the world, observer moves east at 1 per step
    v = np.array([1.0, 0.0])
    obs = [PlatformState(np.array([k, 0.0]), v) for k in range(4)]
    x = np.array([10.0, 5.0, -1.0, 0.0])  # relative velocity is minus observer velocity
    for k in range(3):
        nxt = propagate_relative(x, obs[k], obs[k + 1], 1.0, 0.0)
        assert nxt[0] == pytest.approx(x[0] - 1.0)
        assert nxt[1] == pytest.approx(x[1])
        x = nxt


@given(st.lists(st.floats(-100, 100), min_size=4, max_size=4),
       st.lists(st.floats(-100, 100), min_size=4, max_size=4),
       st.floats(-5, 5))
def test_propagate_superposition(a, b, c):
    f = lambda x: propagate_relative(x, still(), still(), 1.0, 0.0)
    a, b = np.array(a), np.array(b)
    np.testing.assert_allclose(f(a + c * b), f(a) + c * f(b), atol=1e-12 * (1 + abs(c)) * 1e3)


def test_process_noise_monte_carlo_covariance():
    rng = np.random.default_rng(5)
    q = 1e-6
    Q = process_noise_cov(1.0, q)
    x = np.array([20.0, 3.0, 0.5, -0.2])
    base = propagate_relative(x, still(), still(), 1.0, q)
    draws = np.array([propagate_relative(x, still(), still(), 1.0, q, rng) - base
                      for _ in range(100_000)])
    emp = np.cov(draws.T)
    scale = np.sqrt(np.outer(np.diag(Q), np.diag(Q)))
    nonzero = Q != 0
    np.testing.assert_allclose(emp[nonzero], Q[nonzero], rtol=0.05)
    assert np.all(np.abs(emp[~nonzero]) < 0.05 * scale[~nonzero])


def test_bearing_values():
    assert measure_bearing([5, 0, 0, 0], 0.0) == 0.0
    assert measure_bearing([0, -3, 0, 0], 0.0) == pytest.approx(-math.pi / 2)
    with pytest.raises(InvalidGeometryError):
        measure_bearing([0, 0, 1, 1], 0.01)


def test_bearing_noise_std():
    rng = np.random.default_rng(11)
    z = np.array([measure_bearing([10.0, 10.0, 0, 0], 0.0175, rng) for _ in range(100_000)])
    assert np.std(z - math.pi / 4) == pytest.approx(0.0175, rel=0.03)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_bearing_range(x, y):
    if x == 0 and y == 0:
        return
    z = measure_bearing([x, y, 0, 0], 0.5, np.random.default_rng(0))
    assert -math.pi < z <= math.pi


@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_wrap_angle_interval(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


def test_wrap_angle_endpoints_and_arrays():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    out = wrap_angle(np.array([math.pi, -math.pi, 3 * math.pi, 0.1]))
    np.testing.assert_allclose(out, [math.pi, math.pi, math.pi, 0.1])


def test_run_leg():
    start = still((1.0, 2.0))
    path = run_leg(start, 0.0, 12, 1.0)
    assert len(path) == 13
    np.testing.assert_allclose(path[-1].position, [13.0, 2.0])
    path = run_leg(start, math.pi / 2, 1, 1.0)
    np.testing.assert_allclose(path[-1].position - path[0].position, [0.0, 1.0], atol=1e-15)


@given(st.floats(-10, 10), st.integers(1, 30), st.floats(0.1, 5))
def test_run_leg_path_length(heading, M, speed):
    path = run_leg(still(), heading, M, speed)
    steps = np.diff([p.position for p in path], axis=0)
    assert np.linalg.norm(steps, axis=1).sum() == pytest.approx(M * speed, rel=1e-9)
    for p in path:
        assert np.linalg.norm(p.velocity) == pytest.approx(speed, rel=1e-12)


def test_sample_scenario_annulus_and_speed():
    cfg = ScenarioConfig()
    rng = np.random.default_rng(0)
    headings = []
    for _ in range(10_000):
        target, observer = sample_scenario(cfg, rng)
        r = np.linalg.norm(target[:2] - observer.position)
        assert cfg.d_min <= r <= cfg.d_max
        assert np.linalg.norm(target[2:]) == pytest.approx(1.0)
        headings.append(math.atan2(target[3], target[2]) % (2 * math.pi))
    counts, _ = np.histogram(headings, bins=8, range=(0, 2 * math.pi))
    assert stats.chisquare(counts).pvalue > 0.01


def test_sample_scenario_seeded():
    cfg = ScenarioConfig()
    a = sample_scenario(cfg, np.random.default_rng(42))
    b = sample_scenario(cfg, np.random.default_rng(42))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1].position, b[1].position)
