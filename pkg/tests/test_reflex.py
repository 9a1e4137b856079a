"""Tension QP, muscle relaxation control, and the safety reflex."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tendonctl.reflex import (RelaxationConfig, RelaxationState, SafetyReflex,
                              TensionQP, enumerate_bound_qp, kkt_residual,
                              mrc_step, safety_reflex_step, solve_tension_qp)


def random_qp(rng):
    j = int(rng.integers(1, 4))
    m = int(rng.integers(j + 1, 9))
    return TensionQP(W1=rng.uniform(1e-6, 1e-2, size=m),
                     W2=rng.uniform(0.5, 2.0, size=j),
                     G=rng.uniform(-0.05, 0.05, size=(m, j)),
                     tau_nec=rng.uniform(-2.0, 2.0, size=j),
                     f_min=rng.uniform(0.0, 20.0, size=m))


# -- QP solver -------------------------------------------------------------


def test_qp_two_muscle_example():
    # [DERIVED] enumeration oracle; agonist carries the torque, antagonist
    # pinned at its bound
    qp = TensionQP(W1=np.full(2, 1e-6), W2=np.ones(1),
                   G=np.array([[-0.02], [0.02]]),
                   tau_nec=np.array([1.0]), f_min=np.full(2, 10.0))
    x = solve_tension_qp(qp)
    assert np.allclose(x, [59.9, 10.0], atol=0.1)
    x_ref, obj_ref = enumerate_bound_qp(qp)
    assert qp.objective(x) == pytest.approx(obj_ref, rel=1e-9)
    assert np.allclose(x, x_ref, atol=1e-6)


def test_qp_origin_when_unconstrained():
    qp = TensionQP(W1=np.full(3, 1e-3), W2=np.ones(2),
                   G=np.random.default_rng(0).uniform(-0.05, 0.05, size=(3, 2)),
                   tau_nec=np.zeros(2), f_min=np.zeros(3))
    assert np.allclose(solve_tension_qp(qp), 0.0, atol=1e-9)


def test_qp_beats_feasible_reference_point():
    rng = np.random.default_rng(1)
    for _ in range(50):
        qp = random_qp(rng)
        x = solve_tension_qp(qp)
        assert qp.objective(x) <= qp.objective(qp.f_min) + 1e-9


def test_qp_matches_enumeration_oracle():
    rng = np.random.default_rng(2)
    for _ in range(200):
        qp = random_qp(rng)
        x = solve_tension_qp(qp)
        _, obj_ref = enumerate_bound_qp(qp)
        obj = qp.objective(x)
        assert np.all(x >= qp.f_min - 1e-12)
        assert abs(obj - obj_ref) <= 1e-6 * max(1.0, abs(obj_ref))
        assert kkt_residual(qp, x) < 1e-6


def test_qp_validation():
    with pytest.raises(ValueError):
        TensionQP(W1=np.full(2, -1.0), W2=np.ones(1),
                  G=np.zeros((2, 1)), tau_nec=np.zeros(1), f_min=np.zeros(2))
    with pytest.raises(ValueError):
        TensionQP(W1=np.ones(3), W2=np.ones(1),
                  G=np.zeros((2, 1)), tau_nec=np.zeros(1), f_min=np.zeros(2))
    with pytest.raises(FloatingPointError):
        TensionQP(W1=np.ones(2), W2=np.ones(1), G=np.full((2, 1), np.nan),
                  tau_nec=np.zeros(1), f_min=np.zeros(2))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_qp_feasibility_property(seed):
    qp = random_qp(np.random.default_rng(seed))
    x = solve_tension_qp(qp)
    assert np.all(x >= qp.f_min - 1e-12)
    assert np.all(np.isfinite(x))
    _, obj_ref = enumerate_bound_qp(qp)
    assert qp.objective(x) <= obj_ref + 1e-6 * max(1.0, abs(obj_ref))


# -- muscle relaxation control ---------------------------------------------


def test_mrc_moving_mode_noop_when_zero():
    state = RelaxationState.create(4)
    cfg = RelaxationConfig()
    new, offsets = mrc_step(state, cfg, np.full(4, 30.0), np.zeros(2),
                            np.arange(4.0))
    assert np.array_equal(offsets, np.zeros(4))
    assert np.array_equal(new.dl_relax, np.zeros(4))


def test_mrc_static_elongates_lowest_necessity_first():
    state = RelaxationState.create(3)
    state.mode = "static"
    cfg = RelaxationConfig(rate=1e-4, f_min=10.0)
    x_nec = np.array([30.0, 5.0, 20.0])   # muscle 1 is least necessary
    f_high = np.full(3, 50.0)
    new, offsets = mrc_step(state, cfg, f_high, np.zeros(2), x_nec)
    assert offsets[1] == pytest.approx(cfg.rate)
    assert offsets[0] == offsets[2] == 0.0
    # stays on the same muscle while its tension is above f_min
    new, offsets = mrc_step(new, cfg, f_high, np.zeros(2), x_nec)
    assert offsets[1] == pytest.approx(2 * cfg.rate)
    # advances once the tension drops below f_min
    f_low = np.array([50.0, 5.0, 50.0])
    new, _ = mrc_step(new, cfg, f_low, np.zeros(2), x_nec)
    new, offsets = mrc_step(new, cfg, f_high, np.zeros(2), x_nec)
    assert offsets[2] == pytest.approx(cfg.rate)   # next-lowest muscle


def test_mrc_drift_stops_and_rolls_back():
    state = RelaxationState.create(2)
    state.mode = "static"
    cfg = RelaxationConfig(rate=1e-4, angle_threshold=0.05)
    x_nec = np.array([1.0, 2.0])
    f = np.full(2, 50.0)
    state, _ = mrc_step(state, cfg, f, np.zeros(1), x_nec)
    dl_before = state.dl_relax.copy()
    drifted = np.array([0.06])
    state, offsets = mrc_step(state, cfg, f, drifted, x_nec)
    assert state.done
    assert offsets[0] == pytest.approx(dl_before[0] - cfg.rate)
    # frozen afterwards even if the pose returns
    state, offsets2 = mrc_step(state, cfg, f, np.zeros(1), x_nec)
    assert np.array_equal(offsets2, offsets)


def test_mrc_constrained_joints_ignore_drift():
    state = RelaxationState.create(2)
    state.mode = "static"
    cfg = RelaxationConfig(rate=1e-4, angle_threshold=0.05)
    x_nec = np.array([1.0, 2.0])
    f = np.full(2, 50.0)
    state, _ = mrc_step(state, cfg, f, np.zeros(1), x_nec,
                        constrained=np.array([True]))
    state, offsets = mrc_step(state, cfg, f, np.array([0.5]), x_nec,
                              constrained=np.array([True]))
    assert not state.done
    assert offsets[0] == pytest.approx(2 * cfg.rate)


def test_mrc_moving_unwinds_most_necessary_first():
    state = RelaxationState.create(3)
    state.dl_relax = np.array([3e-4, 2e-4, 1e-4])
    state.mode = "moving"
    cfg = RelaxationConfig(rate=1e-4)
    x_nec = np.array([5.0, 30.0, 10.0])
    state, offsets = mrc_step(state, cfg, np.zeros(3), np.zeros(2), x_nec)
    assert offsets[1] == pytest.approx(1e-4)   # highest necessity unwound first
    assert offsets[0] == pytest.approx(3e-4)
    assert np.all(state.dl_relax >= 0.0)


def test_mrc_offsets_never_negative():
    state = RelaxationState.create(2)
    state.dl_relax = np.array([5e-5, 0.0])
    state.mode = "moving"
    cfg = RelaxationConfig(rate=1e-4)
    for _ in range(5):
        state, offsets = mrc_step(state, cfg, np.zeros(2), np.zeros(1),
                                  np.array([1.0, 2.0]))
        assert np.all(offsets >= 0.0)


# -- safety reflex ---------------------------------------------------------


def test_safety_below_thresholds_stays_zero():
    s = SafetyReflex.create(3)
    s, dl = safety_reflex_step(s, np.full(3, 50.0), np.full(3, 30.0))
    assert np.array_equal(dl, np.zeros(3))


def test_safety_rate_limited_first_step():
    # [DERIVED] direct formula: ideal 1e-3 * 20 = 0.02 m, clamped to 5e-4
    s = SafetyReflex.create(1, K_f=1e-3, f_lim=100.0, dl_max=5e-4)
    s, dl = safety_reflex_step(s, np.array([120.0]), np.array([25.0]))
    assert dl[0] == pytest.approx(5e-4)


def test_safety_decays_without_undershoot():
    s = SafetyReflex.create(1, dl_min=-5e-4, dl_max=5e-4)
    s.dl_safe = np.array([1.2e-3])
    below = (np.array([0.0]), np.array([25.0]))
    s, dl = safety_reflex_step(s, *below)
    assert dl[0] == pytest.approx(7e-4)
    s, dl = safety_reflex_step(s, *below)
    assert dl[0] == pytest.approx(2e-4)
    s, dl = safety_reflex_step(s, *below)
    assert dl[0] == 0.0
    s, dl = safety_reflex_step(s, *below)
    assert dl[0] == 0.0


def test_safety_temperature_term():
    s = SafetyReflex.create(1, K_c=1e-3, c_lim=60.0, dl_max=1.0)
    s, dl = safety_reflex_step(s, np.array([0.0]), np.array([70.0]))
    assert dl[0] == pytest.approx(1e-2)


def test_safety_per_tick_change_bound():
    rng = np.random.default_rng(0)
    s = SafetyReflex.create(4)
    prev = s.dl_safe.copy()
    for _ in range(200):
        f = rng.uniform(0.0, 300.0, size=4)
        c = rng.uniform(20.0, 90.0, size=4)
        s, dl = safety_reflex_step(s, f, c)
        assert np.max(np.abs(dl - prev)) <= max(abs(s.dl_min), s.dl_max) + 1e-15
        assert np.all(dl >= 0.0)
        prev = dl


def test_safety_reflex_validation():
    with pytest.raises(ValueError):
        SafetyReflex.create(2, dl_min=1e-4)
