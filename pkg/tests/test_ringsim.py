import logging
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accattack.models import AttackTypeI, AttackTypeII, IdmParams, OvrvParams, equilibrium_speed_idm
from accattack.ringsim import (
    ACC,
    ACC_ATTACKED,
    EXPLICIT,
    HDV,
    MODEL_EQUILIBRIUM,
    RECORD_AND_FREEZE,
    FleetConfig,
    SimConfig,
    SimState,
    VehicleAgent,
    build_fleet,
    init_state,
    ring_gaps,
    run,
    spacing,
    step,
)

FC = FleetConfig()
SC = SimConfig()


def unwrapped_order_ok(log):
    """Leader stays strictly ahead of follower on unwrapped coordinates."""
    xu = np.unwrap(log.x, period=log.ring_length, axis=0)
    head = np.roll(xu, 1, axis=1) - xu
    # align each pair's branch with the initial headway, then track it continuously
    head0 = np.mod(head[0], log.ring_length)
    head -= np.round((head[0] - head0) / log.ring_length) * log.ring_length
    return bool(np.all((head > 0) & (head < log.ring_length)))


def rows_before_collision(log):
    return log.x.shape[0] - (1 if log.collided else 0)


class TestFleet:
    def test_default_layout(self):
        agents = build_fleet(replace(FC, attack=AttackTypeI(0.1, 0.12)))
        acc = [a.id for a in agents if a.cls != HDV]
        attacked = [a.id for a in agents if a.cls == ACC_ATTACKED]
        assert acc == list(range(0, 40, 5))
        assert attacked == [0, 10, 20, 30]
        assert all(a.attack == AttackTypeI(0.1, 0.12) for a in agents if a.cls == ACC_ATTACKED)

    def test_no_attack_means_no_attacked_class(self):
        assert not any(a.cls == ACC_ATTACKED for a in build_fleet(FC))

    def test_all_hdv(self):
        assert all(a.cls == HDV for a in build_fleet(replace(FC, acc_penetration=0.0)))

    def test_all_acc_unattacked(self):
        agents = build_fleet(replace(FC, acc_penetration=1.0, attacked_fraction_of_acc=0.0, attack=AttackTypeI()))
        assert all(a.cls == ACC for a in agents)

    def test_non_integer_count_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            agents = build_fleet(replace(FC, m=41))
        assert sum(a.cls != HDV for a in agents) == 8
        assert "not an integer" in caplog.text

    def test_invalid(self):
        with pytest.raises(ValueError):
            FleetConfig(m=1)
        with pytest.raises(ValueError):
            FleetConfig(ring_length=200.0)
        with pytest.raises(ValueError):
            FleetConfig(acc_penetration=1.5)
        with pytest.raises(ValueError):
            VehicleAgent(0, HDV, 5.0, OvrvParams())
        with pytest.raises(ValueError):
            VehicleAgent(0, ACC, 5.0, OvrvParams(), AttackTypeI())
        with pytest.raises(ValueError):
            SimConfig(warmup=700.0)
        with pytest.raises(ValueError):
            SimConfig(sample_interval=0.25)


class TestInit:
    def test_equilibrium_speed(self):
        st_ = init_state(FC, replace(SC, perturbation_dv=0.0))
        assert np.allclose(st_.v, 3.396, atol=1e-12)

    def test_explicit_rest(self):
        st_ = init_state(FC, replace(SC, initial_speed_rule=EXPLICIT, perturbation_dv=0.0))
        assert np.all(st_.v == 0.0)

    def test_impulse(self):
        st_ = init_state(FC, replace(SC, perturbation_dv=-1.0))
        assert st_.v[0] == pytest.approx(2.396, abs=1e-12)
        assert np.allclose(st_.v[1:], 3.396, atol=1e-12)

    def test_equal_gaps(self):
        st_ = init_state(FC, SC)
        assert np.allclose(ring_gaps(st_.x, np.full(40, 5.0), 1400.0), 30.0, atol=1e-9)
        assert np.all((st_.x >= 0) & (st_.x < 1400.0))


class TestSpacing:
    @staticmethod
    def _state(x):
        x = np.asarray(x, dtype=float)
        return SimState(0.0, x, np.zeros(2), np.zeros(2), np.zeros(2, dtype=bool))

    def test_plain(self):
        assert spacing(self._state([60, 10]), 1, [5, 5], 100.0) == pytest.approx(45.0)

    def test_wrap(self):
        assert spacing(self._state([5, 90]), 1, [5, 5], 100.0) == pytest.approx(10.0)

    def test_vectorized_agrees(self):
        st_ = self._state([5, 90])
        gaps = ring_gaps(st_.x, np.array([5.0, 5.0]), 100.0)
        assert gaps[1] == pytest.approx(spacing(st_, 1, [5, 5], 100.0))
        assert gaps[0] == pytest.approx(spacing(st_, 0, [5, 5], 100.0))


class TestStep:
    def test_fixed_point(self):
        fc = replace(FC, acc_penetration=1.0)
        sc = replace(SC, perturbation_dv=0.0)
        agents = build_fleet(fc)
        s0 = init_state(fc, sc, agents)
        s1, gaps = step(s0, agents, sc, fc.ring_length)
        assert np.max(np.abs(s1.v - s0.v)) < 1e-12
        assert np.max(np.abs(gaps - 30.0)) < 1e-12

    def test_free_road_hdv(self):
        fc = FleetConfig(m=2, ring_length=1e9, acc_penetration=0.0)
        sc = replace(SC, initial_speed_rule=EXPLICIT, perturbation_dv=0.0)
        agents = build_fleet(fc)
        s1, _ = step(init_state(fc, sc, agents), agents, sc, fc.ring_length)
        assert s1.v == pytest.approx([0.14, 0.14], abs=1e-9)

    def test_speed_never_negative(self):
        agents = [VehicleAgent(i, HDV, 5.0, IdmParams()) for i in range(2)]
        x = np.array([10.0, 4.0])  # follower one metre behind, both slow
        state = SimState(0.0, x, np.array([0.0, 0.5]), np.zeros(2), np.zeros(2, dtype=bool))
        s1, _ = step(state, agents, SC, 100.0)
        assert s1.a[1] == SC.accel_bounds.a_min
        assert s1.v[1] == 0.0


class TestRun:
    def test_duration_zero(self):
        log = run(FC, replace(SC, duration=0.0, warmup=0.0))
        assert log.t.tolist() == [0.0]
        assert log.x.shape == (1, 40)

    def test_sample_times(self):
        log = run(FC, replace(SC, duration=10.0, warmup=0.0))
        assert np.array_equal(log.t, np.arange(21) * 0.5)

    def test_deterministic(self):
        sc = replace(SC, duration=120.0)
        a, b = run(FC, sc), run(FC, sc)
        for f in ("t", "x", "v", "a"):
            assert np.array_equal(getattr(a, f), getattr(b, f))

    def test_baseline_no_collision_and_invariants(self):
        log = run(FC, SC)
        assert not log.collided
        assert log.t[-1] == pytest.approx(600.0)
        assert unwrapped_order_ok(log)
        gaps = log.spacing()
        assert np.all(gaps > 0)
        assert np.max(np.abs(gaps.sum(axis=1) + log.lengths.sum() - log.ring_length)) < 1e-9
        assert np.all((log.v >= 0) & (log.v <= SC.speed_limit))

    @pytest.mark.parametrize("penetration", [0.0, 1.0])
    def test_equilibrium_persistence(self, penetration):
        fc = replace(FC, acc_penetration=penetration)
        sc = replace(SC, duration=100.0, warmup=0.0, perturbation_dv=0.0, initial_speed_rule=MODEL_EQUILIBRIUM)
        log = run(fc, sc)
        assert np.max(np.abs(log.v - log.v[0])) < 1e-9

    def test_idm_equilibrium_initial_speed(self):
        fc = replace(FC, acc_penetration=0.0)
        st_ = init_state(fc, replace(SC, initial_speed_rule=MODEL_EQUILIBRIUM, perturbation_dv=0.0))
        assert np.allclose(st_.v, equilibrium_speed_idm(IdmParams(), 30.0), atol=0)

    def test_type1_collision(self):
        log = run(replace(FC, attack=AttackTypeI(0.10, 0.12)), SC)
        assert log.collided
        assert log.t[-1] < 600.0
        assert log.spacing()[-1].min() <= 0
        # every row before the collision keeps strictly positive gaps
        assert np.all(log.spacing()[:-1] > 0)

    @pytest.mark.parametrize("attack", [AttackTypeI(0.0, 0.12), AttackTypeII(0.0, 0.0, 0.8, 0.7)])
    def test_zero_attack_reproduces_clean_run(self, attack):
        sc = replace(SC, duration=200.0)
        clean = run(FC, sc)
        toggled = run(replace(FC, attack=attack), sc)
        assert np.array_equal(clean.x, toggled.x)
        assert np.array_equal(clean.v, toggled.v)

    def test_attack_changes_dynamics(self):
        sc = replace(SC, duration=50.0, warmup=0.0)
        assert not np.array_equal(run(FC, sc).v, run(replace(FC, attack=AttackTypeII(0.4, 0.0, 0.8, 0.7)), sc).v)

    def test_record_and_freeze(self):
        fc = replace(FC, attack=AttackTypeI(0.12, 0.12))
        log = run(fc, replace(SC, collision_policy=RECORD_AND_FREEZE))
        assert log.collided
        assert log.t[-1] == pytest.approx(600.0)
        first = log.collisions[0]
        after = log.t > first.time
        assert np.all(log.v[after, first.follower] == 0.0)
        assert np.all((log.v >= 0) & (log.v <= SC.speed_limit))

    def test_delayed_impulse(self):
        sc = replace(SC, duration=20.0, warmup=0.0, perturbation_dv=-1.0, perturbation_time=5.0)
        log = run(replace(FC, acc_penetration=1.0), sc)
        assert np.allclose(log.v[log.t < 5.0], 3.396, atol=1e-12)
        k = int(np.flatnonzero(log.t == 5.0)[0])
        assert log.v[k, 0] == pytest.approx(2.396, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    m=st.integers(2, 12),
    pitch=st.floats(8.0, 80.0),
    penetration=st.sampled_from([0.0, 0.25, 0.5, 1.0]),
    delta=st.floats(-0.12, 0.12),
    dv=st.floats(-3.0, 0.0),
)
def test_simulator_invariants(m, pitch, penetration, delta, dv):
    fc = FleetConfig(m=m, ring_length=m * pitch, acc_penetration=penetration, attack=AttackTypeI(delta, 0.12))
    sc = SimConfig(duration=60.0, warmup=0.0, perturbation_dv=dv)
    log = run(fc, sc)
    n = rows_before_collision(log)
    gaps = log.spacing()[:n]
    assert np.all(gaps > 0)
    assert np.max(np.abs(gaps.sum(axis=1) + log.lengths.sum() - log.ring_length)) < 1e-9
    assert np.all((log.v >= 0) & (log.v <= sc.speed_limit))
    assert np.all(np.diff(log.t) > 0)
    if not log.collided:
        assert unwrapped_order_ok(log)
