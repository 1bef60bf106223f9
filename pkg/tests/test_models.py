import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accattack.models import (
    AccelBounds,
    AttackTypeI,
    AttackTypeII,
    CfInput,
    IdmParams,
    ModelDomainError,
    OvrvParams,
    clamp_accel,
    equilibrium_speed_idm,
    equilibrium_speed_ovrv,
    idm_accel,
    idm_desired_gap,
    ovrv_accel,
    ovrv_accel_attacked_t1,
    ovrv_accel_attacked_t2,
    partials_t1,
    partials_t2,
)

IDM = IdmParams()
OVRV = OvrvParams()

# (s, dv, v) grid used by the finite-difference checks
GRID = [CfInput(s, dv, v) for s in np.linspace(5, 100, 6) for dv in np.linspace(-5, 5, 5) for v in np.linspace(0, 30, 5)]


class TestIdm:
    def test_desired_gap_at_rest(self):
        assert idm_desired_gap(IDM, 0.0, 0.0) == 2.0

    def test_desired_gap_closing(self):
        # 2 + 20*1.5 + 20*2/(2*sqrt(2.8)), evaluated at 30 digits
        assert idm_desired_gap(IDM, 20.0, -2.0) == pytest.approx(43.95228609334394, abs=1e-12)

    def test_desired_gap_clamped(self):
        assert idm_desired_gap(IDM, 10.0, 40.0) == 2.0

    def test_free_road(self):
        assert idm_accel(IDM, CfInput(1e9, 0.0, 0.0)) == pytest.approx(1.4, abs=1e-12)

    def test_at_desired_speed(self):
        a = idm_accel(IDM, CfInput(1e9, 0.0, 30.0))
        assert a <= 0
        assert a == pytest.approx(0.0, abs=1e-12)

    def test_closing(self):
        assert idm_accel(IDM, CfInput(30.0, -2.0, 20.0)) == pytest.approx(-1.8815708031694507, abs=1e-12)

    @pytest.mark.parametrize("s", [0.0, -1.0])
    def test_rejects_nonpositive_spacing(self, s):
        with pytest.raises(ModelDomainError):
            idm_accel(IDM, CfInput(s, 0.0, 10.0))

    @given(st.floats(0, 40), st.floats(-40, 40))
    def test_gap_never_below_minimum(self, v, dv):
        assert idm_desired_gap(IDM, v, dv) >= IDM.s0

    @given(st.floats(3, 200), st.floats(-10, 0), st.floats(0, 35))
    def test_decreasing_in_own_speed(self, s, dv, v):
        h = 1e-4
        assert idm_accel(IDM, CfInput(s, dv, v + h)) < idm_accel(IDM, CfInput(s, dv, v))

    def test_equilibrium_speed_is_a_fixed_point(self):
        for s in (5.0, 30.0, 80.0):
            v = equilibrium_speed_idm(IDM, s)
            assert 0 < v < IDM.v0
            assert idm_accel(IDM, CfInput(s, 0.0, v)) == pytest.approx(0.0, abs=1e-12)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            IdmParams(T=0.0)


class TestOvrv:
    def test_equilibrium_spacing(self):
        assert ovrv_accel(OVRV, CfInput(21.51 + 2.5 * 10, 0.0, 10.0)) == pytest.approx(0.0, abs=1e-12)

    def test_example(self):
        assert ovrv_accel(OVRV, CfInput(30.0, 1.0, 10.0)) == pytest.approx(-0.7255, abs=1e-12)

    def test_equilibrium_speed_at_30m(self):
        assert ovrv_accel(OVRV, CfInput(30.0, 0.0, 3.396)) == pytest.approx(0.0, abs=1e-12)

    def test_type1_zero_attack(self):
        inp = CfInput(30.0, 1.0, 10.0)
        assert ovrv_accel_attacked_t1(OVRV, AttackTypeI(0.0, 0.1), inp) == ovrv_accel(OVRV, inp)

    @pytest.mark.parametrize(
        "delta, expected",
        [(0.1, 0.2745), (-0.10, -1.7255)],
    )
    def test_type1(self, delta, expected):
        got = ovrv_accel_attacked_t1(OVRV, AttackTypeI(delta, 0.12), CfInput(30.0, 1.0, 10.0))
        assert got == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize(
        "d1, d2, expected",
        [(0.0, 0.0, -0.7255), (-0.3, 0.0, -1.1755), (0.0, 0.8, -0.6455)],
    )
    def test_type2(self, d1, d2, expected):
        got = ovrv_accel_attacked_t2(OVRV, AttackTypeII(d1, d2, 1.0, 1.0), CfInput(30.0, 1.0, 10.0))
        assert got == pytest.approx(expected, abs=1e-12)

    @given(st.floats(0.1, 200), st.floats(-20, 20), st.floats(0, 40))
    def test_zero_attack_reduction_exact(self, s, dv, v):
        inp = CfInput(s, dv, v)
        base = ovrv_accel(OVRV, inp)
        assert ovrv_accel_attacked_t1(OVRV, AttackTypeI(0.0, 0.0), inp) == base
        assert ovrv_accel_attacked_t2(OVRV, AttackTypeII(0.0, 0.0, 0.0, 0.0), inp) == base

    @given(
        st.floats(0, 100), st.floats(-10, 10), st.floats(0, 30),
        st.floats(0, 100), st.floats(-10, 10), st.floats(0, 30),
    )
    def test_superposition(self, s1, dv1, v1, s2, dv2, v2):
        # the law is affine: f(a + b) = f(a) + f(b) - f(0) with f(0) = -k1*eta
        f = lambda s, dv, v: ovrv_accel(OVRV, CfInput(s, dv, v))
        lhs = f(s1 + s2, dv1 + dv2, v1 + v2)
        rhs = f(s1, dv1, v1) + f(s2, dv2, v2) - f(0.0, 0.0, 0.0)
        assert lhs == pytest.approx(rhs, abs=1e-9)

    @given(st.floats(0, 60))
    def test_fixed_point(self, v):
        assert ovrv_accel(OVRV, CfInput(OVRV.eta + OVRV.tau * v, 0.0, v)) == pytest.approx(0.0, abs=1e-12)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            OvrvParams(k1=0.0)
        with pytest.raises(ValueError):
            OvrvParams(eta=-1.0)
        OvrvParams(eta=0.0)


class TestAttackTypes:
    def test_type1_bound(self):
        with pytest.raises(ValueError):
            AttackTypeI(0.2, 0.12)
        with pytest.raises(ValueError):
            AttackTypeI(0.0, -0.1)

    def test_type2_bounds(self):
        with pytest.raises(ValueError):
            AttackTypeII(0.9, 0.0, 0.8, 0.7)
        with pytest.raises(ValueError):
            AttackTypeII(0.0, -0.8, 0.8, 0.7)


class TestPartials:
    @pytest.mark.parametrize(
        "delta, expected",
        [(0.0, (0.05, 0.10, -0.125)), (0.12, (0.05, 0.10, -0.005)), (0.125, (0.05, 0.10, 0.0))],
    )
    def test_type1(self, delta, expected):
        assert partials_t1(OVRV, delta) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize(
        "d1, d2, expected",
        [(0.0, 0.0, (0.05, 0.10, -0.125)), (0.8, -0.7, (0.09, 0.03, -0.125)), (-1.0, 0.0, (0.0, 0.10, -0.125))],
    )
    def test_type2(self, d1, d2, expected):
        assert partials_t2(OVRV, d1, d2) == pytest.approx(expected, abs=1e-15)

    @staticmethod
    def _central(f, inp, h):
        out = []
        for j in range(3):
            e = [0.0, 0.0, 0.0]
            e[j] = h
            up = CfInput(*(a + b for a, b in zip(inp, e)))
            dn = CfInput(*(a - b for a, b in zip(inp, e)))
            out.append((f(up) - f(dn)) / (2 * h))
        return out

    @pytest.mark.parametrize("delta", [-0.1, 0.0, 0.06, 0.12])
    def test_type1_matches_finite_differences(self, delta):
        atk = AttackTypeI(delta, 0.12)
        want = partials_t1(OVRV, delta)
        for inp in GRID:
            fd = self._central(lambda x: ovrv_accel_attacked_t1(OVRV, atk, x), inp, 1e-3)
            for got, ref in zip(fd, want):
                assert got == pytest.approx(ref, rel=1e-6, abs=1e-12)

    @pytest.mark.parametrize("d1, d2", [(0.0, 0.0), (0.4, -0.3), (-0.3, 0.8), (0.8, -0.7)])
    def test_type2_matches_finite_differences(self, d1, d2):
        atk = AttackTypeII(d1, d2, 1.0, 1.0)
        want = partials_t2(OVRV, d1, d2)
        for inp in GRID:
            fd = self._central(lambda x: ovrv_accel_attacked_t2(OVRV, atk, x), inp, 1e-3)
            for got, ref in zip(fd, want):
                assert got == pytest.approx(ref, rel=1e-6, abs=1e-12)


class TestEquilibriumAndClamp:
    @pytest.mark.parametrize("s, v", [(21.51, 0.0), (30.0, 3.396), (96.51, 30.0), (10.0, 0.0), (200.0, 30.0)])
    def test_ovrv_equilibrium_speed(self, s, v):
        assert equilibrium_speed_ovrv(OVRV, s) == pytest.approx(v, abs=1e-12)

    @pytest.mark.parametrize("a, expected", [(-12.0, -8.0), (1.4, 1.4), (7.0, 5.0)])
    def test_clamp(self, a, expected):
        assert clamp_accel(AccelBounds(-8.0, 5.0), a) == expected

    def test_bounds_invariant(self):
        with pytest.raises(ValueError):
            AccelBounds(1.0, 5.0)
        with pytest.raises(ValueError):
            AccelBounds(-1.0, 0.0)

    @settings(max_examples=50)
    @given(st.floats(-50, 50, allow_nan=False))
    def test_clamp_within_bounds(self, a):
        b = AccelBounds()
        assert b.a_min <= clamp_accel(b, a) <= b.a_max_phys
        assert not math.isnan(clamp_accel(b, a))
