"""Car-following laws for human-driven (IDM) and ACC (OVRV) vehicles.

Sign convention throughout: ``dv = v_lead - v_ego`` so a closing follower sees
``dv < 0``.  Parameter defaults are the ring-road scenario values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy.optimize import brentq


class ModelDomainError(ValueError):
    """Raised when a car-following law is evaluated outside its domain."""


@dataclass(frozen=True)
class IdmParams:
    v0: float = 30.0  # desired speed [m/s]
    T: float = 1.5  # desired time headway [s]
    s0: float = 2.0  # minimum spacing [m]
    a_max: float = 1.4  # maximum acceleration [m/s^2]
    b_comf: float = 2.0  # comfortable deceleration [m/s^2]

    def __post_init__(self):
        for name in ("v0", "T", "s0", "a_max", "b_comf"):
            if not getattr(self, name) > 0:
                raise ValueError(f"IdmParams.{name} must be > 0, got {getattr(self, name)!r}")


@dataclass(frozen=True)
class OvrvParams:
    k1: float = 0.05  # gain on effective time gap [1/s^2]
    k2: float = 0.10  # gain on relative speed [1/s]
    eta: float = 21.51  # jam distance [m]
    tau: float = 2.5  # desired time gap [s]

    def __post_init__(self):
        for name in ("k1", "k2", "tau"):
            if not getattr(self, name) > 0:
                raise ValueError(f"OvrvParams.{name} must be > 0, got {getattr(self, name)!r}")
        if not self.eta >= 0:
            raise ValueError(f"OvrvParams.eta must be >= 0, got {self.eta!r}")


@dataclass(frozen=True)
class AttackTypeI:
    """Additive corruption ``delta * v`` of the ACC acceleration command."""

    delta: float = 0.0
    r: float = 0.0

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"attack bound r must be >= 0, got {self.r!r}")
        if abs(self.delta) > self.r:
            raise ValueError(f"|delta|={abs(self.delta)!r} exceeds bound r={self.r!r}")


@dataclass(frozen=True)
class AttackTypeII:
    """False data injection scaling measured spacing and relative speed."""

    delta1: float = 0.0
    delta2: float = 0.0
    z1: float = 0.0
    z2: float = 0.0

    def __post_init__(self):
        if self.z1 < 0 or self.z2 < 0:
            raise ValueError(f"attack bounds must be >= 0, got z1={self.z1!r}, z2={self.z2!r}")
        if abs(self.delta1) > self.z1:
            raise ValueError(f"|delta1|={abs(self.delta1)!r} exceeds bound z1={self.z1!r}")
        if abs(self.delta2) > self.z2:
            raise ValueError(f"|delta2|={abs(self.delta2)!r} exceeds bound z2={self.z2!r}")


AttackSpec = Union[AttackTypeI, AttackTypeII]


class CfInput(NamedTuple):
    s: float  # spacing to leader [m]
    dv: float  # v_lead - v_ego [m/s]
    v: float  # ego speed [m/s]


class Partials(NamedTuple):
    beta1: float  # d(accel)/d(spacing)
    beta2: float  # d(accel)/d(relative speed)
    beta3: float  # d(accel)/d(own speed)


@dataclass(frozen=True)
class AccelBounds:
    a_min: float = -8.0
    a_max_phys: float = 5.0

    def __post_init__(self):
        if not (self.a_min < 0 < self.a_max_phys):
            raise ValueError(f"need a_min < 0 < a_max_phys, got [{self.a_min}, {self.a_max_phys}]")


def idm_desired_gap(p: IdmParams, v: float, dv: float) -> float:
    """Dynamic desired gap ``s*``; never smaller than ``s0``."""
    dynamic = v * p.T - v * dv / (2.0 * math.sqrt(p.a_max * p.b_comf))
    return p.s0 + max(0.0, dynamic)


def idm_accel(p: IdmParams, inp: CfInput) -> float:
    s, dv, v = inp
    if not s > 0:
        raise ModelDomainError(f"IDM needs positive spacing, got s={s!r}")
    s_star = idm_desired_gap(p, v, dv)
    return p.a_max * (1.0 - (v / p.v0) ** 4 - (s_star / s) ** 2)


def ovrv_accel(p: OvrvParams, inp: CfInput) -> float:
    s, dv, v = inp
    return p.k1 * (s - p.eta - p.tau * v) + p.k2 * dv


def ovrv_accel_attacked_t1(p: OvrvParams, atk: AttackTypeI, inp: CfInput) -> float:
    return ovrv_accel(p, inp) + atk.delta * inp.v


def ovrv_accel_attacked_t2(p: OvrvParams, atk: AttackTypeII, inp: CfInput) -> float:
    s, dv, v = inp
    return p.k1 * (s + atk.delta1 * s - p.eta - p.tau * v) + p.k2 * (dv + atk.delta2 * dv)


def partials_t1(p: OvrvParams, delta: float) -> Partials:
    """Partials of the Type-I attacked OVRV law; ``delta = 0`` is the clean model."""
    return Partials(p.k1, p.k2, -p.tau * p.k1 + delta)


def partials_t2(p: OvrvParams, delta1: float, delta2: float) -> Partials:
    return Partials(p.k1 * (1.0 + delta1), p.k2 * (1.0 + delta2), -p.tau * p.k1)


def equilibrium_speed_ovrv(p: OvrvParams, s: float, speed_limit: float = 30.0) -> float:
    """Speed at which the OVRV law is at rest for spacing ``s`` with ``dv = 0``.

    Spacings below the jam distance map to 0 (jammed); the result is capped at
    ``speed_limit``.
    """
    if s < p.eta:
        return 0.0
    return min(max((s - p.eta) / p.tau, 0.0), speed_limit)


def equilibrium_speed_idm(p: IdmParams, s: float, speed_limit: float = 30.0) -> float:
    """Speed at which the IDM is at rest for spacing ``s`` with ``dv = 0``.

    The IDM equilibrium residual is strictly decreasing in speed, so the root is
    bracketed by ``[0, v0]`` whenever ``s > s0``.
    """
    if s <= p.s0:
        return 0.0

    def residual(v):
        return idm_accel(p, CfInput(s, 0.0, v))

    v = brentq(residual, 0.0, p.v0, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    return min(v, speed_limit)


def clamp_accel(b: AccelBounds, a: float) -> float:
    return min(max(a, b.a_min), b.a_max_phys)
