"""Single-lane ring-road simulation of mixed HDV/ACC traffic.

Vehicle ``i`` follows vehicle ``i - 1`` and vehicle 0 follows vehicle ``m - 1``.
All vehicles are updated simultaneously from the pre-step snapshot with a
semi-implicit (speed first) Euler scheme.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from .models import (
    AccelBounds,
    AttackSpec,
    AttackTypeI,
    AttackTypeII,
    IdmParams,
    OvrvParams,
    equilibrium_speed_idm,
    equilibrium_speed_ovrv,
)

log = logging.getLogger(__name__)

HDV = "HDV"
ACC = "ACC"
ACC_ATTACKED = "ACC_ATTACKED"

HALT = "halt"
RECORD_AND_FREEZE = "record-and-freeze"

OVRV_EQUILIBRIUM = "ovrv-equilibrium"
MODEL_EQUILIBRIUM = "model-equilibrium"
EXPLICIT = "explicit"


@dataclass(frozen=True)
class VehicleAgent:
    id: int
    cls: str
    length: float
    model: Union[IdmParams, OvrvParams]
    attack: Optional[AttackSpec] = None

    def __post_init__(self):
        if self.cls == HDV and not isinstance(self.model, IdmParams):
            raise ValueError("HDV agents carry IdmParams")
        if self.cls in (ACC, ACC_ATTACKED) and not isinstance(self.model, OvrvParams):
            raise ValueError("ACC agents carry OvrvParams")
        if self.cls not in (HDV, ACC, ACC_ATTACKED):
            raise ValueError(f"unknown vehicle class {self.cls!r}")
        if (self.attack is not None) != (self.cls == ACC_ATTACKED):
            raise ValueError("exactly the ACC_ATTACKED agents carry an attack")


@dataclass(frozen=True)
class FleetConfig:
    m: int = 40
    ring_length: float = 1400.0
    acc_penetration: float = 0.2
    attacked_fraction_of_acc: float = 0.5
    placement: str = "even"
    vehicle_length: float = 5.0
    idm: IdmParams = field(default_factory=IdmParams)
    ovrv: OvrvParams = field(default_factory=OvrvParams)
    attack: Optional[AttackSpec] = None

    def __post_init__(self):
        if self.m <= 1:
            raise ValueError(f"need more than one vehicle, got m={self.m}")
        if not self.vehicle_length > 0:
            raise ValueError("vehicle_length must be positive")
        if not self.ring_length > self.m * self.vehicle_length:
            raise ValueError(
                f"ring_length={self.ring_length} leaves no gap for {self.m} vehicles of length {self.vehicle_length}"
            )
        for name in ("acc_penetration", "attacked_fraction_of_acc"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.placement != "even":
            raise ValueError(f"unsupported placement {self.placement!r}")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    duration: float = 600.0
    warmup: float = 60.0
    speed_limit: float = 30.0
    accel_bounds: AccelBounds = field(default_factory=AccelBounds)
    initial_speed_rule: str = OVRV_EQUILIBRIUM
    initial_speed: float = 0.0  # used by the explicit rule
    perturbation_vehicle: int = 0
    perturbation_dv: float = -0.1
    perturbation_time: float = 0.0
    collision_policy: str = HALT
    sample_interval: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.duration < 0:
            raise ValueError("duration must be nonnegative")
        if self.duration > 0 and not self.warmup < self.duration:
            raise ValueError("warmup must be shorter than duration")
        if not self.speed_limit > 0:
            raise ValueError("speed_limit must be positive")
        if self.initial_speed_rule not in (OVRV_EQUILIBRIUM, MODEL_EQUILIBRIUM, EXPLICIT):
            raise ValueError(f"unknown initial_speed_rule {self.initial_speed_rule!r}")
        if self.collision_policy not in (HALT, RECORD_AND_FREEZE):
            raise ValueError(f"unknown collision_policy {self.collision_policy!r}")
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be positive")
        ratio = self.sample_interval / self.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("sample_interval must be a positive multiple of dt")

    @property
    def steps_per_sample(self) -> int:
        return int(round(self.sample_interval / self.dt))


@dataclass(frozen=True)
class SimState:
    time: float
    x: np.ndarray  # wrapped positions, [0, L)
    v: np.ndarray
    a: np.ndarray  # acceleration applied in the step that produced this state
    frozen: np.ndarray  # vehicles stopped by a collision (record-and-freeze)


@dataclass(frozen=True)
class CollisionEvent:
    time: float
    follower: int
    spacing: float


@dataclass
class TrajectoryLog:
    t: np.ndarray  # (n,)
    x: np.ndarray  # (n, m)
    v: np.ndarray
    a: np.ndarray
    classes: tuple
    lengths: np.ndarray  # (m,)
    ring_length: float
    collisions: list
    config: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.x.shape[1]

    def spacing(self) -> np.ndarray:
        return ring_gaps(self.x, self.lengths, self.ring_length)

    def rel_speed(self) -> np.ndarray:
        """``v_lead - v_ego`` for every row and vehicle."""
        return np.roll(self.v, 1, axis=-1) - self.v

    @property
    def collided(self) -> bool:
        return bool(self.collisions)


def _even_slots(n_total: int, fraction: float, what: str) -> list:
    exact = fraction * n_total
    count = int(math.floor(exact + 1e-9))
    if abs(exact - round(exact)) > 1e-9:
        log.warning("%s fraction %g of %d is not an integer; using %d", what, fraction, n_total, count)
    if count == 0:
        return []
    stride = max(1, int(math.floor(1.0 / fraction + 1e-9)))
    return [k * stride for k in range(count)]


def build_fleet(fc: FleetConfig) -> list:
    """Agents in ring order with ACC vehicles at evenly spaced ordinals.

    Attacked vehicles are chosen by the same rule applied to the ACC ordinals,
    so with half attacked the 1st, 3rd, ... ACC vehicles carry the attack.
    """
    acc_slots = _even_slots(fc.m, fc.acc_penetration, "ACC penetration")
    attacked = set()
    if fc.attack is not None:
        attacked = {acc_slots[k] for k in _even_slots(len(acc_slots), fc.attacked_fraction_of_acc, "attacked")}
    acc = set(acc_slots)
    agents = []
    for i in range(fc.m):
        if i in attacked:
            agents.append(VehicleAgent(i, ACC_ATTACKED, fc.vehicle_length, fc.ovrv, fc.attack))
        elif i in acc:
            agents.append(VehicleAgent(i, ACC, fc.vehicle_length, fc.ovrv))
        else:
            agents.append(VehicleAgent(i, HDV, fc.vehicle_length, fc.idm))
    return agents


def ring_gaps(x: np.ndarray, lengths: np.ndarray, ring_length: float) -> np.ndarray:
    """Bumper-to-bumper gaps; works on a single row or a (rows, m) array."""
    lead_x = np.roll(x, 1, axis=-1)
    lead_len = np.roll(lengths, 1)
    return np.mod(lead_x - x, ring_length) - lead_len


def spacing(state: SimState, i: int, lengths, ring_length: float) -> float:
    m = len(state.x)
    lead = (i - 1) % m
    return float(math.fmod(state.x[lead] - state.x[i], ring_length) % ring_length - lengths[lead])


def _equilibrium_speed(agent: VehicleAgent, gap: float, limit: float) -> float:
    if agent.cls == HDV:
        return equilibrium_speed_idm(agent.model, gap, limit)
    p = agent.model
    atk = agent.attack
    if isinstance(atk, AttackTypeI):
        # k1 (s - eta - tau v) + delta v = 0
        v = p.k1 * (gap - p.eta) / (p.k1 * p.tau - atk.delta)
        return min(max(v, 0.0), limit)
    if isinstance(atk, AttackTypeII):
        return min(max(((1 + atk.delta1) * gap - p.eta) / p.tau, 0.0), limit)
    return equilibrium_speed_ovrv(p, gap, limit)


def init_state(fc: FleetConfig, sc: SimConfig, agents: Optional[list] = None) -> SimState:
    agents = agents if agents is not None else build_fleet(fc)
    m = fc.m
    pitch = fc.ring_length / m
    gap = pitch - fc.vehicle_length
    # vehicle i - 1 sits one pitch ahead of vehicle i
    x = np.mod(-np.arange(m) * pitch, fc.ring_length)
    if sc.initial_speed_rule == OVRV_EQUILIBRIUM:
        v = np.full(m, equilibrium_speed_ovrv(fc.ovrv, gap, sc.speed_limit))
    elif sc.initial_speed_rule == MODEL_EQUILIBRIUM:
        v = np.array([_equilibrium_speed(ag, gap, sc.speed_limit) for ag in agents])
    else:
        v = np.full(m, min(max(sc.initial_speed, 0.0), sc.speed_limit))
    if sc.perturbation_time == 0 and sc.perturbation_dv != 0:
        v = _apply_impulse(v, sc)
    return SimState(0.0, x, v, np.zeros(m), np.zeros(m, dtype=bool))


def _apply_impulse(v: np.ndarray, sc: SimConfig) -> np.ndarray:
    v = v.copy()
    i = sc.perturbation_vehicle % len(v)
    v[i] = min(max(v[i] + sc.perturbation_dv, 0.0), sc.speed_limit)
    return v


@dataclass(frozen=True)
class _FleetArrays:
    hdv: np.ndarray
    acc: np.ndarray
    lengths: np.ndarray
    lead_lengths: np.ndarray
    idm: Optional[IdmParams]
    ovrv: Optional[OvrvParams]
    # per-vehicle attack terms, zero where not attacked
    delta: np.ndarray
    g_s: np.ndarray  # 1 + delta1
    g_dv: np.ndarray  # 1 + delta2


@lru_cache(maxsize=64)
def _fleet_arrays(agents: tuple) -> _FleetArrays:
    m = len(agents)
    hdv = np.array([ag.cls == HDV for ag in agents])
    idms = {ag.model for ag in agents if ag.cls == HDV}
    ovrvs = {ag.model for ag in agents if ag.cls != HDV}
    if len(idms) > 1 or len(ovrvs) > 1:
        raise ValueError("heterogeneous model parameters within a class are not supported")
    delta = np.zeros(m)
    g_s = np.ones(m)
    g_dv = np.ones(m)
    for i, ag in enumerate(agents):
        if isinstance(ag.attack, AttackTypeI):
            delta[i] = ag.attack.delta
        elif isinstance(ag.attack, AttackTypeII):
            g_s[i] = 1.0 + ag.attack.delta1
            g_dv[i] = 1.0 + ag.attack.delta2
    lengths = np.array([ag.length for ag in agents], dtype=float)
    return _FleetArrays(
        hdv=hdv,
        acc=~hdv,
        lengths=lengths,
        lead_lengths=np.roll(lengths, 1),
        idm=next(iter(idms), None),
        ovrv=next(iter(ovrvs), None),
        delta=delta,
        g_s=g_s,
        g_dv=g_dv,
    )


def accelerations(s: np.ndarray, dv: np.ndarray, v: np.ndarray, fa: _FleetArrays) -> np.ndarray:
    """Unclamped commanded accelerations, attack terms included."""
    out = np.empty_like(v)
    if fa.hdv.any():
        p = fa.idm
        h = fa.hdv
        sh, dvh, vh = s[h], dv[h], v[h]
        if np.any(sh <= 0):
            raise ValueError("IDM evaluated at nonpositive spacing")
        s_star = p.s0 + np.maximum(0.0, vh * p.T - vh * dvh / (2.0 * math.sqrt(p.a_max * p.b_comf)))
        out[h] = p.a_max * (1.0 - (vh / p.v0) ** 4 - (s_star / sh) ** 2)
    if fa.acc.any():
        p = fa.ovrv
        c = fa.acc
        sc_, dvc, vc = s[c], dv[c], v[c]
        out[c] = (
            p.k1 * (sc_ * fa.g_s[c] - p.eta - p.tau * vc)
            + p.k2 * (dvc * fa.g_dv[c])
            + fa.delta[c] * vc
        )
    return out


def step(state: SimState, agents, sc: SimConfig, ring_length: float) -> tuple:
    """Advance one ``dt``.

    Returns ``(new_state, new_gaps)`` where ``new_gaps`` are the post-step gaps
    obtained by adding the displacement difference to the pre-step gaps, so an
    overlap is visible even if a follower jumps past its leader in one step.
    """
    return _advance(state, _fleet_arrays(tuple(agents)), sc, ring_length)


def _advance(state: SimState, fa: _FleetArrays, sc: SimConfig, ring_length: float) -> tuple:
    s = np.mod(np.roll(state.x, 1) - state.x, ring_length) - fa.lead_lengths
    dv = np.roll(state.v, 1) - state.v
    frozen = state.frozen
    any_frozen = frozen.any()
    if any_frozen:
        # frozen vehicles may sit at zero spacing; keep them out of the model laws
        a = accelerations(np.where(frozen, 1.0, s), dv, state.v, fa)
    else:
        a = accelerations(s, dv, state.v, fa)
    b = sc.accel_bounds
    a = np.clip(a, b.a_min, b.a_max_phys)
    v_new = np.clip(state.v + a * sc.dt, 0.0, sc.speed_limit)
    if any_frozen:
        a[frozen] = 0.0
        v_new[frozen] = 0.0
    disp = v_new * sc.dt
    x_new = np.mod(state.x + disp, ring_length)
    gaps = s + np.roll(disp, 1) - disp
    return SimState(state.time + sc.dt, x_new, v_new, a, frozen), gaps


def _collision_events(time: float, gaps: np.ndarray, frozen: np.ndarray) -> list:
    hit = np.flatnonzero((gaps <= 0) & ~frozen)
    return [CollisionEvent(time, int(i), float(gaps[i])) for i in hit]


def run(fc: FleetConfig, sc: SimConfig, agents: Optional[list] = None) -> TrajectoryLog:
    """Simulate ``duration`` seconds, logging every ``sample_interval``.

    With the halt policy the run stops at the first collision and the colliding
    state is appended as the final row.  With record-and-freeze the colliding
    follower is pinned bumper-to-bumper behind its leader and stays at rest.
    """
    agents = agents if agents is not None else build_fleet(fc)
    fa = _fleet_arrays(tuple(agents))
    L = fc.ring_length
    state = init_state(fc, sc, agents)
    n_steps = int(round(sc.duration / sc.dt))
    every = sc.steps_per_sample
    impulse_step = int(round(sc.perturbation_time / sc.dt)) if sc.perturbation_time > 0 else None

    ts, xs, vs, as_ = [0.0], [state.x], [state.v], [state.a]
    collisions: list = []
    for n in range(1, n_steps + 1):
        state, gaps = _advance(state, fa, sc, L)
        # integer step count keeps sample times free of accumulated rounding
        state = replace(state, time=n * sc.dt)
        if impulse_step is not None and n == impulse_step:
            state = replace(state, v=_apply_impulse(state.v, sc))
        events = _collision_events(state.time, gaps, state.frozen)
        if events:
            collisions.extend(events)
            if sc.collision_policy == HALT:
                ts.append(state.time)
                xs.append(state.x)
                vs.append(state.v)
                as_.append(state.a)
                break
            state = _freeze(state, [e.follower for e in events], fa, L)
        if n % every == 0:
            ts.append(state.time)
            xs.append(state.x)
            vs.append(state.v)
            as_.append(state.a)

    return TrajectoryLog(
        t=np.array(ts),
        x=np.vstack(xs),
        v=np.vstack(vs),
        a=np.vstack(as_),
        classes=tuple(ag.cls for ag in agents),
        lengths=fa.lengths.copy(),
        ring_length=L,
        collisions=collisions,
    )


def _freeze(state: SimState, followers: list, fa: _FleetArrays, L: float) -> SimState:
    x, v, frozen = state.x.copy(), state.v.copy(), state.frozen.copy()
    m = len(x)
    for i in followers:
        lead = (i - 1) % m
        x[i] = (x[lead] - fa.lengths[lead]) % L
        v[i] = 0.0
        frozen[i] = True
    return replace(state, x=x, v=v, frozen=frozen)
