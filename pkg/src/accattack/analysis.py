"""String-stability calculus for the OVRV law and attack characterization.

The lambda_2 criterion (negative means string stable) is evaluated on the
acceleration partials of the (possibly attacked) OVRV law.  Because the law is
linear the partials do not depend on the equilibrium point.

Type-I attacks add ``delta * v`` to the command; Type-II attacks scale the
measured spacing by ``1 + delta1`` and the relative speed by ``1 + delta2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import bisect

from .models import OvrvParams, partials_t1, partials_t2

STRING_STABLE = "string-stable"
STRING_UNSTABLE = "string-unstable"
RDC_VIOLATED = "rdc-violated"

TYPE1 = "type1"
TYPE2 = "type2"
DESTABILIZE = "destabilize"
DEGRADE = "degrade"
STRATEGIES = ("max-lambda", "min-magnitude", "min-delta2", "grid")


class SingularityError(ValueError):
    """beta3 == 0: the lambda_2 expression is undefined (RDC boundary)."""


class BracketError(ValueError):
    """The supplied interval does not bracket a root of the criterion."""


@dataclass(frozen=True)
class StabilityReport:
    beta1: float
    beta2: float
    beta3: float
    rdc_ok: bool
    lambda2: float  # nan when beta3 == 0
    classification: str


@dataclass(frozen=True)
class Type1AttackInterval:
    delta_star: float
    r: float
    feasible: bool
    r1: float
    param_condition_value: float
    r_min: float  # smallest admissible bound, max{-r1, r1, 0}
    r_max: float  # exclusive upper bound tau*k1
    rejected_root: float


@dataclass(frozen=True)
class Type2AttackVerdict:
    lambda2_hat: float
    destabilizing: bool
    degrading: bool
    theta_value: float
    rdc_ok: bool
    bounds_ok: bool
    no_attack: bool


@dataclass(frozen=True)
class SynthesisRequest:
    attack_type: str = TYPE1
    mode: str = DESTABILIZE
    r: float = 0.12
    z1: float = 0.8
    z2: float = 0.7
    strategy: str = "max-lambda"
    grid_step: float = 1e-3

    def __post_init__(self):
        if self.attack_type not in (TYPE1, TYPE2):
            raise ValueError(f"unknown attack type {self.attack_type!r}")
        if self.mode not in (DESTABILIZE, DEGRADE):
            raise ValueError(f"unknown synthesis mode {self.mode!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if min(self.r, self.z1, self.z2) < 0:
            raise ValueError("attack bounds must be nonnegative")
        if not self.grid_step > 0:
            raise ValueError("grid_step must be positive")


@dataclass(frozen=True)
class SynthesisResult:
    feasible: bool
    delta: Optional[float] = None
    delta1: Optional[float] = None
    delta2: Optional[float] = None
    objective: Optional[float] = None  # lambda_2 under attack, or theta for Type-II degrade
    n_candidates: int = 0
    reason: str = ""


def lambda2(beta1: float, beta2: float, beta3: float) -> float:
    if beta3 == 0:
        raise SingularityError("lambda_2 is singular at beta3 = 0")
    return (beta1 / beta3**3) * (beta3**2 / 2.0 - beta2 * beta3 - beta1)


def rdc_check(beta1: float, beta2: float, beta3: float) -> bool:
    return beta1 > 0 and beta2 > 0 and beta3 < 0


def stability_report(beta1: float, beta2: float, beta3: float) -> StabilityReport:
    ok = rdc_check(beta1, beta2, beta3)
    lam = lambda2(beta1, beta2, beta3) if beta3 != 0 else math.nan
    if not ok:
        cls = RDC_VIOLATED
    elif lam < 0:
        cls = STRING_STABLE
    else:
        cls = STRING_UNSTABLE
    return StabilityReport(beta1, beta2, beta3, ok, lam, cls)


def lambda2_tilde(p: OvrvParams, delta: float) -> float:
    """lambda_2 of the OVRV law under a Type-I attack of magnitude ``delta``."""
    b = partials_t1(p, delta)
    if b.beta3 == 0:
        raise SingularityError(f"delta = tau*k1 = {p.tau * p.k1!r} makes beta3 vanish")
    return lambda2(*b)


def lambda2_ovrv_baseline(p: OvrvParams) -> float:
    return lambda2_tilde(p, 0.0)


def feasible_roots(p: OvrvParams) -> tuple[float, float]:
    """Both zeros of the Type-I criterion: (feasible, rejected)."""
    root = math.sqrt(p.k2**2 + 2.0 * p.k1)
    base = p.tau * p.k1 + p.k2
    return base - root, base + root


def delta_star(p: OvrvParams) -> float:
    return feasible_roots(p)[0]


def param_condition(p: OvrvParams) -> float:
    """2 tau^2 k1 + 2 tau k2 - 1; must be positive for the destabilizing set to exist."""
    return 2.0 * p.tau**2 * p.k1 + 2.0 * p.tau * p.k2 - 1.0


def type1_interval(p: OvrvParams, r: float) -> Type1AttackInterval:
    if r < 0:
        raise ValueError(f"bound r must be >= 0, got {r!r}")
    d_star, rejected = feasible_roots(p)
    r1 = d_star
    cond = param_condition(p)
    r_min = max(-r1, r1, 0.0)
    r_max = p.tau * p.k1
    feasible = cond > 0 and r_max > r >= r_min
    return Type1AttackInterval(d_star, r, feasible, r1, cond, r_min, r_max, rejected)


def p_poly(p: OvrvParams, delta: float) -> float:
    """Cubic whose negativity is equivalent to a Type-I attack raising lambda_2.

    The cubic is defined in the shifted variable ``x = delta - tau*k1``; it is
    evaluated here re-expanded in ``delta`` so that ``p(0) == 0`` holds exactly
    (its constant term cancels identically).
    """
    c = p.tau * p.k1
    t, k1, k2 = p.tau, p.k1, p.k2
    a3 = t**2 * k1 + 2 * t * k2 - 2
    b2 = t**3 * k1**2
    c1 = -2 * t**3 * k1**2 * k2
    lin = 3 * a3 * c**2 - 2 * b2 * c + c1
    quad = -3 * a3 * c + b2
    return delta * (lin + delta * (quad + delta * a3))


def type1_degrading_check(p: OvrvParams, delta: float, r: float) -> bool:
    return p_poly(p, delta) < 0 and abs(delta) <= r and r < p.tau * p.k1


def type1_destabilizing_check(p: OvrvParams, delta: float, r: float) -> bool:
    """Membership of ``delta`` in the destabilizing set for bound ``r``."""
    iv = type1_interval(p, r)
    return iv.feasible and iv.delta_star <= delta <= r and abs(delta) <= r


def lambda2_hat(p: OvrvParams, delta1: float, delta2: float) -> float:
    """lambda_2 of the OVRV law under a Type-II attack."""
    tk = p.tau * p.k1
    g1 = 1.0 + delta1
    return -p.k1 * g1 / tk**3 * (tk**2 / 2.0 + tk * p.k2 * (1.0 + delta2) - p.k1 * g1)


def theta(p: OvrvParams, delta1: float, delta2: float) -> float:
    """Quadratic whose positivity is equivalent to a Type-II attack raising lambda_2."""
    t, k1, k2 = p.tau, p.k1, p.k2
    return (
        2 * delta1**2
        - (t**2 * k1 + 2 * t * k2 - 4) * delta1
        - 2 * t * k2 * delta2
        - 2 * t * k2 * delta1 * delta2
    )


def type2_destabilizing_check(
    p: OvrvParams, delta1: float, delta2: float, z1: float, z2: float
) -> Type2AttackVerdict:
    if z1 < 0 or z2 < 0:
        raise ValueError("attack bounds must be nonnegative")
    lam = lambda2_hat(p, delta1, delta2)
    th = theta(p, delta1, delta2)
    rdc_ok = rdc_check(*partials_t2(p, delta1, delta2))
    bounds_ok = abs(delta1) <= z1 and abs(delta2) <= z2
    no_attack = z1 == 0 and z2 == 0
    live = rdc_ok and bounds_ok and not no_attack
    return Type2AttackVerdict(
        lambda2_hat=lam,
        destabilizing=live and lam > 0,
        degrading=live and th > 0,
        theta_value=th,
        rdc_ok=rdc_ok,
        bounds_ok=bounds_ok,
        no_attack=no_attack,
    )


def type2_degrading_check(p: OvrvParams, delta1: float, delta2: float, z1: float, z2: float) -> bool:
    if z1 < 0 or z2 < 0:
        raise ValueError("attack bounds must be nonnegative")
    return (
        theta(p, delta1, delta2) > 0
        and abs(delta1) <= z1
        and abs(delta2) <= z2
        and 1.0 + delta1 > 0
        and 1.0 + delta2 > 0
    )


def root_oracle_lambda2_tilde(p: OvrvParams, lo: float, hi: float, xtol: float = 1e-10) -> float:
    """Bisection root of the Type-I criterion on ``[lo, hi]``.

    Independent of the closed-form roots; used to cross-check them.
    """
    if lo >= hi:
        raise BracketError(f"empty bracket [{lo}, {hi}]")
    sing = p.tau * p.k1
    if lo <= sing <= hi:
        raise BracketError(f"bracket [{lo}, {hi}] contains the singularity delta = {sing!r}")
    f_lo, f_hi = lambda2_tilde(p, lo), lambda2_tilde(p, hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if f_lo * f_hi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}] ({f_lo:.3g}, {f_hi:.3g})")
    return bisect(lambda d: lambda2_tilde(p, d), lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)


# --- vectorized evaluation for grid synthesis -------------------------------

def _lambda2_tilde_vec(p: OvrvParams, delta: np.ndarray) -> np.ndarray:
    b3 = -p.tau * p.k1 + delta
    return (p.k1 / b3**3) * (b3**2 / 2.0 - p.k2 * b3 - p.k1)


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    """Integer multiples of ``step`` inside ``[lo, hi]``, rounded to 1e-12."""
    k0 = math.ceil(lo / step - 1e-9)
    k1 = math.floor(hi / step + 1e-9)
    if k1 < k0:
        return np.empty(0)
    vals = np.round(np.arange(k0, k1 + 1) * step, 12)
    return vals[(vals >= lo - 1e-12) & (vals <= hi + 1e-12)]


def _pick(values: np.ndarray, objective: np.ndarray, strategy: str, magnitude: np.ndarray) -> int:
    """Index of the chosen candidate among feasible ones (already filtered).

    Ties resolve to the earliest candidate, i.e. smallest delta (then delta2).
    """
    if strategy == "max-lambda":
        return int(np.argmax(objective))
    if strategy in ("min-magnitude", "min-delta2"):
        return int(np.lexsort((-objective, magnitude))[0])
    return 0  # "grid": first feasible grid point


def synthesize_type1(p: OvrvParams, req: SynthesisRequest) -> SynthesisResult:
    r = req.r
    if r >= p.tau * p.k1:
        return SynthesisResult(False, reason=f"bound r={r:g} must satisfy r < tau*k1 = {p.tau * p.k1:g}")
    if req.mode == DESTABILIZE:
        iv = type1_interval(p, r)
        if iv.param_condition_value <= 0:
            return SynthesisResult(
                False,
                reason=f"parameter condition 2*tau^2*k1 + 2*tau*k2 - 1 = {iv.param_condition_value:g} is not positive",
            )
        if not iv.feasible:
            return SynthesisResult(False, reason=f"bound r={r:g} is below the required r >= {iv.r_min:.6f}")
        deltas = _grid(iv.delta_star, r, req.grid_step)
        lam = _lambda2_tilde_vec(p, deltas)
        ok = (lam >= 0) & (deltas != 0)
    else:
        deltas = _grid(-r, r, req.grid_step)
        lam = _lambda2_tilde_vec(p, deltas)
        ok = p_poly(p, deltas) < 0
    n = int(ok.sum())
    if n == 0:
        return SynthesisResult(False, reason=f"no grid point in [-{r:g}, {r:g}] satisfies p(delta) < 0")
    cand, obj = deltas[ok], lam[ok]
    strategy = "min-magnitude" if req.strategy == "min-delta2" else req.strategy
    i = _pick(cand, obj, strategy, np.abs(cand))
    return SynthesisResult(True, delta=float(cand[i]), objective=float(obj[i]), n_candidates=n)


def synthesize_type2(p: OvrvParams, req: SynthesisRequest) -> SynthesisResult:
    z1, z2 = req.z1, req.z2
    if z1 == 0 and z2 == 0:
        return SynthesisResult(False, reason="bounds z1 = z2 = 0 admit no attack")

    def axis(z):
        # -1 itself is dropped by the 1 + delta > 0 filter below
        return _grid(-min(z, 1.0), z, req.grid_step)

    d1, d2 = np.meshgrid(axis(z1), axis(z2), indexing="ij")
    d1, d2 = d1.ravel(), d2.ravel()
    lam = lambda2_hat(p, d1, d2)
    th = theta(p, d1, d2)
    rdc = (1.0 + d1 > 0) & (1.0 + d2 > 0) & ((d1 != 0) | (d2 != 0))
    if req.mode == DESTABILIZE:
        ok, obj = rdc & (lam > 0), lam
        what = "lambda2_hat > 0"
    else:
        ok, obj = rdc & (th > 0), th
        what = "theta > 0"
    n = int(ok.sum())
    if n == 0:
        return SynthesisResult(False, reason=f"no grid point within |delta1| <= {z1:g}, |delta2| <= {z2:g} has {what}")
    c1, c2, o = d1[ok], d2[ok], obj[ok]
    if req.strategy == "min-delta2":
        i = int(np.lexsort((-o, c2))[0])
    else:
        i = _pick(c1, o, req.strategy, np.abs(c1) + np.abs(c2))
    return SynthesisResult(True, delta1=float(c1[i]), delta2=float(c2[i]), objective=float(o[i]), n_candidates=n)


def synthesize(p: OvrvParams, req: SynthesisRequest) -> SynthesisResult:
    if req.attack_type == TYPE1:
        return synthesize_type1(p, req)
    return synthesize_type2(p, req)
