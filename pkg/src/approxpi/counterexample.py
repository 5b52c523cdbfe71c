"""Two-state example in which least-squares approximate PI diverges.

States x1, x2 carry scalar features 1 and 2 and state-only rewards
``r1 > r2``.  Action ``a`` moves either state to x1, action ``b`` to x2.  With
``J = (theta, 2 theta)`` and ``theta > 0`` the greedy choice is ``b``
everywhere, both rollouts bootstrap from ``2 theta`` and the least-squares fit
multiplies theta by ``(6/5) alpha^(m+H-1)`` each iteration (plus reward terms).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algorithms import RunConfig, SampleSpec, run_ls_api
from .errors import InvalidInputError
from .features import FeatureSystem, SampleSet
from .mdp import Mdp

ACTION_A = 0
ACTION_B = 1
DELTA_FV = 6 / 5


@dataclass(frozen=True)
class CounterexampleSpec:
    r1: float = 1.0
    r2: float = 0.0
    alpha: float = 0.9
    m: int = 1
    H: int = 1
    theta0: float = 1.0

    def __post_init__(self):
        if not 0 <= self.r2 < self.r1 <= 1:
            raise InvalidInputError("need 0 <= r2 < r1 <= 1")
        if not 0 < self.alpha < 1:
            raise InvalidInputError("alpha must lie in (0, 1)")
        if self.m < 1 or self.H < 1:
            raise InvalidInputError("m and H must be >= 1")
        if not self.theta0 > 0:
            raise InvalidInputError("theta0 must be positive")

    @property
    def expansion_factor(self) -> float:
        """(6/5) alpha^(m+H-1), the coefficient on theta_k in the recursion."""
        return DELTA_FV * self.alpha ** (self.m + self.H - 1)


def build_counterexample_mdp(spec: CounterexampleSpec) -> Mdp:
    P = np.zeros((2, 2, 2))
    P[:, ACTION_A, 0] = 1.0
    P[:, ACTION_B, 1] = 1.0
    reward = np.array([[spec.r1, spec.r1], [spec.r2, spec.r2]])
    return Mdp(P, reward, spec.alpha)


def counterexample_features() -> FeatureSystem:
    return FeatureSystem(np.array([[1.0], [2.0]]))


def counterexample_config(spec: CounterexampleSpec, num_iterations: int = 100, **overrides) -> RunConfig:
    """Zero-noise least-squares run on both states starting from ``theta0``."""
    kwargs = dict(mdp=build_counterexample_mdp(spec), features=counterexample_features(),
                  samples=SampleSpec("all"), variant="least_squares", H=spec.H, m=spec.m,
                  theta0=np.array([spec.theta0]), num_iterations=num_iterations)
    kwargs.update(overrides)
    return RunConfig(**kwargs)


def _scalar_step(spec: CounterexampleSpec, theta: float) -> float:
    # Hand-coded two-state dynamics; deliberately independent of the mdp module.
    r = (spec.r1, spec.r2)
    a = spec.alpha
    L = [theta, 2 * theta]
    for _ in range(spec.H - 1):
        best = max(L)
        L = [r[0] + a * best, r[1] + a * best]
    nxt = 1 if L[1] > L[0] else 0  # ties go to action a
    V = L
    for _ in range(spec.m):
        V = [r[0] + a * V[nxt], r[1] + a * V[nxt]]
    return (V[0] + 2 * V[1]) / 5


def theta_recursion(spec: CounterexampleSpec, k_max: int, convention: str = "mdp") -> np.ndarray:
    """theta_0 .. theta_{k_max} from the closed-form scalar map.

    ``convention="mdp"`` follows the two-state dynamics exactly (any H).
    ``convention="reduced"`` is the map
    ``sum_{i=1}^{m-1} alpha^i (r1 + 2 r2)/5 + (6/5) alpha^(m+H-1) theta``,
    which omits the first-step rewards; for m = 1 it is pure growth by the
    expansion factor.
    """
    thetas = np.empty(k_max + 1)
    thetas[0] = spec.theta0
    if convention == "mdp":
        step = lambda th: _scalar_step(spec, th)
    elif convention == "reduced":
        geo = sum(spec.alpha ** i for i in range(1, spec.m))
        offset = geo * (spec.r1 + 2 * spec.r2) / 5
        step = lambda th: offset + spec.expansion_factor * th
    else:
        raise InvalidInputError(f"unknown convention {convention!r}")
    for k in range(k_max):
        thetas[k + 1] = step(thetas[k])
    return thetas


def theorem_threshold(alpha: float, delta_fv: float = DELTA_FV) -> float:
    """log(delta_fv) / log(1/alpha): m + H - 1 must exceed this."""
    return math.log(delta_fv) / math.log(1 / alpha)


@dataclass
class DichotomyReport:
    spec: CounterexampleSpec
    expansion_factor: float
    regime: str
    threshold: float
    theorem_condition: bool
    status: str
    diverged_at: object
    run_thetas: np.ndarray = field(repr=False)
    recursion_thetas: np.ndarray = field(repr=False)
    max_rel_error: float
    lock_in: bool
    asserted: bool
    consistent: bool

    @property
    def verdict(self) -> str:
        return {"diverges": "DIVERGES", "converges": "CONVERGES", "critical": "CRITICAL"}[self.regime]

    def summary(self) -> str:
        return f"{self.verdict} (β = {self.expansion_factor:.6g})"

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.__dict__, "verdict": self.verdict, "regime": self.regime,
            "beta": self.expansion_factor, "threshold": self.threshold,
            "horizon": self.spec.m + self.spec.H - 1, "theorem_condition": self.theorem_condition,
            "status": self.status, "diverged_at": self.diverged_at,
            "max_rel_error": self.max_rel_error, "lock_in": self.lock_in,
            "asserted": self.asserted, "consistent": self.consistent,
            "theta": self.run_thetas.tolist(),
        }


def verify_dichotomy(spec: CounterexampleSpec, k_max: int = 500) -> DichotomyReport:
    """Run the real algorithm on the example and compare with the scalar recursion.

    For H = 1 the outcome is checked against the expansion factor; for H > 1
    only the theorem threshold is meaningful and any mismatch is reported,
    not asserted.  A factor within 1e-12 of one is classed as critical.
    """
    factor = spec.expansion_factor
    if abs(factor - 1) <= 1e-12:
        regime = "critical"
    else:
        regime = "diverges" if factor > 1 else "converges"
    trace = run_ls_api(counterexample_config(spec, k_max))
    run_thetas = trace.thetas[:, 0]
    rec = theta_recursion(spec, len(run_thetas) - 1)
    rel = np.abs(run_thetas - rec) / np.maximum(np.abs(rec), 1e-300)
    lock_in = all(np.all(r.policy == ACTION_B) for r, th in zip(trace.records[1:], run_thetas[:-1])
                  if th > 0)
    thr = theorem_threshold(spec.alpha)
    horizon = spec.m + spec.H - 1
    asserted = spec.H == 1 and regime != "critical"
    if spec.H == 1:
        consistent = regime == "critical" or ((trace.status == "diverged") == (regime == "diverges"))
    else:
        consistent = (trace.status == "completed") == (horizon > thr)
    return DichotomyReport(spec, factor, regime, thr, horizon > thr, trace.status,
                           trace.diverged_at, run_thetas, rec, float(rel.max()), lock_in,
                           asserted, consistent)


def counterexample_sample_set() -> SampleSet:
    return SampleSet.all_states(counterexample_features())
