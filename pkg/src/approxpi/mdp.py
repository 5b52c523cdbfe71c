"""Finite MDPs and the exact dynamic-programming operators acting on them.

Values are plain 1-d float arrays of length ``num_states``; policies are 1-d
integer arrays holding one action index per state.  Every operator here is a
pure function of its inputs.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, NumericalError

ROW_SUM_TOL = 1e-12
DEFAULT_ENUMERATION_CAP = 4096


@dataclass(frozen=True, eq=False)
class Mdp:
    """A finite discounted MDP.

    ``transition[s, a, s2]`` is the probability of moving from ``s`` to ``s2``
    under action ``a``; ``reward[s, a]`` the immediate reward.  Rewards must
    lie in [0, 1] unless ``allow_any_reward`` is set, in which case the bound
    calculators refuse to run on this model.
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    allow_any_reward: bool = False

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        r = np.array(self.reward, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise InvalidInputError(f"transition must have shape (S, A, S), got {P.shape}")
        if r.shape != P.shape[:2]:
            raise InvalidInputError(f"reward must have shape {P.shape[:2]}, got {r.shape}")
        if P.shape[0] < 1 or P.shape[1] < 1:
            raise InvalidInputError("need at least one state and one action")
        if not np.all(np.isfinite(P)) or np.any(P < 0):
            raise InvalidInputError("transition probabilities must be finite and nonnegative")
        row_err = np.abs(P.sum(axis=2) - 1.0)
        if np.any(row_err > ROW_SUM_TOL):
            s, a = np.unravel_index(np.argmax(row_err), row_err.shape)
            raise InvalidInputError(
                f"transition row ({s}, {a}) sums to {P[s, a].sum()!r}, not 1")
        if not np.all(np.isfinite(r)):
            raise InvalidInputError("rewards must be finite")
        if not self.allow_any_reward and (r.min() < 0.0 or r.max() > 1.0):
            raise InvalidInputError("rewards must lie in [0, 1] (set allow_any_reward to relax)")
        alpha = float(self.discount)
        if not 0.0 < alpha < 1.0:
            raise InvalidInputError(f"discount must lie strictly inside (0, 1), got {alpha}")
        P.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "discount", alpha)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def num_policies(self) -> int:
        return self.num_actions ** self.num_states


def _as_values(mdp: Mdp, j) -> np.ndarray:
    j = np.asarray(j, dtype=float)
    if j.shape != (mdp.num_states,):
        raise InvalidInputError(f"value vector must have shape ({mdp.num_states},), got {j.shape}")
    return j


def _as_policy(mdp: Mdp, policy) -> np.ndarray:
    mu = np.asarray(policy)
    if mu.shape != (mdp.num_states,):
        raise InvalidInputError(f"policy must have shape ({mdp.num_states},), got {mu.shape}")
    if not np.issubdtype(mu.dtype, np.integer):
        if not np.all(np.equal(np.mod(mu, 1), 0)):
            raise InvalidInputError("policy entries must be integer action indices")
        mu = mu.astype(np.int64)
    if mu.min() < 0 or mu.max() >= mdp.num_actions:
        raise InvalidInputError(f"policy actions must lie in [0, {mdp.num_actions})")
    return mu


def q_values(mdp: Mdp, j) -> np.ndarray:
    """One-step action values ``r(s, a) + alpha * sum_s2 P[s, a, s2] j(s2)``."""
    j = _as_values(mdp, j)
    return mdp.reward + mdp.discount * (mdp.transition @ j)


def apply_T_mu(mdp: Mdp, policy, j) -> np.ndarray:
    """Policy Bellman operator T_mu."""
    mu = _as_policy(mdp, policy)
    # Read off the shared Q table so that T_greedy(J) == T(J) bit for bit.
    return q_values(mdp, j)[np.arange(mdp.num_states), mu]


def apply_T(mdp: Mdp, j) -> np.ndarray:
    """Bellman optimality operator T."""
    return q_values(mdp, j).max(axis=1)


def greedy_policy(mdp: Mdp, j) -> np.ndarray:
    """Greedy policy w.r.t. ``j``; ties go to the lowest action index."""
    return np.argmax(q_values(mdp, j), axis=1)


def rollout_return(mdp: Mdp, policy, j, m: int) -> np.ndarray:
    """The m-step return T_mu^m J. ``m == 0`` is the identity."""
    if m < 0:
        raise InvalidInputError(f"rollout depth must be >= 0, got {m}")
    mu = _as_policy(mdp, policy)
    out = _as_values(mdp, j).copy()
    for _ in range(m):
        out = apply_T_mu(mdp, mu, out)
    return out


def lookahead(mdp: Mdp, j, h: int) -> np.ndarray:
    """The H-step lookahead T^H J. ``h == 0`` is the identity."""
    if h < 0:
        raise InvalidInputError(f"lookahead depth must be >= 0, got {h}")
    out = _as_values(mdp, j).copy()
    for _ in range(h):
        out = apply_T(mdp, out)
    return out


def policy_matrices(mdp: Mdp, policy) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(P_mu, r_mu)``, the transition matrix and reward vector under ``policy``."""
    mu = _as_policy(mdp, policy)
    idx = np.arange(mdp.num_states)
    return mdp.transition[idx, mu], mdp.reward[idx, mu]


def evaluate_policy_exact(mdp: Mdp, policy) -> np.ndarray:
    """Solve (I - alpha P_mu) J = r_mu with a dense direct solve."""
    P_mu, r_mu = policy_matrices(mdp, policy)
    A = np.eye(mdp.num_states) - mdp.discount * P_mu
    try:
        j = np.linalg.solve(A, r_mu)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"policy evaluation solve failed: {exc}") from exc
    if not np.all(np.isfinite(j)):
        raise NumericalError("policy evaluation produced non-finite values")
    return j


def solve_optimal(mdp: Mdp, tol: float = 1e-10, max_iter: int = 1_000_000):
    """Optimal values and an optimal policy, accurate to ``tol`` in sup-norm.

    Runs value iteration until ``||TJ - J|| <= tol (1 - alpha) / (2 alpha)``,
    which makes the greedy policy ``tol``-optimal, evaluates that policy
    exactly, and then polishes with policy-iteration steps until the greedy
    policy is stable.
    """
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    alpha = mdp.discount
    stop = tol * (1.0 - alpha) / (2.0 * alpha)
    j = np.zeros(mdp.num_states)
    for _ in range(max_iter):
        tj = apply_T(mdp, j)
        done = np.max(np.abs(tj - j)) <= stop
        j = tj
        if done:
            break
    else:
        raise NumericalError("value iteration did not reach the stopping rule")
    mu = greedy_policy(mdp, j)
    j_mu = evaluate_policy_exact(mdp, mu)
    for _ in range(mdp.num_states * mdp.num_actions + 1):
        q = q_values(mdp, j_mu)
        current = q[np.arange(mdp.num_states), mu]
        # Switch only on a strict improvement beyond roundoff, otherwise keep mu.
        better = q.max(axis=1) > current + 1e-13 * (1.0 + np.abs(current))
        if not np.any(better):
            break
        mu = np.where(better, np.argmax(q, axis=1), mu)
        j_mu = evaluate_policy_exact(mdp, mu)
    return j_mu, mu


def enumerate_policies(mdp: Mdp, cap: int = DEFAULT_ENUMERATION_CAP):
    """Yield every deterministic policy; refuses when there are more than ``cap``."""
    if mdp.num_policies > cap:
        raise InvalidInputError(
            f"{mdp.num_actions}^{mdp.num_states} policies exceeds enumeration cap {cap}")
    for actions in itertools.product(range(mdp.num_actions), repeat=mdp.num_states):
        yield np.array(actions, dtype=np.int64)


def brute_force_optimal(mdp: Mdp, cap: int = DEFAULT_ENUMERATION_CAP):
    """Componentwise max of J^mu over all deterministic policies, plus a maximiser.

    Independent of :func:`solve_optimal`; used as its oracle.
    """
    best_values = None
    best_policy = None
    best_total = -np.inf
    for mu in enumerate_policies(mdp, cap):
        j = evaluate_policy_exact(mdp, mu)
        best_values = j if best_values is None else np.maximum(best_values, j)
        if j.sum() > best_total:
            best_total, best_policy = j.sum(), mu
    return best_values, best_policy


def sup_norm(x) -> float:
    return float(np.max(np.abs(x)))


# --- file format -------------------------------------------------------------

MDP_KEYS = {"num_states", "num_actions", "discount", "reward", "transition", "allow_any_reward"}


def mdp_to_dict(mdp: Mdp) -> dict:
    return {
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "discount": mdp.discount,
        "reward": mdp.reward.ravel().tolist(),
        "transition": mdp.transition.ravel().tolist(),
        "allow_any_reward": mdp.allow_any_reward,
    }


def mdp_from_dict(data: dict) -> Mdp:
    """Build an MDP from the JSON schema; rows are validated, never renormalised."""
    unknown = set(data) - MDP_KEYS
    if unknown:
        raise InvalidInputError(f"unknown MDP keys: {sorted(unknown)}")
    missing = {"num_states", "num_actions", "discount", "reward", "transition"} - set(data)
    if missing:
        raise InvalidInputError(f"missing MDP keys: {sorted(missing)}")
    S, A = int(data["num_states"]), int(data["num_actions"])
    reward = np.asarray(data["reward"], dtype=float)
    transition = np.asarray(data["transition"], dtype=float)
    if reward.size != S * A:
        raise InvalidInputError(f"reward needs {S * A} entries, got {reward.size}")
    if transition.size != S * A * S:
        raise InvalidInputError(f"transition needs {S * A * S} entries, got {transition.size}")
    return Mdp(transition.reshape(S, A, S), reward.reshape(S, A), float(data["discount"]),
               allow_any_reward=bool(data.get("allow_any_reward", False)))


def load_mdp(path) -> Mdp:
    with open(path) as fh:
        return mdp_from_dict(json.load(fh))


def save_mdp(mdp: Mdp, path) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp), indent=1) + "\n")
