"""Approximate policy iteration with lookahead, m-step rollout and linear fits.

Three variants share one outer loop:

* ``least_squares``  targets T_mu^m T^{H-1} J_k on D_k, exact least-squares fit
* ``gradient_descent``  same targets, ``eta`` gradient steps warm-started at theta_k
* ``modified_ls``  targets T_mu^m J_k (no inner lookahead), exact fit

Lookahead error is injected as one-sided uniform noise on the root action
values, which keeps ``||T^H J - T_mu T^{H-1} J||_inf <= eps_la`` by
construction; rollout error is i.i.d. uniform on ``[-eps_pe, eps_pe]`` at each
sampled state.  Random streams are spawned from the run seed in a fixed
order: lookahead noise, rollout noise, sample sets.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, InvalidInputError
from .features import (FeatureSystem, SampleSet, draw_sample_set, gradient_descent_fit,
                       least_squares_fit, spectral_quantities)
from .mdp import (Mdp, evaluate_policy_exact, greedy_policy, lookahead,
                  q_values, rollout_return, solve_optimal, sup_norm)

VARIANTS = ("least_squares", "gradient_descent", "modified_ls")


@dataclass(frozen=True)
class SampleSpec:
    """How D_k is chosen: every state, a fixed list, or a fresh draw of ``size`` each iteration."""

    mode: str = "all"
    indices: Optional[tuple] = None
    size: Optional[int] = None

    def __post_init__(self):
        if self.mode == "all":
            if self.indices is not None or self.size is not None:
                raise ConfigError("mode 'all' takes neither indices nor size")
        elif self.mode == "fixed":
            if self.indices is None or self.size is not None:
                raise ConfigError("mode 'fixed' needs indices (and no size)")
            object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        elif self.mode == "resample":
            if self.size is None or self.indices is not None:
                raise ConfigError("mode 'resample' needs size (and no indices)")
        else:
            raise ConfigError(f"unknown sample mode {self.mode!r}")


@dataclass(frozen=True, eq=False)
class RunConfig:
    mdp: Mdp
    features: FeatureSystem
    samples: SampleSpec = SampleSpec()
    variant: str = "least_squares"
    H: int = 1
    m: int = 1
    eta: Optional[int] = None
    gamma: Optional[float] = None
    eps_la: float = 0.0
    eps_pe: float = 0.0
    theta0: Optional[np.ndarray] = None
    num_iterations: int = 50
    seed: int = 0
    divergence_threshold: float = 1e8

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.H < 1 or self.m < 1:
            raise ConfigError("H and m must both be >= 1")
        if self.eps_la < 0 or self.eps_pe < 0:
            raise ConfigError("noise bounds must be nonnegative")
        if self.num_iterations < 0:
            raise ConfigError("num_iterations must be >= 0")
        if self.mdp.num_states != self.features.num_states:
            raise ConfigError("MDP and feature system disagree on |S|")
        if self.variant == "gradient_descent":
            if self.eta is None or self.gamma is None:
                raise ConfigError("gradient_descent needs eta and gamma")
            if self.eta < 1 or self.gamma <= 0:
                raise ConfigError("need eta >= 1 and gamma > 0")
        elif self.eta is not None or self.gamma is not None:
            raise ConfigError(f"eta/gamma only apply to gradient_descent, not {self.variant}")
        theta0 = np.zeros(self.features.d) if self.theta0 is None else np.array(self.theta0, float)
        if theta0.shape != (self.features.d,) or not np.all(np.isfinite(theta0)):
            raise ConfigError(f"theta0 must be a finite vector of length {self.features.d}")
        object.__setattr__(self, "theta0", theta0)
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.samples.mode == "fixed":
            SampleSet(self.features, self.samples.indices)
        if self.samples.mode == "resample" and not (
                self.features.d <= self.samples.size <= self.features.num_states):
            raise ConfigError("resample size must lie in [d, |S|]")

    def replace(self, **changes) -> "RunConfig":
        return replace(self, **changes)


def _streams(seed: int):
    la, pe, ds = np.random.SeedSequence(int(seed)).spawn(3)
    return np.random.default_rng(la), np.random.default_rng(pe), np.random.default_rng(ds)


def realize_sample_sets(config: RunConfig, count: Optional[int] = None) -> list:
    """The sample sets D_0, D_1, ... a run with this config will use.

    The sample-set stream is independent of the trajectory, so the sets can be
    realised ahead of a run (the ``check`` command relies on this).
    """
    count = config.num_iterations if count is None else count
    spec = config.samples
    if spec.mode == "all":
        return [SampleSet.all_states(config.features)] * max(count, 1)
    if spec.mode == "fixed":
        return [SampleSet(config.features, spec.indices)] * max(count, 1)
    rng = _streams(config.seed)[2]
    return [draw_sample_set(config.features, spec.size, rng) for _ in range(max(count, 1))]


def select_lookahead_policy(mdp: Mdp, j, h: int, eps_la: float, rng: np.random.Generator):
    """Return ``(policy, gap)`` with ``gap = ||T^H j - T_mu T^{H-1} j||_inf <= eps_la``."""
    if h < 1:
        raise InvalidInputError("lookahead depth must be >= 1")
    if eps_la < 0:
        raise InvalidInputError("eps_la must be nonnegative")
    base = lookahead(mdp, j, h - 1)
    q = q_values(mdp, base)
    noisy = q + rng.uniform(-eps_la, 0.0, size=q.shape)
    mu = np.argmax(noisy, axis=1)
    gap = float(np.max(q.max(axis=1) - q[np.arange(mdp.num_states), mu]))
    # An action whose lowered value wins is within eps_la of the true max.
    assert gap <= eps_la + 1e-12 * (1.0 + np.abs(q).max()), (gap, eps_la)
    return mu, gap


@dataclass
class IterationRecord:
    """State of the algorithm after k outer iterations.

    ``sample_indices`` is D_{k-1}, the set that produced theta_k (None at k=0).
    ``lookahead_gap`` and ``rollout_noise_norm`` are the realised Step-2 gap and
    ``||w_k||_inf``.  For the gradient-descent variant ``gd_start_gap`` and
    ``gd_end_gap`` are ``||theta_start - theta_ls||_2`` and
    ``||theta_k - theta_ls||_2`` against the exact fit on the same targets.
    """

    k: int
    theta: np.ndarray
    j: np.ndarray
    policy: np.ndarray
    sample_indices: Optional[tuple]
    err_policy: float
    delta: float
    err_iterate: float
    lookahead_gap: float = 0.0
    rollout_noise_norm: float = 0.0
    gd_start_gap: Optional[float] = None
    gd_end_gap: Optional[float] = None
    gd_alpha: Optional[float] = None


@dataclass
class IterationTrace:
    config: RunConfig
    j_star: np.ndarray
    records: list = field(default_factory=list)
    status: str = "completed"
    diverged_at: Optional[int] = None

    @property
    def thetas(self) -> np.ndarray:
        return np.array([r.theta for r in self.records])

    @property
    def values(self) -> np.ndarray:
        return np.array([r.j for r in self.records])

    @property
    def err_policy(self) -> np.ndarray:
        return np.array([r.err_policy for r in self.records])

    @property
    def err_iterate(self) -> np.ndarray:
        return np.array([r.err_iterate for r in self.records])

    @property
    def deltas(self) -> np.ndarray:
        return np.array([r.delta for r in self.records])

    @property
    def policies(self) -> list:
        return [r.policy for r in self.records]

    @property
    def sample_sets(self) -> list:
        """Realised D_0 .. D_{K-1} as :class:`SampleSet` objects."""
        fs = self.config.features
        mode = self.config.samples.mode
        return [SampleSet(fs, r.sample_indices, mode=mode) for r in self.records[1:]]

    def __len__(self):
        return len(self.records)


def _record(k, theta, fs, mdp, j_star, mu, indices, **extra) -> IterationRecord:
    j = fs.values(theta)
    j_mu = evaluate_policy_exact(mdp, mu)
    return IterationRecord(
        k=k, theta=np.array(theta), j=j, policy=np.array(mu), sample_indices=indices,
        err_policy=sup_norm(j_mu - j_star), delta=sup_norm(j - j_mu),
        err_iterate=sup_norm(j - j_star), **extra)


def _run(config: RunConfig, variant: str) -> IterationTrace:
    if config.variant != variant:
        raise ConfigError(f"config variant is {config.variant!r}, expected {variant!r}")
    mdp, fs = config.mdp, config.features
    rng_la, rng_pe, rng_ds = _streams(config.seed)
    j_star, _ = solve_optimal(mdp)
    trace = IterationTrace(config=config, j_star=j_star)

    theta = config.theta0.copy()
    mu0 = greedy_policy(mdp, fs.values(theta))
    trace.records.append(_record(0, theta, fs, mdp, j_star, mu0, None))

    fixed = None
    if config.samples.mode == "all":
        fixed = SampleSet.all_states(fs)
    elif config.samples.mode == "fixed":
        fixed = SampleSet(fs, config.samples.indices)

    for k in range(config.num_iterations):
        j_k = fs.values(theta)
        mu, gap = select_lookahead_policy(mdp, j_k, config.H, config.eps_la, rng_la)
        ds = fixed if fixed is not None else draw_sample_set(fs, config.samples.size, rng_ds)

        base = j_k if variant == "modified_ls" else lookahead(mdp, j_k, config.H - 1)
        targets = rollout_return(mdp, mu, base, config.m)
        w = rng_pe.uniform(-config.eps_pe, config.eps_pe, size=len(ds))
        targets[list(ds.indices)] += w
        noise_norm = float(np.max(np.abs(w))) if len(w) else 0.0

        extra = {}
        if variant == "gradient_descent":
            theta_ls = least_squares_fit(fs, ds, targets)
            new_theta = gradient_descent_fit(fs, ds, targets, theta, config.gamma, config.eta)
            extra = dict(gd_start_gap=float(np.linalg.norm(theta - theta_ls)),
                         gd_end_gap=float(np.linalg.norm(new_theta - theta_ls)),
                         gd_alpha=spectral_quantities(fs, ds, config.gamma).alpha_gd)
        else:
            new_theta = least_squares_fit(fs, ds, targets)
        theta = new_theta

        diverged = (not np.all(np.isfinite(theta))
                    or np.max(np.abs(theta)) > config.divergence_threshold)
        if diverged and not np.all(np.isfinite(theta)):
            trace.records.append(IterationRecord(
                k=k + 1, theta=np.array(theta), j=fs.values(theta), policy=np.array(mu),
                sample_indices=ds.indices, err_policy=float("nan"), delta=float("inf"),
                err_iterate=float("inf"), lookahead_gap=gap, rollout_noise_norm=noise_norm,
                **extra))
        else:
            trace.records.append(_record(k + 1, theta, fs, mdp, j_star, mu, ds.indices,
                                         lookahead_gap=gap, rollout_noise_norm=noise_norm,
                                         **extra))
        if diverged:
            trace.status = "diverged"
            trace.diverged_at = k + 1
            break
    return trace


def run_ls_api(config: RunConfig) -> IterationTrace:
    """Least-squares approximate policy iteration with H-step lookahead and m-step rollout."""
    return _run(config, "least_squares")


def run_gd_api(config: RunConfig) -> IterationTrace:
    """As :func:`run_ls_api` but the fit is ``eta`` gradient steps warm-started at theta_k."""
    return _run(config, "gradient_descent")


def run_modified_ls_api(config: RunConfig) -> IterationTrace:
    """As :func:`run_ls_api` but rollout targets are T_mu^m J_k rather than T_mu^m T^{H-1} J_k."""
    return _run(config, "modified_ls")


def run(config: RunConfig) -> IterationTrace:
    """Dispatch on ``config.variant``."""
    return _run(config, config.variant)

