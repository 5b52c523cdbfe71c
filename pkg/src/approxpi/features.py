"""Linear value-function approximation over a fixed feature matrix.

A :class:`FeatureSystem` holds the ``|S| x d`` matrix Phi.  A
:class:`SampleSet` is the subset D of states whose targets enter the
least-squares fit; constructing one checks that Phi_D has full column rank.
The reconstruction map taking targets on D to the full estimate
``Phi (Phi_D^T Phi_D)^{-1} Phi_D^T`` is called the projector below.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import AssumptionViolation, GradientDivergenceError, InvalidInputError, NumericalError
from .mdp import DEFAULT_ENUMERATION_CAP, Mdp, enumerate_policies, evaluate_policy_exact

RANK_RTOL = 1e-10
SAMPLE_MODES = ("all", "fixed", "resample")


def _full_column_rank(mat: np.ndarray) -> bool:
    if mat.shape[0] < mat.shape[1]:
        return False
    sv = np.linalg.svd(mat, compute_uv=False)
    return sv[0] > 0 and sv[-1] > RANK_RTOL * sv[0]


def inf_norm(mat) -> float:
    """Induced infinity norm: the largest absolute row sum."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    return float(np.abs(mat).sum(axis=1).max())


@dataclass(frozen=True, eq=False)
class FeatureSystem:
    """Feature matrix Phi with one row per state."""

    phi: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.ndim == 1:
            phi = phi[:, None]
        if phi.ndim != 2:
            raise InvalidInputError(f"phi must be a matrix, got shape {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise InvalidInputError("phi must be finite")
        if phi.shape[1] > phi.shape[0]:
            raise InvalidInputError(f"feature dimension {phi.shape[1]} exceeds |S| = {phi.shape[0]}")
        if not _full_column_rank(phi):
            raise InvalidInputError("phi must have full column rank")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def num_states(self) -> int:
        return self.phi.shape[0]

    @property
    def d(self) -> int:
        return self.phi.shape[1]

    @property
    def norm_inf(self) -> float:
        return inf_norm(self.phi)

    @property
    def sigma_min(self) -> float:
        """Smallest singular value of Phi, via the d x d Gram matrix."""
        lam = np.linalg.eigvalsh(self.phi.T @ self.phi)
        return float(np.sqrt(max(lam[0], 0.0)))

    def values(self, theta) -> np.ndarray:
        return self.phi @ np.asarray(theta, dtype=float)

    @classmethod
    def identity(cls, num_states: int) -> "FeatureSystem":
        return cls(np.eye(num_states))


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Ordered distinct state indices D at which targets are fitted.

    Raises :class:`AssumptionViolation` if Phi_D is rank deficient.
    """

    features: FeatureSystem
    indices: tuple
    mode: str = "fixed"
    phi_d: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.mode not in SAMPLE_MODES:
            raise InvalidInputError(f"unknown sample mode {self.mode!r}")
        idx = tuple(int(i) for i in np.asarray(self.indices).ravel())
        if len(set(idx)) != len(idx):
            raise InvalidInputError("sample indices must be distinct")
        if idx and (min(idx) < 0 or max(idx) >= self.features.num_states):
            raise InvalidInputError(f"sample indices must lie in [0, {self.features.num_states})")
        phi_d = self.features.phi[list(idx)]
        if not idx or not _full_column_rank(phi_d):
            raise AssumptionViolation(
                f"features at sampled states {idx} do not have rank {self.features.d}")
        phi_d.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "phi_d", phi_d)

    @classmethod
    def all_states(cls, features: FeatureSystem) -> "SampleSet":
        return cls(features, tuple(range(features.num_states)), mode="all")

    @property
    def gram(self) -> np.ndarray:
        return self.phi_d.T @ self.phi_d

    def __len__(self):
        return len(self.indices)


def draw_sample_set(features: FeatureSystem, size: int, rng: np.random.Generator,
                    max_attempts: int = 100) -> SampleSet:
    """Uniform draw without replacement, redrawn until Phi_D has full rank."""
    if not features.d <= size <= features.num_states:
        raise InvalidInputError(f"sample size must lie in [{features.d}, {features.num_states}]")
    for _ in range(max_attempts):
        idx = np.sort(rng.choice(features.num_states, size=size, replace=False))
        try:
            return SampleSet(features, tuple(idx), mode="resample")
        except AssumptionViolation:
            continue
    raise AssumptionViolation(f"no full-rank sample set of size {size} in {max_attempts} draws")


def _targets_on(ds: SampleSet, targets) -> np.ndarray:
    t = np.asarray(targets, dtype=float)
    if t.shape != (ds.features.num_states,):
        raise InvalidInputError(
            f"targets must have shape ({ds.features.num_states},), got {t.shape}")
    return t[list(ds.indices)]


def least_squares_fit(fs: FeatureSystem, ds: SampleSet, targets) -> np.ndarray:
    """argmin_theta sum_{i in D} ((Phi theta)(i) - targets(i))^2 via the normal equations."""
    if ds.features is not fs:
        _check_same_features(fs, ds)
    t_d = _targets_on(ds, targets)
    A = ds.gram
    b = ds.phi_d.T @ t_d
    try:
        theta = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise AssumptionViolation(f"normal equations are singular: {exc}") from exc
    resid = np.max(np.abs(A @ theta - b))
    scale = np.max(np.abs(A)) * np.max(np.abs(theta)) + np.max(np.abs(b))
    if not np.all(np.isfinite(theta)) or resid > 1e-10 * max(scale, 1e-300):
        raise NumericalError(f"normal-equation residual {resid:.3e} too large")
    return theta


def _check_same_features(fs: FeatureSystem, ds: SampleSet) -> None:
    if ds.features.phi.shape != fs.phi.shape or not np.array_equal(ds.features.phi, fs.phi):
        raise InvalidInputError("sample set was built for a different feature system")


def projector_matrix(fs: FeatureSystem, ds: SampleSet) -> np.ndarray:
    """Explicit |S| x |D| matrix Phi (Phi_D^T Phi_D)^{-1} Phi_D^T."""
    _check_same_features(fs, ds)
    return fs.phi @ np.linalg.solve(ds.gram, ds.phi_d.T)


def projector_apply(fs: FeatureSystem, ds: SampleSet, targets) -> np.ndarray:
    """Full estimate Phi theta fitted to ``targets`` on D; entries off D are ignored."""
    return fs.phi @ least_squares_fit(fs, ds, targets)


def compute_delta_fv(fs: FeatureSystem, sample_sets: Sequence[SampleSet]) -> float:
    """sup over the given sample sets of the infinity norm of the projector.

    For resampled D this is the sup over the realised sets only.
    """
    if isinstance(sample_sets, SampleSet):
        sample_sets = [sample_sets]
    return max(inf_norm(projector_matrix(fs, ds)) for ds in _distinct(sample_sets))


def _distinct(sample_sets):
    seen = {}
    for ds in sample_sets:
        seen.setdefault(ds.indices, ds)
    if not seen:
        raise InvalidInputError("need at least one sample set")
    return list(seen.values())


def compute_delta_app(mdp: Mdp, fs: FeatureSystem, sample_sets, mode: str = "exhaustive",
                      policies=None, cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """sup over policies and sample sets of ||M J^mu - J^mu||_inf.

    ``mode="exhaustive"`` enumerates every deterministic policy (refusing above
    ``cap``).  ``mode="encountered"`` takes the sup over ``policies`` only and is
    therefore a lower estimate.
    """
    if isinstance(sample_sets, SampleSet):
        sample_sets = [sample_sets]
    if mode == "exhaustive":
        pols = enumerate_policies(mdp, cap)
    elif mode == "encountered":
        if policies is None:
            raise InvalidInputError("encountered mode needs the realised policies")
        pols = {tuple(int(a) for a in p): None for p in policies}
        pols = [np.array(p) for p in pols]
    else:
        raise InvalidInputError(f"unknown delta_app mode {mode!r}")
    values = np.column_stack([evaluate_policy_exact(mdp, mu) for mu in pols])
    worst = 0.0
    for ds in _distinct(sample_sets):
        M = projector_matrix(fs, ds)
        resid = M @ values[list(ds.indices)] - values
        worst = max(worst, float(np.abs(resid).max()))
    return worst


class SpectralQuantities(NamedTuple):
    sigma_min_phi: float
    alpha_gd: float
    eigenvalues: list


def spectral_quantities(fs: FeatureSystem, ds, gamma: float) -> SpectralQuantities:
    """Eigenvalues of Phi_D^T Phi_D, the GD contraction factor and sigma_min(Phi).

    ``ds`` may be one sample set or a sequence; ``alpha_gd`` is then the sup
    over sets of ``max_i |1 - gamma * lambda_i|`` and ``eigenvalues`` holds one
    ascending array per distinct set.
    """
    if gamma <= 0:
        raise InvalidInputError("gamma must be positive")
    sets = [ds] if isinstance(ds, SampleSet) else _distinct(ds)
    eigs = [np.linalg.eigvalsh(s.gram) for s in sets]
    if not all(np.all(np.isfinite(e)) for e in eigs):
        raise NumericalError("non-finite eigenvalues")
    alpha_gd = max(float(np.max(np.abs(1.0 - gamma * e))) for e in eigs)
    out = eigs[0] if isinstance(ds, SampleSet) else eigs
    return SpectralQuantities(fs.sigma_min, alpha_gd, out)


def stepsize_threshold(sample_sets) -> float:
    """Largest admissible stepsize 1 / (d * inf_k ||Phi_D^T Phi_D||_inf^2); the bound is strict."""
    if isinstance(sample_sets, SampleSet):
        sample_sets = [sample_sets]
    sets = _distinct(sample_sets)
    d = sets[0].features.d
    return 1.0 / (d * min(inf_norm(s.gram) for s in sets) ** 2)


def gradient_descent_fit(fs: FeatureSystem, ds: SampleSet, targets, theta_start, gamma: float,
                         eta: int) -> np.ndarray:
    """Exactly ``eta`` full-batch gradient steps on the sampled least-squares cost."""
    if gamma <= 0:
        raise InvalidInputError("gamma must be positive")
    if eta < 1:
        raise InvalidInputError("eta must be >= 1")
    _check_same_features(fs, ds)
    t_d = _targets_on(ds, targets)
    A = ds.gram
    b = ds.phi_d.T @ t_d
    theta = np.array(theta_start, dtype=float)
    if theta.shape != (fs.d,):
        raise InvalidInputError(f"theta_start must have shape ({fs.d},)")
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, eta + 1):
            theta = theta - gamma * (A @ theta - b)
            if not np.all(np.isfinite(theta)):
                raise GradientDivergenceError(step)
    return theta


# --- file format -------------------------------------------------------------

def features_to_dict(fs: FeatureSystem) -> dict:
    return {"d": fs.d, "phi": fs.phi.tolist()}


def features_from_dict(data: dict) -> FeatureSystem:
    unknown = set(data) - {"d", "phi"}
    if unknown:
        raise InvalidInputError(f"unknown feature keys: {sorted(unknown)}")
    phi = np.asarray(data["phi"], dtype=float)
    if phi.ndim != 2 or phi.shape[1] != int(data["d"]):
        raise InvalidInputError(f"phi rows must have d = {data['d']} entries")
    return FeatureSystem(phi)


def load_features(path) -> FeatureSystem:
    with open(path) as fh:
        return features_from_dict(json.load(fh))


def save_features(fs: FeatureSystem, path) -> None:
    Path(path).write_text(json.dumps(features_to_dict(fs), indent=1) + "\n")
