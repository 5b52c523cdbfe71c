"""Closed-form error bounds for the approximate policy iteration variants.

Every variant satisfies a recursion ``delta_k <= beta * delta_{k-1} + tau`` on
``delta_k = ||J_k - J^{mu_k}||_inf``.  When ``beta < 1`` this gives
``delta_k <= beta^k delta_0 + tau / (1 - beta)``, and the policy error obeys

    ||J^{mu_k} - J*|| <= alpha^{kH}/(1-alpha)
                         + 2 alpha^H/(1-alpha) * k * max(alpha^H, beta)^{k-1} * delta_0
                         + (2 alpha^H mu_asym + eps_la) / ((1-alpha)(1-alpha^H))

with ``mu_asym = tau / (1 - beta)``.  The constants assume rewards in [0, 1];
calculators refuse MDPs built with ``allow_any_reward``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .algorithms import realize_sample_sets
from .errors import InvalidInputError, PreconditionViolated
from .features import (FeatureSystem, SampleSet, compute_delta_app, compute_delta_fv,
                       spectral_quantities, stepsize_threshold)
from .mdp import DEFAULT_ENUMERATION_CAP, Mdp

AUDIT_SLACK = 1e-8


@dataclass(frozen=True)
class BoundParams:
    variant: str
    delta_fv: float
    delta_app: float
    beta: float
    tau: float
    delta0: float
    eps_pe: float
    eps_la: float = 0.0
    alpha_gd: Optional[float] = None
    sigma_min_phi: Optional[float] = None
    sqrt_s_norm_phi: Optional[float] = None
    delta_fv_kind: str = "exact"
    delta_app_mode: str = "exhaustive"

    @property
    def precondition_ok(self) -> bool:
        return self.beta < 1.0

    @property
    def mu_asym(self) -> Optional[float]:
        """Asymptotic level tau / (1 - beta); None when beta >= 1."""
        if not self.precondition_ok:
            return None
        return self.tau / (1.0 - self.beta)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mu_asym"] = self.mu_asym
        out["precondition"] = "ok" if self.precondition_ok else "violated"
        return out


@dataclass(frozen=True)
class BoundCurve:
    finite_time: np.ndarray
    asymptotic: float

    @property
    def total(self) -> np.ndarray:
        return self.finite_time + self.asymptotic

    def __len__(self):
        return len(self.finite_time)


# --- coefficient formulas -----------------------------------------------------

def ls_coefficients(alpha, m, H, delta_fv, delta_app, eps_pe):
    """(beta, tau) for the least-squares variant."""
    beta = alpha ** (m + H - 1) * delta_fv
    tau = (alpha ** m + alpha ** (m + H - 1)) / (1 - alpha) * delta_fv + delta_app + delta_fv * eps_pe
    return beta, tau


def gd_coefficients(alpha, m, H, delta_fv, delta_app, eps_pe, gd_factor):
    """(beta, tau) for the gradient-descent variant.

    ``gd_factor`` is ``sqrt(|S|) ||Phi||_inf / sigma_min(Phi) * alpha_gd**eta``;
    at zero it reduces to :func:`ls_coefficients`.
    """
    beta_ls, tau_ls = ls_coefficients(alpha, m, H, delta_fv, delta_app, eps_pe)
    beta = beta_ls + gd_factor * (beta_ls + 1)
    tau = (1 + gd_factor) * tau_ls + gd_factor / (1 - alpha)
    return beta, tau


def modified_ls_coefficients(alpha, m, delta_fv, delta_app, eps_pe):
    """(beta, tau) for the variant whose targets skip the inner lookahead.

    The contraction coefficient is ``alpha^m delta_fv``; the published statement
    of this result swaps the two labels relative to its own proof.
    """
    beta = alpha ** m * delta_fv
    tau = alpha ** m * delta_fv / (1 - alpha) + delta_app + delta_fv * eps_pe
    return beta, tau


# --- calculators --------------------------------------------------------------

def _require_unit_rewards(mdp: Mdp) -> None:
    if mdp.allow_any_reward:
        raise InvalidInputError("bounds assume rewards in [0, 1]; this MDP allows arbitrary rewards")


def _as_list(sample_sets):
    return [sample_sets] if isinstance(sample_sets, SampleSet) else list(sample_sets)


def _shared(mdp, fs, sample_sets, m, H, eps_pe, delta0, delta_app_mode, policies, cap):
    _require_unit_rewards(mdp)
    if m < 1 or H < 1:
        raise InvalidInputError("m and H must be >= 1")
    if eps_pe < 0 or delta0 < 0:
        raise InvalidInputError("eps_pe and delta0 must be nonnegative")
    sets = _as_list(sample_sets)
    delta_fv = compute_delta_fv(fs, sets)
    delta_app = compute_delta_app(mdp, fs, sets, mode=delta_app_mode, policies=policies, cap=cap)
    kind = "empirical" if any(s.mode == "resample" for s in sets) else "exact"
    return sets, delta_fv, delta_app, kind


def params_ls(mdp: Mdp, fs: FeatureSystem, sample_sets, m: int, H: int, eps_pe: float,
              delta0: float, delta_app_mode: str = "exhaustive", policies=None, eps_la: float = 0.0,
              cap: int = DEFAULT_ENUMERATION_CAP) -> BoundParams:
    _, delta_fv, delta_app, kind = _shared(mdp, fs, sample_sets, m, H, eps_pe, delta0,
                                           delta_app_mode, policies, cap)
    beta, tau = ls_coefficients(mdp.discount, m, H, delta_fv, delta_app, eps_pe)
    return BoundParams("least_squares", delta_fv, delta_app, beta, tau, delta0, eps_pe, eps_la,
                       delta_fv_kind=kind, delta_app_mode=delta_app_mode)


def params_gd(mdp: Mdp, fs: FeatureSystem, sample_sets, m: int, H: int, eps_pe: float,
              delta0: float, gamma: float, eta: int, delta_app_mode: str = "exhaustive",
              policies=None, eps_la: float = 0.0,
              cap: int = DEFAULT_ENUMERATION_CAP) -> BoundParams:
    if eta < 1 or gamma <= 0:
        raise InvalidInputError("need eta >= 1 and gamma > 0")
    sets, delta_fv, delta_app, kind = _shared(mdp, fs, sample_sets, m, H, eps_pe, delta0,
                                              delta_app_mode, policies, cap)
    spec = spectral_quantities(fs, sets, gamma)
    amplification = math.sqrt(fs.num_states) * fs.norm_inf / spec.sigma_min_phi
    gd_factor = amplification * spec.alpha_gd ** eta
    beta, tau = gd_coefficients(mdp.discount, m, H, delta_fv, delta_app, eps_pe, gd_factor)
    return BoundParams("gradient_descent", delta_fv, delta_app, beta, tau, delta0, eps_pe, eps_la,
                       alpha_gd=spec.alpha_gd, sigma_min_phi=spec.sigma_min_phi,
                       sqrt_s_norm_phi=amplification, delta_fv_kind=kind,
                       delta_app_mode=delta_app_mode)


def params_modified_ls(mdp: Mdp, fs: FeatureSystem, sample_sets, m: int, H: int, eps_pe: float,
                       delta0: float, delta_app_mode: str = "exhaustive", policies=None,
                       eps_la: float = 0.0, cap: int = DEFAULT_ENUMERATION_CAP) -> BoundParams:
    _, delta_fv, delta_app, kind = _shared(mdp, fs, sample_sets, m, H, eps_pe, delta0,
                                           delta_app_mode, policies, cap)
    beta, tau = modified_ls_coefficients(mdp.discount, m, delta_fv, delta_app, eps_pe)
    return BoundParams("modified_ls", delta_fv, delta_app, beta, tau, delta0, eps_pe, eps_la,
                       delta_fv_kind=kind, delta_app_mode=delta_app_mode)


def asymptotic_component(params: BoundParams, alpha: float, H: int, eps_la: float) -> float:
    if not params.precondition_ok:
        raise PreconditionViolated(f"beta = {params.beta:.6g} >= 1; the bound is vacuous")
    return (2 * alpha ** H * params.mu_asym + eps_la) / ((1 - alpha) * (1 - alpha ** H))


def proposition1_curve(params: BoundParams, alpha: float, H: int, eps_la: float,
                       num_iterations: int, form: str = "theorem") -> BoundCurve:
    """Bound on ||J^{mu_k} - J*||_inf for k = 0 .. num_iterations.

    ``form="theorem"`` uses ``max(alpha^H, beta)`` in the finite-time term;
    ``form="proposition"`` uses the looser ``max(alpha^(H-1), beta)``.
    """
    if form == "theorem":
        rate = max(alpha ** H, params.beta)
    elif form == "proposition":
        rate = max(alpha ** (H - 1), params.beta)
    else:
        raise InvalidInputError(f"unknown form {form!r}")
    asym = asymptotic_component(params, alpha, H, eps_la)
    k = np.arange(num_iterations + 1, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        growth = np.where(k > 0, k * rate ** np.maximum(k - 1, 0), 0.0)
    finite = alpha ** (k * H) / (1 - alpha) + 2 * alpha ** H / (1 - alpha) * growth * params.delta0
    return BoundCurve(finite, asym)


def proposition3_jk_bound(params: BoundParams, alpha: float, m: int, H: int, eps_la: float) -> float:
    """limsup bound on ||J_k - J*||_inf for the least-squares variant."""
    rate = params.delta_fv * alpha ** (m + H - 1)
    if rate >= 1:
        raise PreconditionViolated(f"delta_fv * alpha^(m+H-1) = {rate:.6g} >= 1")
    asym = asymptotic_component(params, alpha, H, eps_la)
    num = (1 + params.delta_fv * alpha ** m) * asym + params.delta_app + params.delta_fv * eps_la
    return num / (1 - rate)


# --- assumption checks --------------------------------------------------------

@dataclass
class Check:
    name: str
    label: str
    passed: bool
    lhs: Optional[float] = None
    rhs: Optional[float] = None
    relation: str = ">"

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        if self.lhs is None:
            return f"{self.label}: {verdict}"
        return f"{self.label}: {verdict} ({self.lhs:.6g} {self.relation} {self.rhs:.6g} required)"


@dataclass
class AssumptionReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name):
        return any(c.name == name for c in self.checks)

    def lines(self) -> list:
        return [c.line() for c in self.checks]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [asdict(c) for c in self.checks]}


def check_assumptions(mdp: Mdp, fs: FeatureSystem, sample_sets, config) -> AssumptionReport:
    """Evaluate every precondition the bounds rely on; never raises on failure.

    ``sample_sets`` may be None to use the sets ``config`` would realise.
    """
    report = AssumptionReport()
    if sample_sets is None:
        sample_sets = realize_sample_sets(config)
    sets = _as_list(sample_sets)
    d = fs.d
    ranks = [int(np.linalg.matrix_rank(fs.phi[list(s.indices)])) for s in sets]
    report.checks.append(Check("rank", "Assumption 1 (rank)", min(ranks) == d,
                               float(min(ranks)), float(d), "=="))
    report.checks.append(Check("noise", "Assumption 1 (noise bound)",
                               bool(np.isfinite(config.eps_pe) and config.eps_pe >= 0)))
    report.checks.append(Check("reward_range", "Rewards in [0, 1]", not mdp.allow_any_reward))

    alpha = mdp.discount
    delta_fv = compute_delta_fv(fs, sets)
    log_inv = math.log(1 / alpha)
    variant = config.variant
    if variant == "least_squares":
        report.checks.append(Check("horizon", "Theorem 1 (m + H - 1 threshold)",
                                   config.m + config.H - 1 > math.log(delta_fv) / log_inv,
                                   float(config.m + config.H - 1), math.log(delta_fv) / log_inv))
    elif variant == "modified_ls":
        report.checks.append(Check("horizon", "Modified LS (m threshold)",
                                   config.m > math.log(delta_fv) / log_inv,
                                   float(config.m), math.log(delta_fv) / log_inv))
    else:
        thr = math.log(2 * delta_fv) / log_inv
        report.checks.append(Check("horizon", "Theorem 2 (m + H - 1 threshold)",
                                   config.m + config.H - 1 > thr,
                                   float(config.m + config.H - 1), thr))
        gamma_max = stepsize_threshold(sets)
        report.checks.append(Check("stepsize", "Assumption 2 (stepsize)", config.gamma < gamma_max,
                                   float(config.gamma), gamma_max, "<"))
        spec = spectral_quantities(fs, sets, config.gamma)
        amplification = 3 * math.sqrt(fs.num_states) * fs.norm_inf / spec.sigma_min_phi
        if spec.alpha_gd >= 1:
            need = math.inf
        elif spec.alpha_gd == 0:
            need = 0.0
        else:
            need = math.log(amplification) / math.log(1 / spec.alpha_gd)
        report.checks.append(Check("gd_steps", "Assumption 2 (gradient steps)", config.eta > need,
                                   float(config.eta), need))
    return report


# --- trace audit --------------------------------------------------------------

def params_for_trace(trace, delta_app_mode: str = "auto", cap: int = DEFAULT_ENUMERATION_CAP):
    """Bound parameters matching a finished run's variant, sample sets and delta_0."""
    cfg = trace.config
    sets = trace.sample_sets or realize_sample_sets(cfg, 1)
    if delta_app_mode == "auto":
        delta_app_mode = "exhaustive" if cfg.mdp.num_policies <= cap else "encountered"
    common = dict(delta_app_mode=delta_app_mode, policies=trace.policies, eps_la=cfg.eps_la, cap=cap)
    delta0 = trace.records[0].delta
    if cfg.variant == "least_squares":
        return params_ls(cfg.mdp, cfg.features, sets, cfg.m, cfg.H, cfg.eps_pe, delta0, **common)
    if cfg.variant == "modified_ls":
        return params_modified_ls(cfg.mdp, cfg.features, sets, cfg.m, cfg.H, cfg.eps_pe, delta0,
                                  **common)
    return params_gd(cfg.mdp, cfg.features, sets, cfg.m, cfg.H, cfg.eps_pe, delta0, cfg.gamma,
                     cfg.eta, **common)


def audit_trace(trace, delta_app_mode: str = "auto", form: str = "theorem",
                cap: int = DEFAULT_ENUMERATION_CAP) -> dict:
    """Compare a run against its bounds; the result is JSON-serialisable."""
    cfg = trace.config
    mdp = cfg.mdp
    alpha = mdp.discount
    out = {
        "variant": cfg.variant,
        "status": trace.status,
        "diverged_at": trace.diverged_at,
        "num_records": len(trace),
        "notes": [],
    }
    if cfg.variant == "modified_ls":
        out["notes"].append("beta/tau follow the proof (beta = alpha^m delta_fv); "
                            "the published statement swaps the two labels")
    if mdp.allow_any_reward:
        out.update(assumptions=None, params=None, iterations=[], verdict="not-applicable")
        out["notes"].append("bounds assume rewards in [0, 1]")
        return out

    sets = trace.sample_sets
    report = check_assumptions(mdp, cfg.features, sets or realize_sample_sets(cfg, 1), cfg)
    params = params_for_trace(trace, delta_app_mode, cap)
    out["assumptions"] = report.to_dict()
    out["assumption_lines"] = report.lines()
    out["params"] = params.to_dict()
    measured = trace.err_policy

    if not params.precondition_ok:
        out["iterations"] = [{"k": r.k, "measured": r.err_policy, "bound": None}
                             for r in trace.records]
        out["bound_holds"] = None
        out["verdict"] = "precondition-violated"
        return out

    curve = proposition1_curve(params, alpha, cfg.H, cfg.eps_la, len(trace) - 1, form=form)
    bound = curve.total
    out["asymptotic_component"] = curve.asymptotic
    out["iterations"] = [{"k": r.k, "measured": r.err_policy, "bound": float(b)}
                         for r, b in zip(trace.records, bound)]
    holds = bool(np.all(measured <= bound + AUDIT_SLACK))
    out["bound_holds"] = holds

    deltas = trace.deltas
    if len(deltas) > 1:
        rec_ok = deltas[1:] <= params.beta * deltas[:-1] + params.tau + AUDIT_SLACK
        out["delta_recursion_holds"] = bool(np.all(rec_ok))

    if cfg.variant == "least_squares" and len(trace) > 4:
        jk_bound = proposition3_jk_bound(params, alpha, cfg.m, cfg.H, cfg.eps_la)
        tail = jk_tail_max(trace)
        out["iterate_bound"] = {"bound": jk_bound, "tail_max": tail,
                                "holds": bool(tail <= jk_bound + AUDIT_SLACK)}

    if not report.passed:
        verdict = "assumptions-failed"
    else:
        verdict = "pass" if holds else "fail"
    if params.delta_app_mode == "encountered":
        verdict = "advisory-" + verdict
        out["notes"].append("delta_app estimated from encountered policies (lower estimate)")
    out["verdict"] = verdict
    return out


def jk_tail_max(trace, fraction: float = 0.25) -> float:
    """Max of ||J_k - J*||_inf over the last ``fraction`` of the records."""
    err = trace.err_iterate
    n = max(1, int(math.ceil(len(err) * fraction)))
    return float(err[-n:].max())

