import json
import math

import numpy as np
import pytest

from approxpi.algorithms import RunConfig, SampleSpec, run
from approxpi.bounds import (BoundParams, asymptotic_component, audit_trace, check_assumptions,
                             gd_coefficients, jk_tail_max, ls_coefficients,
                             modified_ls_coefficients, params_gd, params_ls,
                             params_modified_ls, proposition1_curve, proposition3_jk_bound)
from approxpi.counterexample import (CounterexampleSpec, build_counterexample_mdp,
                                     counterexample_config, counterexample_features)
from approxpi.errors import InvalidInputError, PreconditionViolated
from approxpi.features import FeatureSystem, SampleSet, stepsize_threshold
from approxpi.mdp import Mdp
from support import random_mdp, random_problem

A = 0.9


def counterexample_parts():
    mdp = build_counterexample_mdp(CounterexampleSpec())
    fs = counterexample_features()
    return mdp, fs, SampleSet.all_states(fs)


def tabular_parts(seed=0, n=5):
    mdp = random_mdp(seed, n, 2)
    fs = FeatureSystem.identity(n)
    return mdp, fs, SampleSet.all_states(fs)


class TestCoefficients:

    def test_counterexample_ls_violated(self):
        mdp, fs, ds = counterexample_parts()
        p = params_ls(mdp, fs, [ds], m=1, H=1, eps_pe=0.0, delta0=0.0)
        assert p.beta == pytest.approx(1.08, abs=1e-12)
        assert not p.precondition_ok and p.mu_asym is None
        assert p.to_dict()["precondition"] == "violated"
        with pytest.raises(PreconditionViolated):
            asymptotic_component(p, A, 1, 0.0)

    def test_tabular_ls(self):
        mdp, fs, ds = tabular_parts()
        p = params_ls(mdp, fs, [ds], m=3, H=2, eps_pe=0.0, delta0=0.0)
        assert p.delta_fv == pytest.approx(1.0) and p.delta_app <= 1e-12
        assert p.beta == pytest.approx(0.6561, abs=1e-12)
        assert p.tau == pytest.approx(13.851, abs=1e-9)
        assert p.mu_asym == pytest.approx(13.851 / (1 - 0.6561), abs=1e-8)

    def test_tau_linear_in_eps_pe(self):
        mdp, fs = random_problem(1)
        ds = SampleSet(fs, (0, 2, 4, 6))
        p0 = params_ls(mdp, fs, [ds], 4, 2, 0.0, 1.0)
        p1 = params_ls(mdp, fs, [ds], 4, 2, 0.25, 1.0)
        assert p1.tau - p0.tau == pytest.approx(p0.delta_fv * 0.25, rel=1e-12)

    def test_gd_large_eta_recovers_ls(self):
        mdp, fs, ds = counterexample_parts()
        ls = params_ls(mdp, fs, [ds], 3, 1, 0.1, 2.0)
        gd = params_gd(mdp, fs, [ds], 3, 1, 0.1, 2.0, gamma=0.1, eta=10 ** 6)
        assert (gd.beta, gd.tau) == (ls.beta, ls.tau)

    def test_gd_single_step_counterexample(self):
        mdp, fs, ds = counterexample_parts()
        gd = params_gd(mdp, fs, [ds], 1, 1, 0.0, 0.0, gamma=0.1, eta=1)
        assert gd.alpha_gd == pytest.approx(0.5)
        expected = 1.08 + (math.sqrt(2) * 2 / math.sqrt(5)) * 0.5 * (1.08 + 1)
        assert gd.beta == pytest.approx(expected, abs=1e-12)

    def test_gd_never_below_ls(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            args = (rng.uniform(0.5, 0.99), int(rng.integers(1, 8)), int(rng.integers(1, 4)),
                    rng.uniform(1, 3), rng.uniform(0, 2), rng.uniform(0, 0.5))
            b, t = ls_coefficients(*args)
            bg, tg = gd_coefficients(*args, gd_factor=rng.uniform(0, 1))
            assert bg >= b and tg >= t

    def test_modified(self):
        beta, tau = modified_ls_coefficients(0.9, 4, 1.0, 0.0, 0.0)
        assert beta == pytest.approx(0.6561) and tau == pytest.approx(6.561)
        mdp, fs, ds = counterexample_parts()
        p1 = params_modified_ls(mdp, fs, [ds], 1, 1, 0.0, 0.0)
        p5 = params_modified_ls(mdp, fs, [ds], 1, 5, 0.0, 0.0)
        assert p1.beta == pytest.approx(1.08) and not p1.precondition_ok
        assert (p1.beta, p1.tau) == (p5.beta, p5.tau)

    def test_refuses_unbounded_rewards(self):
        mdp = Mdp(np.ones((2, 1, 2)) / 2, [[2.0], [0.0]], 0.9, allow_any_reward=True)
        fs = FeatureSystem.identity(2)
        with pytest.raises(InvalidInputError):
            params_ls(mdp, fs, [SampleSet.all_states(fs)], 1, 1, 0.0, 0.0)

    def test_bad_arguments(self):
        mdp, fs, ds = counterexample_parts()
        with pytest.raises(InvalidInputError):
            params_ls(mdp, fs, [ds], 0, 1, 0.0, 0.0)
        with pytest.raises(InvalidInputError):
            params_gd(mdp, fs, [ds], 1, 1, 0.0, 0.0, gamma=0.1, eta=0)


class TestCurves:

    def test_pure_exponential(self):
        p = BoundParams("least_squares", 1.0, 0.0, 0.5, 0.0, 0.0, 0.0)
        curve = proposition1_curve(p, A, 2, 0.0, 10)
        k = np.arange(11)
        assert np.allclose(curve.total, A ** (2 * k) / (1 - A), rtol=1e-14)
        assert curve.finite_time[0] == pytest.approx(1 / (1 - A))
        assert len(curve) == 11

    def test_k0_has_no_growth_term(self):
        p = BoundParams("least_squares", 1.0, 0.0, 0.5, 1.0, 3.0, 0.0)
        assert proposition1_curve(p, A, 1, 0.0, 3).finite_time[0] == pytest.approx(1 / (1 - A))

    def test_proposition_form_is_looser(self):
        p = BoundParams("least_squares", 1.0, 0.0, 0.3, 1.0, 3.0, 0.0)
        thm = proposition1_curve(p, A, 3, 0.1, 30)
        prop = proposition1_curve(p, A, 3, 0.1, 30, form="proposition")
        assert np.all(prop.total >= thm.total)
        with pytest.raises(InvalidInputError):
            proposition1_curve(p, A, 3, 0.1, 30, form="lemma")

    def test_asymptotic_formula(self):
        p = BoundParams("least_squares", 1.0, 0.0, 0.5, 2.0, 0.0, 0.0)
        expected = (2 * A ** 2 * 4.0 + 0.3) / ((1 - A) * (1 - A ** 2))
        assert asymptotic_component(p, A, 2, 0.3) == pytest.approx(expected)

    def test_iterate_bound_zero_sources(self):
        mdp, fs, ds = tabular_parts(3)
        m, H = 3, 2
        p = params_ls(mdp, fs, [ds], m, H, 0.0, 1.0)
        asym = asymptotic_component(p, A, H, 0.0)
        expected = (1 + A ** m) * asym / (1 - A ** (m + H - 1))
        assert proposition3_jk_bound(p, A, m, H, 0.0) == pytest.approx(expected, rel=1e-12)
        assert asym > 0

    def test_iterate_bound_counterexample(self):
        mdp, fs, ds = counterexample_parts()
        p = params_ls(mdp, fs, [ds], 1, 1, 0.0, 0.0)
        with pytest.raises(PreconditionViolated):
            proposition3_jk_bound(p, A, 1, 1, 0.0)

    def test_tabular_runs_respect_bounds(self):
        for seed in range(5):
            mdp, fs, ds = tabular_parts(seed, 6)
            trace = run(RunConfig(mdp, fs, H=2, m=2, theta0=np.full(6, 3.0), num_iterations=60))
            p = params_ls(mdp, fs, [ds], 2, 2, 0.0, trace.records[0].delta)
            curve = proposition1_curve(p, A, 2, 0.0, 60)
            assert np.all(trace.err_policy <= curve.total + 1e-8)
            assert jk_tail_max(trace) <= proposition3_jk_bound(p, A, 2, 2, 0.0) + 1e-8


class TestAssumptions:

    def test_tabular_threshold_zero(self):
        mdp, fs, ds = tabular_parts()
        rep = check_assumptions(mdp, fs, [ds], RunConfig(mdp, fs))
        assert rep.passed
        assert rep["horizon"].rhs == pytest.approx(0.0, abs=1e-12)

    def test_counterexample_threshold(self):
        mdp, fs, ds = counterexample_parts()
        thr = math.log(1.2) / math.log(1 / 0.9)
        for m, H, ok in [(1, 1, False), (2, 1, True), (1, 2, True)]:
            rep = check_assumptions(mdp, fs, [ds], RunConfig(mdp, fs, m=m, H=H))
            assert rep["horizon"].passed is ok
            assert rep["horizon"].rhs == pytest.approx(thr, abs=1e-12)
            assert "Theorem 1" in rep["horizon"].line()

    def test_stepsize_boundary_fails(self):
        mdp, fs = random_problem(2)
        ds = SampleSet.all_states(fs)
        gmax = stepsize_threshold([ds])
        at = RunConfig(mdp, fs, variant="gradient_descent", eta=10, gamma=gmax)
        below = at.replace(gamma=0.5 * gmax)
        assert not check_assumptions(mdp, fs, [ds], at)["stepsize"].passed
        assert check_assumptions(mdp, fs, [ds], below)["stepsize"].passed
        line = check_assumptions(mdp, fs, [ds], at.replace(gamma=2 * gmax))["stepsize"].line()
        assert line.startswith("Assumption 2 (stepsize): FAIL")

    def test_gd_horizon_uses_doubled_delta(self):
        mdp, fs, ds = counterexample_parts()
        cfg = RunConfig(mdp, fs, variant="gradient_descent", eta=5, gamma=0.1, m=3)
        rep = check_assumptions(mdp, fs, [ds], cfg)
        assert rep["horizon"].rhs == pytest.approx(math.log(2.4) / math.log(1 / 0.9))
        assert rep["gd_steps"].rhs == pytest.approx(
            math.log(3 * math.sqrt(2) * 2 / math.sqrt(5)) / math.log(2))

    def test_modified_threshold(self):
        mdp, fs, ds = counterexample_parts()
        rep = check_assumptions(mdp, fs, [ds], RunConfig(mdp, fs, variant="modified_ls", m=1, H=4))
        assert not rep["horizon"].passed
        assert "stepsize" not in rep

    def test_sets_realised_from_config(self):
        mdp, fs = random_problem(4)
        cfg = RunConfig(mdp, fs, SampleSpec("resample", size=4), m=8, num_iterations=6, seed=2)
        rep = check_assumptions(mdp, fs, None, cfg)
        assert rep["rank"].passed


class TestAudit:

    def test_tabular_pass(self):
        mdp, fs, _ = tabular_parts(1)
        trace = run(RunConfig(mdp, fs, H=1, m=3, num_iterations=30, eps_la=0.05, eps_pe=0.05))
        audit = audit_trace(trace)
        assert audit["verdict"] == "pass"
        assert audit["delta_recursion_holds"] and audit["iterate_bound"]["holds"]
        assert len(audit["iterations"]) == len(trace)
        json.dumps(audit)

    def test_counterexample_precondition(self):
        trace = run(counterexample_config(CounterexampleSpec(), 300))
        audit = audit_trace(trace)
        assert audit["verdict"] == "precondition-violated"
        assert audit["status"] == "diverged"
        assert all(it["bound"] is None for it in audit["iterations"])

    def test_modified_note(self):
        mdp, fs, _ = tabular_parts(2)
        audit = audit_trace(run(RunConfig(mdp, fs, variant="modified_ls", m=2, num_iterations=5)))
        assert any("swaps" in n for n in audit["notes"])

    def test_not_applicable_for_unbounded_rewards(self):
        mdp = Mdp(np.ones((2, 1, 2)) / 2, [[2.0], [0.0]], 0.9, allow_any_reward=True)
        audit = audit_trace(run(RunConfig(mdp, FeatureSystem.identity(2), num_iterations=3)))
        assert audit["verdict"] == "not-applicable"

    def test_encountered_mode_is_advisory(self):
        mdp, fs = random_problem(0)
        trace = run(RunConfig(mdp, fs, m=8, num_iterations=10))
        audit = audit_trace(trace, delta_app_mode="encountered")
        assert audit["verdict"].startswith("advisory-")
        exhaustive = audit_trace(trace)
        assert audit["params"]["delta_app"] <= exhaustive["params"]["delta_app"] + 1e-15
