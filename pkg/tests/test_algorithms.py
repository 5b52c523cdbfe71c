import numpy as np
import pytest

from approxpi.algorithms import (RunConfig, SampleSpec, realize_sample_sets, run, run_gd_api,
                                 run_ls_api, run_modified_ls_api, select_lookahead_policy)
from approxpi.counterexample import CounterexampleSpec, counterexample_config
from approxpi.errors import AssumptionViolation, ConfigError, InvalidInputError
from approxpi.features import FeatureSystem, SampleSet
from approxpi.mdp import Mdp, apply_T, greedy_policy, lookahead, rollout_return, sup_norm
from support import (horizon_above, ls_threshold, random_mdp, random_problem, ref_modified_pi,
                     ref_q)


def tabular(mdp, **kw):
    return RunConfig(mdp=mdp, features=FeatureSystem.identity(mdp.num_states), **kw)


class TestConfig:

    def test_defaults(self):
        mdp, fs = random_problem(0)
        cfg = RunConfig(mdp, fs)
        assert np.array_equal(cfg.theta0, np.zeros(3))
        assert cfg.samples.mode == "all"

    @pytest.mark.parametrize("kw", [
        dict(variant="newton"), dict(H=0), dict(m=0), dict(eps_la=-1.0), dict(eps_pe=-0.1),
        dict(eta=5), dict(gamma=0.1), dict(variant="gradient_descent"),
        dict(variant="gradient_descent", eta=0, gamma=0.1), dict(theta0=[1.0]),
        dict(theta0=[np.nan, 0.0, 0.0]), dict(seed=-1), dict(seed=2**64),
        dict(samples=SampleSpec("resample", size=2)),
    ])
    def test_invalid(self, kw):
        mdp, fs = random_problem(0)
        with pytest.raises(ConfigError):
            RunConfig(mdp, fs, **kw)

    def test_sample_spec_fields(self):
        with pytest.raises(ConfigError):
            SampleSpec("fixed")
        with pytest.raises(ConfigError):
            SampleSpec("all", size=3)
        with pytest.raises(ConfigError):
            SampleSpec("resample", indices=(1, 2))
        with pytest.raises(ConfigError):
            SampleSpec("random")

    def test_rank_deficient_fixed_set(self):
        fs = FeatureSystem(np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]]))
        with pytest.raises(AssumptionViolation):
            RunConfig(random_mdp(0, 3, 2), fs, samples=SampleSpec("fixed", (0, 1)))

    def test_state_count_mismatch(self):
        with pytest.raises(ConfigError):
            RunConfig(random_mdp(0, 4, 2), FeatureSystem.identity(3))

    def test_variant_mismatch(self):
        mdp, fs = random_problem(0)
        with pytest.raises(ConfigError):
            run_gd_api(RunConfig(mdp, fs))


class TestLookahead:

    def test_zero_noise_is_greedy(self):
        mdp = random_mdp(1, 5, 3)
        j = np.linspace(0, 2, 5)
        rng = np.random.default_rng(0)
        for h in (1, 2, 3):
            mu, gap = select_lookahead_policy(mdp, j, h, 0.0, rng)
            assert np.array_equal(mu, greedy_policy(mdp, lookahead(mdp, j, h - 1)))
            assert gap == 0.0

    def test_noise_cannot_flip_large_gap(self):
        mdp = Mdp(np.ones((1, 2, 1)), [[0.5, 0.8]], 0.9)
        rng = np.random.default_rng(0)
        for _ in range(200):
            mu, _ = select_lookahead_policy(mdp, [0.0], 1, 0.1, rng)
            assert mu[0] == 1

    def test_counterexample_picks_b(self):
        cfg = counterexample_config(CounterexampleSpec())
        mu, _ = select_lookahead_policy(cfg.mdp, [0.7, 1.4], 1, 0.0, np.random.default_rng(0))
        assert np.array_equal(mu, [1, 1])

    def test_gap_within_budget(self):
        rng = np.random.default_rng(4)
        for seed in range(30):
            mdp = random_mdp(seed, 6, 4)
            j = rng.normal(size=6)
            mu, gap = select_lookahead_policy(mdp, j, 2, 0.2, rng)
            base = lookahead(mdp, j, 1)
            q = ref_q(np.asarray(mdp.transition), np.asarray(mdp.reward), mdp.discount, base)
            realised = np.max(apply_T(mdp, base) - q[np.arange(6), mu])
            assert realised == pytest.approx(gap, abs=1e-14)
            assert gap <= 0.2

    def test_bad_arguments(self):
        mdp = random_mdp(0, 3, 2)
        with pytest.raises(InvalidInputError):
            select_lookahead_policy(mdp, np.zeros(3), 0, 0.0, np.random.default_rng(0))
        with pytest.raises(InvalidInputError):
            select_lookahead_policy(mdp, np.zeros(3), 1, -0.1, np.random.default_rng(0))


class TestLeastSquaresRun:

    @pytest.mark.parametrize("H,m", [(1, 1), (1, 4), (2, 3), (3, 1)])
    def test_tabular_matches_reference(self, H, m):
        mdp = random_mdp(7, 6, 3)
        j0 = np.random.default_rng(0).uniform(0, 5, 6)
        trace = run_ls_api(tabular(mdp, H=H, m=m, theta0=j0, num_iterations=15))
        ref = ref_modified_pi(mdp, j0, H, m, 15)
        assert np.max(np.abs(trace.values - ref)) <= 1e-12

    def test_record_contents(self):
        mdp, fs = random_problem(2)
        trace = run_ls_api(RunConfig(mdp, fs, H=2, m=6, num_iterations=5))
        assert len(trace) == 6
        r0 = trace.records[0]
        assert r0.k == 0 and r0.sample_indices is None
        assert np.array_equal(r0.policy, greedy_policy(mdp, fs.values(r0.theta)))
        for r in trace.records:
            assert r.err_iterate == pytest.approx(sup_norm(r.j - trace.j_star))
            assert np.allclose(r.j, fs.values(r.theta))
        assert trace.records[3].sample_indices == tuple(range(8))

    def test_completes_above_threshold(self):
        for seed in range(5):
            mdp, fs = random_problem(seed)
            ds = SampleSet(fs, (0, 1, 2, 5, 6))
            m = horizon_above(ls_threshold(fs, ds, mdp.discount))
            trace = run_ls_api(RunConfig(mdp, fs, SampleSpec("fixed", ds.indices), m=m,
                                         num_iterations=60))
            assert trace.status == "completed"
            assert np.all(np.isfinite(trace.thetas))

    def test_realised_noise_within_bounds(self):
        mdp, fs = random_problem(3)
        trace = run_ls_api(RunConfig(mdp, fs, H=2, m=5, eps_la=0.3, eps_pe=0.05,
                                     num_iterations=40, seed=11))
        gaps = [r.lookahead_gap for r in trace.records[1:]]
        noise = [r.rollout_noise_norm for r in trace.records[1:]]
        assert max(gaps) <= 0.3 and max(noise) <= 0.05
        assert max(noise) > 0

    def test_seeded_determinism(self):
        mdp, fs = random_problem(3)
        cfg = RunConfig(mdp, fs, SampleSpec("resample", size=5), m=5, eps_la=0.1, eps_pe=0.1,
                        num_iterations=20, seed=99)
        a, b = run(cfg), run(cfg)
        assert np.array_equal(a.thetas, b.thetas)
        c = run(cfg.replace(seed=100))
        assert not np.array_equal(a.thetas, c.thetas)

    def test_resampled_sets_match_realised(self):
        mdp, fs = random_problem(5)
        cfg = RunConfig(mdp, fs, SampleSpec("resample", size=4), m=6, num_iterations=12, seed=3)
        trace = run(cfg)
        planned = [s.indices for s in realize_sample_sets(cfg)]
        assert [s.indices for s in trace.sample_sets] == planned
        assert len(set(planned)) > 1

    def test_divergence_guard(self):
        trace = run_ls_api(counterexample_config(CounterexampleSpec(), 1000))
        assert trace.status == "diverged"
        assert trace.diverged_at == len(trace) - 1
        assert abs(trace.thetas[-1, 0]) > 1e8
        assert np.all(np.abs(trace.thetas[:-1, 0]) <= 1e8)

    def test_zero_iterations(self):
        mdp, fs = random_problem(0)
        trace = run(RunConfig(mdp, fs, num_iterations=0))
        assert len(trace) == 1 and trace.status == "completed"


class TestModifiedRun:

    def test_h1_identical_to_ls(self):
        mdp, fs = random_problem(4)
        cfg = RunConfig(mdp, fs, m=4, eps_la=0.05, eps_pe=0.05, num_iterations=25, seed=5)
        ls = run_ls_api(cfg)
        mod = run_modified_ls_api(cfg.replace(variant="modified_ls"))
        assert np.array_equal(ls.thetas, mod.thetas)

    def test_tabular_reference(self):
        mdp = random_mdp(12, 5, 3)
        j0 = np.zeros(5)
        H, m = 3, 2
        trace = run_modified_ls_api(tabular(mdp, variant="modified_ls", H=H, m=m, theta0=j0,
                                            num_iterations=20))
        P, r, a = np.asarray(mdp.transition), np.asarray(mdp.reward), mdp.discount
        j = j0.copy()
        for k in range(1, 21):
            base = j
            for _ in range(H - 1):
                base = ref_q(P, r, a, base).max(axis=1)
            mu = ref_q(P, r, a, base).argmax(axis=1)
            for _ in range(m):
                j = ref_q(P, r, a, j)[np.arange(5), mu]
            assert np.max(np.abs(trace.values[k] - j)) <= 1e-12

    def test_completes_above_threshold(self):
        mdp, fs = random_problem(6)
        ds = SampleSet(fs, (0, 2, 3, 4, 7))
        m = horizon_above(ls_threshold(fs, ds, mdp.discount))
        cfg = RunConfig(mdp, fs, SampleSpec("fixed", ds.indices), variant="modified_ls", H=3,
                        m=m, num_iterations=60)
        assert run(cfg).status == "completed"


class TestGradientRun:

    def test_tiny_step_barely_moves(self):
        mdp, fs = random_problem(1)
        gamma = 1e-12
        trace = run_gd_api(RunConfig(mdp, fs, variant="gradient_descent", eta=1, gamma=gamma,
                                     m=3, num_iterations=1))
        theta0 = trace.thetas[0]
        targets = rollout_return(mdp, trace.records[1].policy, fs.values(theta0), 3)
        grad = fs.phi.T @ (fs.phi @ theta0 - targets)
        step = np.linalg.norm(trace.thetas[1] - theta0)
        assert step <= gamma * np.linalg.norm(grad) * (1 + 1e-6)
        rec = trace.records[1]
        assert rec.gd_start_gap == pytest.approx(rec.gd_end_gap, rel=1e-9)

    def test_records_contraction_data(self):
        mdp, fs = random_problem(2)
        trace = run_gd_api(RunConfig(mdp, fs, variant="gradient_descent", eta=20, gamma=0.01,
                                     m=6, num_iterations=5))
        for r in trace.records[1:]:
            assert r.gd_end_gap <= r.gd_alpha ** 20 * r.gd_start_gap + 1e-9
