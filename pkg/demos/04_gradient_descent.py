"""Gradient-descent fits in place of exact least squares.

Features are rescaled so that half the admissible stepsize makes the largest
Gram eigenvalue contract in one step; with enough inner steps the run is
indistinguishable from the exact-fit run.
"""
import math

import numpy as np

from approxpi.algorithms import RunConfig, run_gd_api, run_ls_api
from approxpi.features import FeatureSystem, SampleSet, inf_norm, spectral_quantities, stepsize_threshold
from approxpi.experiments import RandomMdpParams, generate_random_mdp

mdp, fs = generate_random_mdp(RandomMdpParams(num_states=8, num_actions=2, d=3, seed=11))
A = SampleSet.all_states(fs).gram
scale = math.sqrt(np.linalg.eigvalsh(A)[-1] / (2 * fs.d * inf_norm(A) ** 2))
fs = FeatureSystem(fs.phi * scale)
ds = SampleSet.all_states(fs)
gamma = stepsize_threshold([ds]) / 2
print(f"gamma = {gamma:.4g}, alpha_GD = {spectral_quantities(fs, ds, gamma).alpha_gd:.4f}")

ls = run_ls_api(RunConfig(mdp, fs, H=2, m=8, num_iterations=30))
for eta in (5, 20, 100, 2000):
    cfg = RunConfig(mdp, fs, variant="gradient_descent", H=2, m=8, eta=eta, gamma=gamma,
                    num_iterations=30)
    gd = run_gd_api(cfg)
    gap = np.max(np.abs(gd.values - ls.values))
    print(f"eta = {eta:5d}: max_k ||J_k(GD) - J_k(LS)|| = {gap:.2e}, final policy error "
          f"{gd.err_policy[-1]:.4f}")
