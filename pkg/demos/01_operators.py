"""Bellman operators on a small random MDP.

Walks through T, T_mu, greedy policies, lookahead and rollouts, and checks
the optimal values against brute-force enumeration of every policy.
"""
import numpy as np

from approxpi.experiments import RandomMdpParams, generate_random_mdp
from approxpi.mdp import (apply_T, brute_force_optimal, evaluate_policy_exact, greedy_policy,
                          lookahead, rollout_return, solve_optimal, sup_norm)

mdp, _ = generate_random_mdp(RandomMdpParams(num_states=6, num_actions=3, d=1, seed=0))
alpha = mdp.discount
j_star, mu_star = solve_optimal(mdp)
print("J*      ", np.round(j_star, 4))
print("policy  ", mu_star)

j_bf, _ = brute_force_optimal(mdp)
print(f"brute force over {mdp.num_policies} policies agrees to {sup_norm(j_bf - j_star):.1e}")

# T contracts toward J* at rate alpha per application
j = np.zeros(mdp.num_states)
for h in range(1, 6):
    err = sup_norm(lookahead(mdp, j, h) - j_star)
    print(f"||T^{h} 0 - J*|| = {err:8.4f}   alpha^{h} ||0 - J*|| = {alpha ** h * sup_norm(j_star):8.4f}")

# m-step rollouts of a fixed policy approach its value
mu = greedy_policy(mdp, j)
j_mu = evaluate_policy_exact(mdp, mu)
for m in (1, 5, 25, 100):
    print(f"m = {m:3d}: ||T_mu^m 0 - J^mu|| = {sup_norm(rollout_return(mdp, mu, j, m) - j_mu):.2e}")

print("Bellman residual at J*:", sup_norm(apply_T(mdp, j_star) - j_star))
