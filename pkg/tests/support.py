"""Shared builders and independent reference implementations for the tests."""
import math

import numpy as np

from approxpi.experiments import RandomMdpParams, generate_random_mdp
from approxpi.features import FeatureSystem, SampleSet, compute_delta_fv, inf_norm
from approxpi.mdp import Mdp


def random_mdp(seed, num_states=6, num_actions=3, discount=0.9):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    P /= P.sum(axis=2, keepdims=True)
    r = rng.uniform(size=(num_states, num_actions))
    return Mdp(P, r, discount)


def random_problem(seed, num_states=8, num_actions=2, d=3, discount=0.9):
    return generate_random_mdp(RandomMdpParams(num_states, num_actions, d, discount=discount,
                                               seed=seed))


def rescale_for_gd(fs, ds):
    """Scale Phi so that half the stepsize threshold puts gamma * lambda_max at exactly 1.

    With A = Phi_D^T Phi_D the threshold scales like s^-4 and the eigenvalues
    like s^2, so s^2 = lambda_max / (2 d ||A||_inf^2) does it.  The bound
    constants are unchanged by the rescaling.
    """
    A = ds.gram
    s2 = np.linalg.eigvalsh(A)[-1] / (2 * fs.d * inf_norm(A) ** 2)
    scaled = FeatureSystem(fs.phi * math.sqrt(s2))
    return scaled, SampleSet(scaled, ds.indices, mode=ds.mode)


def horizon_above(threshold):
    """Smallest integer strictly above ``threshold``."""
    return int(math.floor(threshold)) + 1


def ls_threshold(fs, ds, alpha, factor=1.0):
    return math.log(factor * compute_delta_fv(fs, [ds])) / math.log(1 / alpha)


# --- independent references (plain loops, no package operators) ------------------

def ref_q(P, r, alpha, j):
    S, A = r.shape
    q = np.empty((S, A))
    for s in range(S):
        for a in range(A):
            q[s, a] = r[s, a] + alpha * sum(P[s, a, t] * j[t] for t in range(S))
    return q


def ref_modified_pi(mdp, j0, H, m, iterations):
    """Tabular modified PI: mu greedy w.r.t. T^{H-1} J, then J <- T_mu^m T^{H-1} J."""
    P, r, alpha = np.asarray(mdp.transition), np.asarray(mdp.reward), mdp.discount
    S = r.shape[0]
    j = np.array(j0, dtype=float)
    out = [j.copy()]
    for _ in range(iterations):
        base = j.copy()
        for _ in range(H - 1):
            base = ref_q(P, r, alpha, base).max(axis=1)
        q = ref_q(P, r, alpha, base)
        mu = [int(np.argmax(q[s])) for s in range(S)]
        v = base
        for _ in range(m):
            qv = ref_q(P, r, alpha, v)
            v = np.array([qv[s, mu[s]] for s in range(S)])
        j = v
        out.append(j.copy())
    return np.array(out)


def ref_policy_value(mdp, mu, sweeps=4000):
    """J^mu by repeated application of T_mu (slow, independent of the direct solve)."""
    P, r, alpha = np.asarray(mdp.transition), np.asarray(mdp.reward), mdp.discount
    S = r.shape[0]
    j = np.zeros(S)
    for _ in range(sweeps):
        j = np.array([r[s, mu[s]] + alpha * P[s, mu[s]] @ j for s in range(S)])
    return j
