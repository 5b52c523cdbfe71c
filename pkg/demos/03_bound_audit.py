"""Compare a noisy least-squares run with its error bound, iteration by iteration."""
import math

from approxpi.algorithms import RunConfig, SampleSpec, run
from approxpi.bounds import audit_trace
from approxpi.experiments import RandomMdpParams, generate_random_mdp
from approxpi.features import SampleSet, compute_delta_fv

mdp, fs = generate_random_mdp(RandomMdpParams(num_states=8, num_actions=2, d=3, seed=4))
ds = SampleSet(fs, (0, 2, 3, 5, 7))
threshold = math.log(compute_delta_fv(fs, [ds])) / math.log(1 / mdp.discount)
m = math.floor(threshold) + 1
print(f"delta_fv = {compute_delta_fv(fs, [ds]):.3f}, need m + H - 1 > {threshold:.2f}, using m = {m}")

cfg = RunConfig(mdp, fs, SampleSpec("fixed", ds.indices), H=1, m=m, eps_la=0.05, eps_pe=0.05,
                num_iterations=40, seed=1)
audit = audit_trace(run(cfg))
for line in audit["assumption_lines"]:
    print(" ", line)
p = audit["params"]
print(f"beta = {p['beta']:.4f}  tau = {p['tau']:.3f}  delta_app = {p['delta_app']:.3f}")
print("\n k  measured   bound")
for it in audit["iterations"][::5]:
    print(f"{it['k']:2d}  {it['measured']:8.4f}  {it['bound']:8.3f}")
print("verdict:", audit["verdict"])
print("iterate bound:", audit["iterate_bound"])
