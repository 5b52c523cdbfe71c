"""The two-state system on which least-squares approximate PI diverges.

With features (1, 2) and targets bootstrapped from the higher-valued state,
each fit multiplies theta by 1.2 * alpha^(m + H - 1).  Short rollouts blow
up; longer ones contract.
"""
from approxpi.algorithms import run_ls_api
from approxpi.bounds import check_assumptions
from approxpi.counterexample import (CounterexampleSpec, counterexample_config, theta_recursion,
                                     verify_dichotomy)

for m in (1, 2, 3):
    report = verify_dichotomy(CounterexampleSpec(alpha=0.9, m=m), k_max=500)
    where = f" at k = {report.diverged_at}" if report.diverged_at else ""
    print(f"m = {m}: {report.summary():<24} run {report.status}{where}")

spec = CounterexampleSpec(alpha=0.9, m=1)
trace = run_ls_api(counterexample_config(spec, 10))
exact = theta_recursion(spec, 10)
reduced = theta_recursion(spec, 10, convention="reduced")
print("\n k   run theta      3.5*1.08^k-2.5   1.08^k")
for k in range(11):
    print(f"{k:2d}  {trace.thetas[k, 0]:12.6f}  {exact[k]:14.6f}  {reduced[k]:9.6f}")

cfg = counterexample_config(spec)
for m, H in [(1, 1), (2, 1), (1, 2)]:
    line = check_assumptions(cfg.mdp, cfg.features, None, cfg.replace(m=m, H=H))["horizon"].line()
    print(f"m = {m}, H = {H}: {line}")
