"""Run a small seeded sweep and summarise the manifest.

Writes trace CSVs, audit JSONs and manifest.json under demos/sweep_out/.
"""
import json
from pathlib import Path

from approxpi.experiments import parse_spec, run_experiment

here = Path(__file__).parent
spec = parse_spec({
    "seed": 2024,
    "output_dir": "sweep_out",
    "random": {"num_states": 10, "num_actions": 2, "d": 4, "seed": 3},
    "runs": [
        {"variant": "least_squares", "num_iterations": 60, "eps_la": 0.02, "eps_pe": 0.02},
        {"variant": "modified_ls", "num_iterations": 60},
    ],
    "sweep": {"H": [1, 3], "m": [2, 12]},
}, base_dir=here)

manifest = run_experiment(spec, jobs=2)
for cell in manifest["cells"]:
    s = cell["settings"]
    print(f"{cell['index']:2d} {s['variant']:<14} H={s['H']} m={s['m']:<3} "
          f"{cell['status']:<10} {cell['verdict']}")
print(json.dumps({k: v for k, v in manifest.items() if k != "cells"}))
