"""VM throughput with the numba kernels vs the pure-numpy fallback.

Each mode runs in its own interpreter because the switch is read at import
time (EVOMIR_DISABLE_JIT).  Both modes must report identical cycle counts.

    python benchmarks/bench_vm.py [--repeat N]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
from evomir.bench import gen_sw_suite, gen_grid_suite, load_kernel, run_case
from evomir._jit import JIT_ENABLED

repeat = int(sys.argv[1])
cases = [
    ("sw_naive L=16-24", "sw_naive", gen_sw_suite(2, (16, 24), seed=1, heldout_pairs=0)),
    ("sw_tuned L=32-48", "sw_tuned", gen_sw_suite(2, (32, 48), seed=1, heldout_pairs=0, kernel="sw_tuned")),
    ("diffusion 16x16", "grid_diffusion_checked",
     gen_grid_suite((16, 16), 4, (0,), kernel="grid_diffusion_checked", heldout_dims=(17, 17))),
]
rows = []
for label, kernel, suite in cases:
    prog = load_kernel(kernel)
    run_case(prog, suite.fitness[0], suite.validator)  # compile / warm caches
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        cycles = [run_case(prog, c, suite.validator).cycles for c in suite.fitness]
        best = min(best, time.perf_counter() - t)
    rows.append({"case": label, "seconds": best, "cycles": cycles})
print(json.dumps({"jit": JIT_ENABLED, "rows": rows}))
"""


def run_mode(disable_jit: bool, repeat: int) -> dict:
    env = dict(os.environ, EVOMIR_DISABLE_JIT="1" if disable_jit else "0")
    out = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    jit = run_mode(False, args.repeat)
    plain = run_mode(True, 1)
    print(f"{'case':<20} {'numba s':>10} {'numpy s':>10} {'speedup':>9}  cycles equal")
    for a, b in zip(jit["rows"], plain["rows"]):
        same = a["cycles"] == b["cycles"]
        print(f"{a['case']:<20} {a['seconds']:>10.4f} {b['seconds']:>10.3f} "
              f"{b['seconds'] / a['seconds']:>8.1f}x  {same}")
        if not same:
            sys.exit("cycle counts differ between the two paths")


if __name__ == "__main__":
    main()
