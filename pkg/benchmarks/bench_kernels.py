"""Time the numba kernels against the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is fixed at
import time by HCAST_DISABLE_NUMBA. Usage:

    python3 benchmarks/bench_kernels.py [--repeat 20]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, timeit
import numpy as np
from hcast import kernels

repeat = int(sys.argv[1])
rng = np.random.default_rng(0)
cases = {
    "moving_average 512x96x7 k=25": (kernels.moving_average, (rng.normal(size=(512, 96, 7)), 25)),
    "moving_average 64x720x1 k=25": (kernels.moving_average, (rng.normal(size=(64, 720, 1)), 25)),
    "window_arrays 17420x7 S=T=96": (kernels.window_arrays, (rng.normal(size=(17420, 7)), 96, 96)),
    "window_arrays 4000x1 S=T=24": (kernels.window_arrays, (rng.normal(size=(4000, 1)), 24, 24)),
}
out = {"backend": kernels.backend(), "times": {}}
for name, (fn, args) in cases.items():
    fn(*args)  # compile / warm caches
    out["times"][name] = min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))
print(json.dumps(out))
"""


def run_backend(disable, repeat):
    env = dict(os.environ, HCAST_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    fast, slow = run_backend(False, args.repeat), run_backend(True, args.repeat)
    print(f"{'case':34s} {fast['backend']:>10s} {slow['backend']:>10s} {'speedup':>8s}")
    for name, t in fast["times"].items():
        s = slow["times"][name]
        print(f"{name:34s} {t * 1e3:8.2f}ms {s * 1e3:8.2f}ms {s / t:7.2f}x")


if __name__ == "__main__":
    main()
