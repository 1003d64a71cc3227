"""Compare the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints per-call timings for each kernel plus one end-to-end number (a
full rocket-imitate episode), and checks that both backends return the
same values on the benchmark inputs.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from twostage import _kernels_py

try:
    from twostage import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def kernel_cases(rng):
    px = np.cumsum(rng.uniform(-0.02, 0.02, 2000))
    py = np.cumsum(rng.uniform(0.0, 0.02, 2000))
    r, v, b = rng.normal(size=(3, 4, 2048))
    term = (rng.random((4, 2048)) < 0.01).astype(np.uint8)
    trunc = np.zeros((4, 2048), np.uint8)
    last = rng.normal(size=4)
    dyn = (0.1, 5.0, 0.3, 1.0, -2.0, 0.5, 50.0, -10.0, 0.0, 0.0, -2.5, 2.5, 1.0, 1.0, 0.02)
    return {
        "wrap_angle": (lambda k: k.wrap_angle(7.5), 200_000),
        "rocket_dynamics": (lambda k: k.rocket_dynamics(*dyn), 100_000),
        "nearest_in_window (26 pts)": (lambda k: k.nearest_in_window(px, py, 0.1, 5.0, 500, 525), 50_000),
        "nearest_in_window (2000 pts)": (lambda k: k.nearest_in_window(px, py, 0.1, 5.0, 0, 1999), 2_000),
        "gae (4 x 2048)": (lambda k: k.gae(r, v, term, trunc, b, last, 0.99, 0.95), 50),
    }


def episode_time(pure: bool) -> float:
    """Seconds per imitation episode, measured in a fresh interpreter so the
    backend is selected at import time exactly as in normal use."""
    code = (
        "import timeit, numpy as np\n"
        "from twostage.envs import make_env\n"
        "from twostage.envs.rocket import RocketWorldConfig, sparse_reward\n"
        "from twostage.envs.rocket_plan import ReferenceTrajectory\n"
        "w = RocketWorldConfig.no_obstacles()\n"
        "ys = np.linspace(2, 26, 49); pos = np.column_stack([np.zeros(49), ys])\n"
        "ref = ReferenceTrajectory(0.05, w.goal, w.layout_hash(), np.arange(49) * 0.05, pos, np.zeros(49),\n"
        "                          np.array([sparse_reward(p, w) for p in pos]))\n"
        "env = make_env('rocket-imitate', world=w, reference=ref)\n"
        "act = np.array([0.8, 0.0])\n"
        "def run():\n"
        "    env.reset()\n"
        "    while True:\n"
        "        r = env.step(act)\n"
        "        if r.terminated or r.truncated: break\n"
        "print(min(timeit.repeat(run, number=5, repeat=3)) / 5)\n"
    )
    env = dict(os.environ, TWOSTAGE_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels_c is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for name, (fn, n) in kernel_cases(rng).items():
        a, b = fn(_kernels_py), fn(_kernels_c)
        same = np.array_equal(a, b) if isinstance(a, np.ndarray) else a == b
        if not same:
            print(f"{name}: backends disagree ({a!r} vs {b!r})")
            return 1
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=n, repeat=args.repeat)) / n
        t_c = min(timeit.repeat(lambda: fn(_kernels_c), number=n, repeat=args.repeat)) / n
        print(f"{name:32s} {t_py * 1e6:10.2f}us {t_c * 1e6:10.2f}us {t_py / t_c:7.1f}x")
    t_py, t_c = episode_time(True), episode_time(False)
    print(f"{'rocket-imitate episode (500 st)':32s} {t_py * 1e3:10.2f}ms {t_c * 1e3:10.2f}ms {t_py / t_c:7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
