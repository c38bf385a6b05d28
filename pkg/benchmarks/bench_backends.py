"""Compare the compiled trajectory kernel against the pure-Python fallback.

Usage: python benchmarks/bench_backends.py [rounds ...]
"""

import sys
import time

import numpy as np

from routesignal import _kernels_py
from routesignal.config import reference_config
from routesignal.dynamics import sample_states

try:
    from routesignal import _kernels
except ImportError:
    _kernels = None


def prepare(rounds: int, seed: int = 7):
    exp = reference_config()
    cfg, policy, phat = exp.game, exp.policy, exp.defection_prior
    pe = phat.effective()
    pi_rows = policy.pi
    delta = pi_rows @ pe - pi_rows
    cvec = pi_rows - pi_rows @ pe
    seq = sample_states(cfg, rounds, seed=seed)
    state_idx = np.asarray([cfg.state_index(s) for s in seq], dtype=np.int64)
    return pi_rows, delta, cvec, cfg.coeffs, state_idx, 84.0, 84.0


def bench(fn, args, repeats: int = 5) -> tuple[float, tuple]:
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> int:
    sizes = [int(x) for x in sys.argv[1:]] or [10_000, 100_000, 1_000_000]
    print(f"{'rounds':>10}  {'pure (s)':>10}  {'compiled (s)':>12}  {'speedup':>8}  identical")
    for rounds in sizes:
        args = prepare(rounds)
        t_pure, out_pure = bench(_kernels_py.trajectory_loop, args)
        if _kernels is None:
            print(f"{rounds:>10}  {t_pure:>10.4f}  {'n/a':>12}  {'n/a':>8}  n/a")
            continue
        t_ext, out_ext = bench(_kernels.trajectory_loop, args)
        identical = all(
            np.array_equal(a, b) if isinstance(a, np.ndarray) else a == b
            for a, b in zip(out_pure, out_ext)
        )
        print(
            f"{rounds:>10}  {t_pure:>10.4f}  {t_ext:>12.4f}  "
            f"{t_pure / t_ext:>7.1f}x  {identical}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
