"""Compare the compiled kernels with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--n 1000000] [--repeat 5]

Prints the best wall time per kernel for each backend, the speed-up, and
the largest absolute difference between the two outputs.
"""

import argparse
import timeit

import numpy as np

from lamai.constellation import make_standard
from lamai.impairment import complex_normal
from lamai.kernels import _pykernels

try:
    from lamai.kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _cases(n, rng):
    out = []
    for name, n_t in [("QPSK", 0.1), ("16QAM", 0.05), ("64QAM", 0.0)]:
        c = make_standard(name)
        x = c.sample(n, rng) + np.sqrt(n_t) * complex_normal(rng, n)
        zeta = complex_normal(rng, n)
        out.append((name, n_t, c, x, zeta))
    return out


def _time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def _diff(a, b):
    if isinstance(a, tuple):
        return max(_diff(u, v) for u, v in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=complex) - np.asarray(b, dtype=complex))))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels not available; build with `pip install -e .`")
        return 1

    rng = np.random.default_rng(args.seed)
    s2 = 0.2
    print(f"{'kernel':<12}{'prior':<8}{'n_t':>6}{'python [ms]':>14}{'cython [ms]':>14}{'speed-up':>10}{'max diff':>11}")
    for name, n_t, c, x, zeta in _cases(args.n, rng):
        z = x + np.sqrt(s2) * zeta
        calls = {
            "denoise": lambda k: k.denoise(z, s2, c.points, c.log_priors, n_t),
            "psi_mse": lambda k: k.psi_mse(x, zeta, s2, c.points, c.log_priors, n_t),
            "map_decide": lambda k: k.map_decide(z, n_t + s2, c.points, c.log_priors),
        }
        for kname, call in calls.items():
            tp = _time(lambda: call(_pykernels), args.repeat)
            tc = _time(lambda: call(_ckernels), args.repeat)
            d = _diff(call(_pykernels), call(_ckernels))
            print(f"{kname:<12}{name:<8}{n_t:>6.2f}{1e3 * tp:>14.1f}{1e3 * tc:>14.1f}{tp / tc:>10.1f}{d:>11.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
