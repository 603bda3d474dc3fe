"""Compiled vs pure-Python kernels: timings and agreement.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from varietyfd import _kernels_py
from varietyfd.poly import parse_polynomial

try:
    from varietyfd import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def cases(rng: np.random.Generator):
    F = parse_polynomial("(x^2 + y^2 + z^2)^2 - 4*(x^2 + y^2) + 3*x*y*z - z^5", ["x", "y", "z"])
    c, e = F._coeffs, F._exps
    x = rng.normal(size=3)
    pts = rng.normal(size=(20000, 3))
    n = 20480
    lower, upper = rng.uniform(-1, 0, n), rng.uniform(-1, 0, n)
    diag = 2.5 + rng.uniform(0, 1, n)
    rhs = rng.normal(size=n)
    return {
        "poly_eval (1 point)": ("poly_eval", (c, e, x), 2000),
        "poly_eval_many (20k points)": ("poly_eval_many", (c, e, pts), 5),
        "cyclic_tridiag_solve (n=20480)": ("cyclic_tridiag_solve", (lower, diag, upper, rhs), 5),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    impls = {"python": _kernels_py}
    if _compiled is not None:
        impls["cython"] = _compiled
    print(f"{'kernel':<34}" + "".join(f"{k:>14}" for k in impls) + f"{'speedup':>10}{'max diff':>12}")
    for label, (name, call_args, number) in cases(rng).items():
        times, outs = {}, {}
        for key, mod in impls.items():
            fn = getattr(mod, name)
            outs[key] = np.asarray(fn(*call_args))
            t = min(timeit.repeat(lambda: fn(*call_args), number=number, repeat=args.repeat))
            times[key] = t / number
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        diff = float(np.max(np.abs(outs["python"] - outs["cython"]))) if "cython" in outs else 0.0
        print(f"{label:<34}" + "".join(f"{times[k] * 1e3:>12.3f}ms" for k in impls)
              + f"{speed:>9.1f}x{diff:>12.2e}")


if __name__ == "__main__":
    main()
