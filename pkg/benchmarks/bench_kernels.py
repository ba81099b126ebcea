"""Time the scan kernels under the compiled and the NumPy backends.

Usage: python3 benchmarks/bench_kernels.py [--res 32 64 128] [--repeat 3]

Each diagnostic is run with the kernels of one backend patched into
``roughsys.kernels``; results from the two backends are compared before the
timings are printed.
"""
import argparse
import time

import numpy as np

from roughsys import _kernels_py, kernels
from roughsys import diagnostics as D
from roughsys.coefficients import lame_tensor
from roughsys.grid import ConeSpec, strip
from roughsys.profiles import random_smooth_boundary
from roughsys.solver import extend_by_zero, solve_dirichlet

NAMES = ("ball_reduce", "cone_max", "cone_sum", "stopping_time")


def backends():
    out = {"python": _kernels_py}
    try:
        from roughsys import _kernels
        out["cython"] = _kernels
    except ImportError:
        print("compiled extension not built; timing the NumPy backend only")
    return out


def use(module):
    for name in NAMES:
        setattr(kernels, name, getattr(module, name))


def workload(res):
    dom = strip(2, res)
    lam, mu = np.full(dom.node_shape, 1.0), np.full(dom.node_shape, 3.0)
    co = lame_tensor(dom, lam, mu, 0.5 * (mu - lam), 2)
    u, _ = solve_dirichlet(dom, co, random_smooth_boundary(dom, 0, 2))
    ext = extend_by_zero(u, 2 * dom.h)
    cone = ConeSpec(1.0)
    w = D.l2_average(ext, top_pad=True)
    nu = 0.5 * D.ntmax(w, cone).values.max()
    return {
        "ball averages": lambda: D.l2_average(ext, top_pad=True).w,
        "Ntilde (cone max)": lambda: D.ntmax(w, cone).values,
        "S (cone sum)": lambda: D.square_function(u, cone).values,
        "stopping time": lambda: D.stopping_time(w, nu, cone).values,
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--res", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    mods = backends()
    original = {name: getattr(kernels, name) for name in NAMES}
    print(f"{'res':>5} {'kernel':<20}" + "".join(f"{b:>12}" for b in mods) + f"{'speedup':>10}")
    try:
        for res in args.res:
            jobs = workload(res)
            for label, fn in jobs.items():
                times, outs = {}, {}
                for name, mod in mods.items():
                    use(mod)
                    times[name], outs[name] = best_of(fn, args.repeat)
                if len(outs) == 2:
                    a, b = outs.values()
                    if not np.allclose(a, b, rtol=1e-12, atol=1e-14):
                        raise SystemExit(f"backends disagree on {label} at res {res}")
                speed = times["python"] / times["cython"] if "cython" in times else float("nan")
                cells = "".join(f"{t * 1e3:>10.2f}ms" for t in times.values())
                print(f"{res:>5} {label:<20}{cells}{speed:>9.1f}x")
    finally:
        use(type("orig", (), original))


if __name__ == "__main__":
    main()
