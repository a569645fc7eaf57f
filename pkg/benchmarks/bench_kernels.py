"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Times the MOSFET stamp and the dense solve on rectifier-sized inputs, then a
full 10 MHz rectifier transient (3 periods x 1000 steps) with each backend.
"""

import argparse
import time
import timeit

import numpy as np

from cmrect import _fallback, kernels
from cmrect.engine import Circuit, run_transient
from cmrect.netlist import Sin
from cmrect.rectifier import build_rectifier

try:
    from cmrect import _kernels
except ImportError:
    _kernels = None


def stamp_inputs(ckt: Circuit, rng: np.random.Generator):
    size = 1 + ckt.n + len(ckt.vsources)
    x = np.zeros(size)
    x[1: 1 + ckt.n] = rng.uniform(-1.5, 1.5, ckt.n)
    m = len(ckt.mosfets)
    return x, size, m


def bench_stamp(backend, ckt, x, size, m, number):
    G = np.zeros((size, size))
    rhs = np.zeros(size)
    ids = np.empty(m)
    reg = np.empty(m, dtype=np.int8)
    sw = np.empty(m, dtype=np.int8)

    def call():
        backend.mos_stamp(ckt.sign, ckt.beta, ckt.vto, ckt.gamma, ckt.phi, ckt.lam,
                          ckt.nd, ckt.ng, ckt.ns, ckt.nb, 1e-12, x, G, rhs, ids, reg, sw)

    return min(timeit.repeat(call, number=number, repeat=5)) / number


def bench_solve(backend, n, rng, number):
    a = rng.normal(size=(n, n)) + n * np.eye(n)
    b = rng.normal(size=n)
    return min(timeit.repeat(lambda: backend.solve(a, b), number=number, repeat=5)) / number


def bench_transient(backend, repeat):
    doc = build_rectifier(stimulus=Sin(0.0, 200e-6, 10e6))
    saved = kernels.mos_stamp, kernels.solve
    kernels.mos_stamp, kernels.solve = backend.mos_stamp, backend.solve
    try:
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            wave = run_transient(doc, 1e-10, 3e-7)
            best = min(best, time.perf_counter() - t0)
    finally:
        kernels.mos_stamp, kernels.solve = saved
    return best, wave.meta["newton_iterations"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3, help="transient repetitions (best kept)")
    ap.add_argument("--number", type=int, default=2000, help="kernel calls per timing")
    args = ap.parse_args(argv)

    backends = [("python", _fallback)]
    if _kernels is not None:
        backends.insert(0, ("cython", _kernels))
    else:
        print("compiled extension not built; timing the fallback only")

    rng = np.random.default_rng(0)
    ckt = Circuit(build_rectifier())
    x, size, m = stamp_inputs(ckt, rng)
    print(f"active backend: {kernels.BACKEND}; rectifier: {m} MOSFETs, {size - 1} unknowns")
    print(f"{'backend':<8} {'stamp (us)':>11} {'solve (us)':>11} {'transient (s)':>14} {'newton its':>11}")
    rows = {}
    for name, backend in backends:
        ts = bench_stamp(backend, ckt, x, size, m, args.number) * 1e6
        tl = bench_solve(backend, size - 1, rng, args.number) * 1e6
        tt, its = bench_transient(backend, args.repeat)
        rows[name] = (ts, tl, tt)
        print(f"{name:<8} {ts:>11.2f} {tl:>11.2f} {tt:>14.3f} {its:>11d}")
    if len(rows) == 2:
        c, p = rows["cython"], rows["python"]
        print(f"speed-up  {p[0] / c[0]:>10.1f}x {p[1] / c[1]:>10.1f}x {p[2] / c[2]:>13.1f}x")


if __name__ == "__main__":
    main()
