"""Compare the compiled and numpy kernel backends.

Times one noisy density-matrix circuit run and one statevector run per
qubit count, checks that both backends agree, and prints a table.

    python3 benchmarks/bench_kernels.py --qubits 2 4 6 8 --gates 60
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from gsavqe import kernels
from gsavqe.sim import Gate, compile_gates


def random_circuit(rng, n, count):
    gates = []
    for _ in range(count):
        r = int(rng.integers(3))
        if r == 2 and n > 1:
            c = int(rng.integers(n))
            gates.append(Gate("CNOT", (c + 1) % n, control=c))
        else:
            gates.append(Gate(("Ry", "Rz")[r % 2], int(rng.integers(n)),
                              angle=float(rng.uniform(-np.pi, np.pi))))
    return compile_gates(gates, n)


def best_time(fn, repeat, min_time=0.05):
    """Best per-call wall time over ``repeat`` batches of at least ``min_time`` seconds."""
    calls = 1
    while True:
        t = time.perf_counter()
        for _ in range(calls):
            fn()
        if time.perf_counter() - t >= min_time or calls >= 1 << 16:
            break
        calls *= 2
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        for _ in range(calls):
            fn()
        best = min(best, (time.perf_counter() - t) / calls)
    return best


def bench(n, gates, repeat, seed=0):
    rng = np.random.default_rng(seed)
    ops, angles = random_circuit(rng, n, gates)
    dim = 1 << n
    rho0 = np.zeros((dim, dim), dtype=complex)
    rho0[0, 0] = 1
    psi0 = np.zeros(dim, dtype=complex)
    psi0[0] = 1
    row = {"n": n, "gates": gates}
    finals = {}
    for name in kernels.available():
        k = kernels.BACKENDS[name]
        rho = rho0.copy()
        k.dm_run(rho, n, ops, angles, 0.001, 0.01)
        finals[name] = rho

        def dm():
            r = rho0.copy()
            k.dm_run(r, n, ops, angles, 0.001, 0.01)

        def sv():
            p = psi0.copy()
            k.sv_run(p, n, ops, angles)

        row[f"{name}_dm_s"] = best_time(dm, repeat)
        row[f"{name}_sv_s"] = best_time(sv, repeat)
    if len(finals) == 2:
        row["max_abs_diff"] = float(np.abs(finals["python"] - finals["cython"]).max())
        row["dm_speedup"] = row["python_dm_s"] / row["cython_dm_s"]
        row["sv_speedup"] = row["python_sv_s"] / row["cython_sv_s"]
    return row


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--qubits", type=int, nargs="+", default=[2, 4, 6, 8])
    ap.add_argument("--gates", type=int, default=60)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true", help="print JSON rows instead of a table")
    args = ap.parse_args(argv)
    rows = [bench(n, args.gates, args.repeat) for n in args.qubits]
    if args.json:
        print(json.dumps(rows, indent=2))
        return
    if "cython" not in kernels.available():
        print("compiled backend not built; timing the numpy backend only")
    head = f"{'n':>3} {'backend':>8} {'density (ms)':>13} {'statevec (ms)':>14}"
    print(head)
    for r in rows:
        for name in kernels.available():
            print(f"{r['n']:>3} {name:>8} {1e3 * r[f'{name}_dm_s']:>13.4f} "
                  f"{1e3 * r[f'{name}_sv_s']:>14.4f}")
        if "dm_speedup" in r:
            print(f"{'':>3} {'speedup':>8} {r['dm_speedup']:>12.1f}x {r['sv_speedup']:>13.1f}x"
                  f"   (max |diff| {r['max_abs_diff']:.1e})")


if __name__ == "__main__":
    main()
