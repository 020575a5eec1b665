"""Time the numba kernels against their numpy twins on corpus circuits.

    python scripts/bench_kernels.py [--vectors 10000] [--repeat 5] [circuit ...]

Both implementations are called directly, so the NETMARK_DISABLE_NUMBA flag
does not matter here. Results are checked for equality before timing.
"""
import argparse
import sys
import time
from pathlib import Path

import numpy as np

from netmark import _kernels
from netmark.netlist import read_bench
from netmark.sim import _program, generate_vectors, pack_lanes

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_circuit(path, n_vectors, repeat):
    n = read_bench(path)
    p = _program(n)
    vecs = generate_vectors(n, n_vectors, seed=1)
    base = np.zeros((n.net_count, -(-n_vectors // 64)), dtype=np.uint64)
    base[list(n.effective_inputs)] = pack_lanes(vecs.bits)
    first = np.zeros(n.net_count, dtype=bool)

    def sim_with(kernel):
        values = base.copy()
        kernel(p.ops, p.outs, p.ptr, p.idx, values)
        return values

    values = sim_with(_kernels.eval_gates_numpy)
    assert np.array_equal(values, sim_with(_kernels.eval_gates_numba))
    cases = {
        "eval_gates": (lambda: sim_with(_kernels.eval_gates_numpy),
                       lambda: sim_with(_kernels.eval_gates_numba)),
        "toggle_counts": (lambda: _kernels.toggle_counts_numpy(values, first, n_vectors),
                          lambda: _kernels.toggle_counts_numba(values, first, n_vectors)),
        "popcount_rows": (lambda: _kernels.popcount_rows_numpy(values),
                          lambda: _kernels.popcount_rows_numba(values)),
        "hamming_to_row": (lambda: _kernels.hamming_to_row_numpy(values, values[0]),
                           lambda: _kernels.hamming_to_row_numba(values, values[0])),
    }
    rows = []
    for name, (np_fn, nb_fn) in cases.items():
        nb_fn()  # compile / load from cache outside the timing
        t_np = best_of(np_fn, repeat)
        t_nb = best_of(nb_fn, repeat)
        rows.append((n.name, name, t_np, t_nb))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("circuits", nargs="*", default=["c5315", "c7552", "b20_C"])
    ap.add_argument("--vectors", type=int, default=10_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not hasattr(_kernels, "eval_gates_numba"):
        sys.exit("numba is unavailable (or disabled); nothing to compare")
    print(f"{'circuit':<9}{'kernel':<16}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for c in args.circuits:
        path = Path(c) if c.endswith(".bench") else CORPUS / f"{c}.bench"
        for circ, kernel, t_np, t_nb in bench_circuit(path, args.vectors, args.repeat):
            print(f"{circ:<9}{kernel:<16}{t_np * 1e3:>10.2f}{t_nb * 1e3:>10.2f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
