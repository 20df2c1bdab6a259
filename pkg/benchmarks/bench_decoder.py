"""Time the sum-product decoder's compiled kernel against the numpy path.

Runs the same frames through both check-node backends and reports the
per-frame decode time and speedup.  The numpy path is also what you get
with FLASHOPT_NO_NUMBA=1 when numba is unavailable or unwanted.

Usage: python benchmarks/bench_decoder.py [--frames 50] [--code 2k-qc]
"""

import argparse
import time

import numpy as np

from flashopt._accel import HAVE_NUMBA
from flashopt.channel import Condition, DEFAULT_PARAMS, sample_wordline, state_models
from flashopt.harness import _simulate_block
from flashopt.ldpc import build_code, sp_decode
from flashopt.optimizer import cis_optimize
from flashopt.quantizer import llr_table, quantize


def frame_llrs(code, cond, d, table, rng):
    code_m, code_l, volts = _simulate_block(code, cond, DEFAULT_PARAMS, rng)
    regions = quantize(volts, d)
    return table.llr[regions, 0]


def bench(backend, code, llr_list, i_max):
    # One warm-up decode so numba compilation is not timed.
    sp_decode(code, llr_list[0], i_max=i_max, backend=backend)
    start = time.perf_counter()
    converged = 0
    for llrs in llr_list:
        _, ok, _ = sp_decode(code, llrs, i_max=i_max, backend=backend)
        converged += ok
    elapsed = time.perf_counter() - start
    return elapsed / len(llr_list), converged


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--frames", type=int, default=50)
    parser.add_argument("--code", default="2k-qc")
    parser.add_argument("--n-pe", type=float, default=12000.0)
    parser.add_argument("--t-ret", type=float, default=100.0)
    parser.add_argument("--i-max", type=int, default=25)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    code = build_code(args.code, seed=0)
    cond = Condition(args.n_pe, args.t_ret)
    d, _ = cis_optimize(cond, DEFAULT_PARAMS, code.spec.n, code.spec.rate, seed=0)
    table = llr_table(state_models(cond, DEFAULT_PARAMS), d)
    rng = np.random.default_rng(args.seed)
    llr_list = [frame_llrs(code, cond, d, table, rng) for _ in range(args.frames)]

    per_np, conv_np = bench("numpy", code, llr_list, args.i_max)
    print(f"numpy : {per_np * 1e3:8.2f} ms/frame  ({conv_np}/{args.frames} converged)")
    if HAVE_NUMBA:
        per_nb, conv_nb = bench("numba", code, llr_list, args.i_max)
        print(f"numba : {per_nb * 1e3:8.2f} ms/frame  ({conv_nb}/{args.frames} converged)")
        if conv_nb != conv_np:
            raise SystemExit("backend disagreement on converged frames")
        print(f"speedup: {per_np / per_nb:.1f}x")
    else:
        print("numba : unavailable in this environment")


if __name__ == "__main__":
    main()
