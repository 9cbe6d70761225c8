#!/usr/bin/env python3
"""Benchmark the two hot kernels: numba-compiled vs pure-numpy.

Covers per-frame RGB histogram counting and Gauss-Seidel sweeps over the
internal venue-tree weights. Both implementations are run on identical
inputs, verified to agree, and timed best-of-N.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats N] [--quick]

The package-level dispatch is controlled by HIERFUSION_NO_NUMBA; this
script ignores the flag and calls both implementations directly.
"""
import argparse
import time

import numpy as np

from hierfusion._kernels import (NUMBA_AVAILABLE, beta_sweeps_numba,
                                 beta_sweeps_numpy, rgb_counts_numba,
                                 rgb_counts_numpy)
from hierfusion.hierarchy import parse_hierarchy
from hierfusion.network import NetworkShape, init_network
from hierfusion.tree_prior import HierPriorConfig, make_head_state


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def big_tree_text(families, subs, leaves):
    """Hierarchy text shaped like a venue taxonomy: 3 layers, wide fan-out."""
    lines = []
    for f in range(families):
        fam = f"fam{f:02d}"
        lines.append(f"{fam}\tROOT\t1")
        for s in range(subs):
            sub = f"{fam}s{s:02d}"
            lines.append(f"{sub}\t{fam}\t2")
            for l in range(leaves):
                lines.append(f"{sub}x{l:02d}\t{sub}\t3")
    return "\n".join(lines) + "\n"


def bench_histogram(repeats, quick):
    print("\nRGB histogram counts (bins=16)")
    print(f"{'frame':>12} {'numpy':>10} {'numba':>10} {'speedup':>8}  agree")
    sizes = [(120, 160), (240, 320), (480, 640)]
    if not quick:
        sizes.append((720, 1280))
    rng = np.random.default_rng(0)
    for h, w in sizes:
        frame = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
        ref = rgb_counts_numpy(frame, 16)
        if NUMBA_AVAILABLE:
            got = rgb_counts_numba(frame, 16)
            agree = np.array_equal(ref, got)
            t_np = best_of(lambda: rgb_counts_numpy(frame, 16), repeats)
            t_nb = best_of(lambda: rgb_counts_numba(frame, 16), repeats)
            print(f"{h:>5}x{w:<6} {t_np * 1e3:>9.3f}ms {t_nb * 1e3:>9.3f}ms "
                  f"{t_np / t_nb:>7.2f}x  {agree}")
        else:
            t_np = best_of(lambda: rgb_counts_numpy(frame, 16), repeats)
            print(f"{h:>5}x{w:<6} {t_np * 1e3:>9.3f}ms {'n/a':>10} {'':>8}")


def bench_sweeps(repeats, quick):
    print("\nGauss-Seidel sweeps over internal tree weights (tol=0, 20 sweeps)")
    print(f"{'tree / dim':>22} {'numpy':>10} {'numba':>10} {'speedup':>8}  agree")
    shapes = [(6, 4, 4, 32), (12, 8, 6, 128)]
    if not quick:
        shapes.append((14, 10, 6, 512))
    cfg = HierPriorConfig()
    rng = np.random.default_rng(1)
    for families, subs, leaves, dim in shapes:
        h = parse_hierarchy(big_tree_text(families, subs, leaves))
        net = init_network(NetworkShape(dim, 0, 0, h.num_leaves), seed=0)
        net.head[:] = rng.normal(size=net.head.shape)
        state = make_head_state(h, net)
        lam_child, lam_parent = state._lambda_arrays(cfg)
        base = np.stack(state.betas)
        args = (state.sweep_order, state.parent_arr, state.child_ptr,
                state.child_idx, lam_child, lam_parent, 0.0, 20)
        ref = base.copy()
        beta_sweeps_numpy(ref, *args)
        label = f"{h.num_leaves} leaves / d={dim}"
        if NUMBA_AVAILABLE:
            got = base.copy()
            beta_sweeps_numba(got, *args)
            agree = bool(np.allclose(ref, got, atol=1e-12, rtol=0.0))
            t_np = best_of(lambda: beta_sweeps_numpy(base.copy(), *args),
                           repeats)
            t_nb = best_of(lambda: beta_sweeps_numba(base.copy(), *args),
                           repeats)
            print(f"{label:>22} {t_np * 1e3:>9.3f}ms {t_nb * 1e3:>9.3f}ms "
                  f"{t_np / t_nb:>7.2f}x  {agree}")
        else:
            t_np = best_of(lambda: beta_sweeps_numpy(base.copy(), *args),
                           repeats)
            print(f"{label:>22} {t_np * 1e3:>9.3f}ms {'n/a':>10}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repetitions per case (best-of)")
    parser.add_argument("--quick", action="store_true",
                        help="skip the largest case in each table")
    args = parser.parse_args()

    print(f"numba available: {NUMBA_AVAILABLE}")
    if NUMBA_AVAILABLE:
        # trigger JIT compilation outside the timed region
        rgb_counts_numba(np.zeros((2, 2, 3), dtype=np.uint8), 16)
        tiny = parse_hierarchy("a\tROOT\t1\nb\tROOT\t1\na0\ta\t2\nb0\tb\t2\n")
        net = init_network(NetworkShape(3, 0, 0, 2), seed=0)
        state = make_head_state(tiny, net)
        lam_child, lam_parent = state._lambda_arrays(HierPriorConfig())
        beta_sweeps_numba(np.stack(state.betas), state.sweep_order,
                          state.parent_arr, state.child_ptr, state.child_idx,
                          lam_child, lam_parent, 1e-8, 5)

    bench_histogram(args.repeats, args.quick)
    bench_sweeps(args.repeats, args.quick)


if __name__ == "__main__":
    main()
