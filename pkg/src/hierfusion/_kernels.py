"""Hot numeric kernels with numba-compiled and pure-numpy implementations.

Two inner loops dominate pipeline runtime: per-pixel color histogram
binning over frame sequences, and Gauss-Seidel sweeps over the internal
weight vectors of the venue tree. Each kernel exists in two versions that
produce the same values; the compiled one is used when numba imports
cleanly and the environment does not opt out.

Set ``HIERFUSION_NO_NUMBA=1`` to force the pure-numpy path (useful for
debugging and for the benchmark in ``benchmarks/bench_kernels.py``).
"""

import os

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - environment without numba
    njit = None
    NUMBA_AVAILABLE = False


def _numba_disabled_by_env() -> bool:
    return os.environ.get("HIERFUSION_NO_NUMBA", "").strip().lower() not in (
        "",
        "0",
        "false",
    )


USE_NUMBA = NUMBA_AVAILABLE and not _numba_disabled_by_env()


# ---------------------------------------------------------------------------
# RGB histogram counts


def rgb_counts_numpy(frame: np.ndarray, bins: int) -> np.ndarray:
    """Per-channel bin counts for a (H, W, 3) uint8 frame -> (3, bins) float64."""
    idx = (frame.astype(np.int64) * bins) >> 8  # equal-width bins over 0..255
    out = np.empty((3, bins), dtype=np.float64)
    for c in range(3):
        out[c] = np.bincount(idx[..., c].ravel(), minlength=bins)
    return out


def _rgb_counts_loop(frame, bins, out):
    h, w = frame.shape[0], frame.shape[1]
    for i in range(h):
        for j in range(w):
            for c in range(3):
                out[c, (np.int64(frame[i, j, c]) * bins) >> 8] += 1.0
    return out


if NUMBA_AVAILABLE:
    _rgb_counts_loop_nb = njit(cache=True)(_rgb_counts_loop)


def rgb_counts_numba(frame: np.ndarray, bins: int) -> np.ndarray:
    out = np.zeros((3, bins), dtype=np.float64)
    return _rgb_counts_loop_nb(frame, bins, out)


def rgb_counts(frame: np.ndarray, bins: int) -> np.ndarray:
    if USE_NUMBA:
        return rgb_counts_numba(frame, bins)
    return rgb_counts_numpy(frame, bins)


# ---------------------------------------------------------------------------
# Gauss-Seidel sweeps over internal tree weights
#
# For every internal node n (deepest layer first) the update is
#
#   beta_n <- (lam_child[n] * sum_c beta_c + lam_parent[n] * beta_parent)
#             / (lam_child[n] * n_children + lam_parent[n])
#
# which is the exact coordinate minimizer of the quadratic tree penalty.
# Children are stored in CSR form (child_ptr/child_idx over node indices).


def beta_sweeps_numpy(
    betas: np.ndarray,
    order: np.ndarray,
    parent: np.ndarray,
    child_ptr: np.ndarray,
    child_idx: np.ndarray,
    lam_child: np.ndarray,
    lam_parent: np.ndarray,
    tol: float,
    max_sweeps: int,
) -> int:
    """Run sweeps in place over ``betas`` (n_nodes, d); returns sweeps used."""
    sweeps = 0
    for _ in range(max_sweeps):
        max_delta = 0.0
        for n in order:
            lo, hi = child_ptr[n], child_ptr[n + 1]
            acc = lam_parent[n] * betas[parent[n]]
            acc = acc + lam_child[n] * betas[child_idx[lo:hi]].sum(axis=0)
            new = acc / (lam_child[n] * (hi - lo) + lam_parent[n])
            delta = np.abs(new - betas[n]).max()
            if delta > max_delta:
                max_delta = delta
            betas[n] = new
        sweeps += 1
        if max_delta < tol:
            break
    return sweeps


def _beta_sweeps_loop(
    betas, order, parent, child_ptr, child_idx, lam_child, lam_parent, tol, max_sweeps
):
    d = betas.shape[1]
    sweeps = 0
    for _ in range(max_sweeps):
        max_delta = 0.0
        for oi in range(order.shape[0]):
            n = order[oi]
            lo, hi = child_ptr[n], child_ptr[n + 1]
            denom = lam_child[n] * (hi - lo) + lam_parent[n]
            for j in range(d):
                acc = lam_parent[n] * betas[parent[n], j]
                for ci in range(lo, hi):
                    acc += lam_child[n] * betas[child_idx[ci], j]
                new = acc / denom
                delta = abs(new - betas[n, j])
                if delta > max_delta:
                    max_delta = delta
                betas[n, j] = new
        sweeps += 1
        if max_delta < tol:
            break
    return sweeps


if NUMBA_AVAILABLE:
    _beta_sweeps_loop_nb = njit(cache=True)(_beta_sweeps_loop)


def beta_sweeps_numba(
    betas, order, parent, child_ptr, child_idx, lam_child, lam_parent, tol, max_sweeps
) -> int:
    return _beta_sweeps_loop_nb(
        betas, order, parent, child_ptr, child_idx, lam_child, lam_parent, tol, max_sweeps
    )


def beta_sweeps(
    betas, order, parent, child_ptr, child_idx, lam_child, lam_parent, tol, max_sweeps
) -> int:
    if USE_NUMBA:
        return beta_sweeps_numba(
            betas, order, parent, child_ptr, child_idx, lam_child, lam_parent, tol, max_sweeps
        )
    return beta_sweeps_numpy(
        betas, order, parent, child_ptr, child_idx, lam_child, lam_parent, tol, max_sweeps
    )
