"""Edit-distance kernels: numba-jitted hot path, pure-numpy fallback.

The minimum-edit-distance table fill is the one O(n*m) inner loop in the
package, so it gets a compiled kernel. Set ``SSDKIT_NO_NUMBA=1`` (or any
truthy value) to force the numpy implementation; the two paths produce
bit-identical counts. ``benchmarks/bench_kernels.py`` compares them.

Tie-breaking during backtrack is fixed: substitution (diagonal) over
insertion over deletion, so the H/S/D/I decomposition is reproducible.
"""

from __future__ import annotations

import os

import numpy as np


def _env_disabled() -> bool:
    return os.environ.get("SSDKIT_NO_NUMBA", "").strip().lower() not in ("", "0", "false")


try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not _env_disabled()


def _fill_table_numpy(ref: np.ndarray, hyp: np.ndarray) -> np.ndarray:
    n, m = len(ref), len(hyp)
    cols = np.arange(m + 1, dtype=np.int32)
    dp = np.empty((n + 1, m + 1), dtype=np.int32)
    dp[0] = cols
    for i in range(1, n + 1):
        prev = dp[i - 1]
        cost = (hyp != ref[i - 1]).astype(np.int32)
        row = np.empty(m + 1, dtype=np.int32)
        row[0] = i
        row[1:] = np.minimum(prev[1:] + 1, prev[:-1] + cost)
        # close over within-row insertions: row[j] = min_k<=j row[k] + (j - k)
        row = np.minimum.accumulate(row - cols) + cols
        dp[i] = row
    return dp


def _backtrack(dp: np.ndarray, ref: np.ndarray, hyp: np.ndarray):
    i, j = len(ref), len(hyp)
    hits = subs = dels = ins = 0
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            if dp[i, j] == dp[i - 1, j - 1] + cost:
                if cost == 0:
                    hits += 1
                else:
                    subs += 1
                i -= 1
                j -= 1
                continue
        if j > 0 and dp[i, j] == dp[i, j - 1] + 1:
            ins += 1
            j -= 1
            continue
        dels += 1
        i -= 1
    return hits, subs, dels, ins


def levenshtein_counts_numpy(ref: np.ndarray, hyp: np.ndarray):
    dp = _fill_table_numpy(ref, hyp)
    return _backtrack(dp, ref, hyp)


if HAS_NUMBA:

    @njit(cache=True)
    def _lev_counts_jit(ref, hyp):  # pragma: no cover - exercised via dispatch
        n = ref.shape[0]
        m = hyp.shape[0]
        dp = np.empty((n + 1, m + 1), dtype=np.int32)
        for j in range(m + 1):
            dp[0, j] = j
        for i in range(1, n + 1):
            dp[i, 0] = i
            r = ref[i - 1]
            for j in range(1, m + 1):
                cost = 0 if r == hyp[j - 1] else 1
                best = dp[i - 1, j - 1] + cost
                if dp[i - 1, j] + 1 < best:
                    best = dp[i - 1, j] + 1
                if dp[i, j - 1] + 1 < best:
                    best = dp[i, j - 1] + 1
                dp[i, j] = best
        i = n
        j = m
        hits = 0
        subs = 0
        dels = 0
        ins = 0
        while i > 0 or j > 0:
            if i > 0 and j > 0:
                cost = 0 if ref[i - 1] == hyp[j - 1] else 1
                if dp[i, j] == dp[i - 1, j - 1] + cost:
                    if cost == 0:
                        hits += 1
                    else:
                        subs += 1
                    i -= 1
                    j -= 1
                    continue
            if j > 0 and dp[i, j] == dp[i, j - 1] + 1:
                ins += 1
                j -= 1
                continue
            dels += 1
            i -= 1
        return hits, subs, dels, ins

    def levenshtein_counts_numba(ref: np.ndarray, hyp: np.ndarray):
        h, s, d, i = _lev_counts_jit(
            np.ascontiguousarray(ref, dtype=np.int32),
            np.ascontiguousarray(hyp, dtype=np.int32),
        )
        return int(h), int(s), int(d), int(i)

else:  # pragma: no cover
    levenshtein_counts_numba = None


def levenshtein_counts(ref: np.ndarray, hyp: np.ndarray):
    """(hits, substitutions, deletions, insertions) of a minimum-edit alignment.

    Inputs are integer id arrays; both backends return identical counts.
    """
    ref = np.asarray(ref, dtype=np.int32)
    hyp = np.asarray(hyp, dtype=np.int32)
    if USE_NUMBA:
        return levenshtein_counts_numba(ref, hyp)
    return levenshtein_counts_numpy(ref, hyp)


def warmup() -> None:
    """Trigger JIT compilation so timed paths do not pay it."""
    if USE_NUMBA:
        levenshtein_counts_numba(
            np.array([1, 2], dtype=np.int32), np.array([1], dtype=np.int32)
        )
