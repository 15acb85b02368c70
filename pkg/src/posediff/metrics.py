"""Token- and pose-level evaluation metrics.

``wer`` and ``bleu_n`` operate on token sequences (here usually flattened
code grids); ``dtw_mje`` compares two pose sequences by mean joint error
along an optimal dynamic-time-warping alignment, so it is insensitive to
uniform tempo changes.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

import numpy as np


class MetricError(ValueError):
    """Raised for invalid metric inputs."""


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Edit distance with unit substitution/insertion/deletion costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, xa in enumerate(a, start=1):
        cur = [i]
        for j, xb in enumerate(b, start=1):
            cur.append(
                min(
                    prev[j] + 1,  # deletion
                    cur[j - 1] + 1,  # insertion
                    prev[j - 1] + (xa != xb),  # substitution
                )
            )
        prev = cur
    return prev[-1]


def wer(hyp: Sequence, ref: Sequence) -> float:
    """Edit distance divided by the reference length."""
    if len(ref) == 0:
        raise MetricError("reference sequence must be nonempty")
    return levenshtein(list(hyp), list(ref)) / len(ref)


def _ngrams(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(
    hyps: Sequence[Sequence] | Sequence,
    refs: Sequence[Sequence] | Sequence,
    max_n: int = 4,
) -> float:
    """Corpus BLEU with uniform n-gram weights and brevity penalty.

    Accepts either one hypothesis/reference pair or parallel lists of
    pairs.  No smoothing: a zero clipped-match count at any order yields
    exactly 0.
    """
    if max_n < 1:
        raise MetricError("max_n must be >= 1")
    if hyps and not isinstance(hyps[0], (list, tuple, np.ndarray)):
        hyps, refs = [hyps], [refs]
    if len(hyps) != len(refs):
        raise MetricError("hypothesis and reference counts differ")

    matches = np.zeros(max_n)
    totals = np.zeros(max_n)
    hyp_len = ref_len = 0
    for hyp, ref in zip(hyps, refs):
        hyp, ref = list(hyp), list(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            h = _ngrams(hyp, n)
            r = _ngrams(ref, n)
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            totals[n - 1] += max(sum(h.values()), 0)
    # Orders with no possible n-grams (all hypotheses shorter than n) have
    # undefined precision and drop out of the geometric mean; a zero match
    # count at a populated order yields exactly 0 (no smoothing).
    used = totals > 0
    if not np.any(used):
        return 0.0
    if np.any(matches[used] == 0):
        return 0.0
    log_prec = np.log(matches[used] / totals[used]).mean()
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / max(hyp_len, 1))
    return float(bp * math.exp(log_prec))


def frame_cost_matrix(seq_a: np.ndarray, seq_b: np.ndarray) -> np.ndarray:
    """Pairwise mean-joint Euclidean error between all frame pairs."""
    a = np.asarray(seq_a, dtype=np.float64)
    b = np.asarray(seq_b, dtype=np.float64)
    if a.ndim != 3 or b.ndim != 3 or a.shape[1:] != b.shape[1:]:
        raise MetricError(
            f"sequences need matching (joints, coords): {a.shape} vs {b.shape}"
        )
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise MetricError("sequences must be nonempty")
    diff = a[:, None, :, :] - b[None, :, :, :]
    return np.sqrt((diff**2).sum(axis=-1)).mean(axis=-1)


def dtw_mje(seq_a: np.ndarray, seq_b: np.ndarray) -> float:
    """Mean joint error along the optimal dynamic-time-warping path.

    The alignment minimizes the cumulative per-step cost over the usual
    step set (match, insert, delete); the score is that path's mean cost,
    which makes the metric symmetric and invariant to frame duplication.
    """
    cost = frame_cost_matrix(seq_a, seq_b)
    na, nb = cost.shape
    acc = np.full((na + 1, nb + 1), np.inf)
    steps = np.zeros((na + 1, nb + 1), dtype=np.int64)
    acc[0, 0] = 0.0
    for i in range(1, na + 1):
        for j in range(1, nb + 1):
            best = min(
                (acc[i - 1, j - 1], steps[i - 1, j - 1]),
                (acc[i - 1, j], steps[i - 1, j]),
                (acc[i, j - 1], steps[i, j - 1]),
            )
            acc[i, j] = best[0] + cost[i - 1, j - 1]
            steps[i, j] = best[1] + 1
    return float(acc[na, nb] / steps[na, nb])


def pose_mse(seq_a: np.ndarray, seq_b: np.ndarray) -> float:
    """Frame-aligned mean squared coordinate error (same lengths required)."""
    a = np.asarray(seq_a, dtype=np.float64)
    b = np.asarray(seq_b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(((a - b) ** 2).mean())


def token_stream(grid_values: np.ndarray) -> list[int]:
    """Flatten a token grid frame-major into a comparable token sequence."""
    return [int(v) for v in np.asarray(grid_values).reshape(-1)]


__all__ = [
    "MetricError",
    "bleu_n",
    "dtw_mje",
    "frame_cost_matrix",
    "levenshtein",
    "pose_mse",
    "token_stream",
    "wer",
]
