"""Sequential-KNN segmentation of token sequences into per-gloss spans.

Adjacent frames of a sign share a latent code neighborhood, so the local
density of frame i is computed against its k sequentially nearest frames
(positions j with |i - j| <= l, ordered by positional distance, left
before right on ties, self excluded):

    rho_i = exp(-mean_j ||z_i - z_j||^2)

Interior frames of a homogeneous span see only small distances and keep a
high density; frames near a span boundary pick up cross-span neighbors and
their density drops.  Peaks (one per gloss) are selected greedily by
descending density with non-maximum suppression, and the boundary between
two adjacent peaks is the first frame that is strictly farther from the
left peak's code than from the right peak's.

The module also owns the length-classification loss used to supervise the
gloss-to-length predictor and the beam enumeration of candidate length
tables at inference time.
"""

from __future__ import annotations

import heapq
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator


class SegmenterError(ValueError):
    """Raised for invalid segmentation inputs."""


@dataclass
class LengthTable:
    """Per-gloss segment lengths; together they partition a sequence."""

    lengths: np.ndarray
    max_class: int

    def __post_init__(self) -> None:
        lengths = np.asarray(self.lengths, dtype=np.int64)
        if lengths.ndim != 1 or lengths.size < 1:
            raise SegmenterError("length table needs at least one entry")
        if np.any(lengths < 1) or np.any(lengths > self.max_class):
            raise SegmenterError(
                f"lengths must lie in [1, {self.max_class}], got {lengths}"
            )
        self.lengths = lengths

    @property
    def n_glosses(self) -> int:
        return int(self.lengths.shape[0])

    @property
    def total(self) -> int:
        return int(self.lengths.sum())


def _as_features(z_seq: np.ndarray) -> np.ndarray:
    """Flatten per-frame features to (N, d); accepts (N,), (N,d), (N,C,h)."""
    z = np.asarray(z_seq, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    elif z.ndim > 2:
        z = z.reshape(z.shape[0], -1)
    if not np.all(np.isfinite(z)):
        raise SegmenterError("features must be finite")
    return z


def local_density(z_seq: np.ndarray, k: int, l: int) -> np.ndarray:
    """Density of each frame from its k sequentially nearest neighbors.

    Fewer than k in-window candidates (near the sequence ends or for short
    sequences) average over what is available; a frame with no candidates
    at all gets the empty-sum convention rho = exp(0) = 1.
    """
    if k < 1 or l < 1:
        raise SegmenterError("k and l must be positive")
    z = _as_features(z_seq)
    n = z.shape[0]
    # Columns ordered by positional distance d=1..l, left neighbor before
    # right; invalid slots carry NaN.
    sqd = np.full((n, 2 * l), np.nan)
    for d in range(1, l + 1):
        if d < n:
            diff = z[d:] - z[:-d]
            col = (diff * diff).sum(axis=1)
            sqd[d:, 2 * (d - 1)] = col  # left neighbor i-d
            sqd[:-d, 2 * (d - 1) + 1] = col  # right neighbor i+d
    valid = ~np.isnan(sqd)
    take = valid & (np.cumsum(valid, axis=1) <= k)
    counts = take.sum(axis=1)
    sums = np.where(take, sqd, 0.0).sum(axis=1)
    mean = np.divide(sums, counts, out=np.zeros(n), where=counts > 0)
    return np.exp(-mean)


def select_peaks(
    rho: np.ndarray, n_peaks: int, suppression_radius: int
) -> np.ndarray:
    """Greedy descending-density peak picking with non-max suppression.

    Ties break toward the earlier index.  Candidates within
    ``suppression_radius`` (strictly) of an accepted peak are skipped; if
    the requested count cannot be placed the radius shrinks by one with a
    warning until it can (radius zero always succeeds).
    Returns sorted positions.
    """
    rho = np.asarray(rho, dtype=np.float64)
    n = rho.shape[0]
    if not 1 <= n_peaks <= n:
        raise SegmenterError(f"cannot place {n_peaks} peaks in {n} frames")
    order = np.lexsort((np.arange(n), -rho))
    radius = max(int(suppression_radius), 0)
    while True:
        chosen: list[int] = []
        for idx in order:
            if all(abs(int(idx) - p) >= radius for p in chosen):
                chosen.append(int(idx))
                if len(chosen) == n_peaks:
                    return np.array(sorted(chosen), dtype=np.int64)
        warnings.warn(
            f"could not place {n_peaks} peaks with suppression radius "
            f"{radius}; retrying with {radius - 1}",
            RuntimeWarning,
            stacklevel=2,
        )
        radius -= 1


def find_boundaries(z_seq: np.ndarray, peaks: np.ndarray) -> LengthTable:
    """Assign every frame to a peak by the first-crossing scan rule.

    Between adjacent peaks a and b the next span starts at the first frame
    strictly farther from z_a than from z_b (ties stay left); if no frame
    crosses, the next span starts at b itself.  The first span starts at
    frame 0 and the last ends at the final frame.
    """
    z = _as_features(z_seq)
    peaks = np.asarray(peaks, dtype=np.int64)
    if peaks.size < 1 or np.any(np.diff(peaks) <= 0):
        raise SegmenterError("peaks must be strictly increasing and nonempty")
    n = z.shape[0]
    starts = [0]
    for a, b in zip(peaks[:-1], peaks[1:]):
        next_start = int(b)
        for i in range(int(a) + 1, int(b) + 1):
            d_left = np.sum((z[i] - z[a]) ** 2)
            d_right = np.sum((z[i] - z[b]) ** 2)
            if d_left > d_right:
                next_start = i
                break
        starts.append(next_start)
    starts.append(n)
    lengths = np.diff(np.asarray(starts, dtype=np.int64))
    if np.any(lengths < 1):
        raise SegmenterError("degenerate segmentation (empty span)")
    return LengthTable(lengths=lengths, max_class=int(lengths.max()))


class SequentialKNNSegmenter(BaseEstimator):
    """Stateless estimator wrapper around the density-peak segmentation.

    Parameters
    ----------
    k : int, default 16
        Neighbor count per frame.
    l : int, default 16
        Positional window radius; must satisfy k <= 2 l so the window can
        supply the neighbors.
    """

    def __init__(self, k: int = 16, l: int = 16):
        self.k = k
        self.l = l

    def _validate(self) -> None:
        if self.k < 1 or self.l < 1:
            raise SegmenterError("k and l must be positive")
        if self.k > 2 * self.l:
            raise SegmenterError("k must not exceed 2*l (window capacity)")

    def fit(self, X=None, y=None):
        """No-op; the segmenter has no trainable state."""
        self._validate()
        return self

    @property
    def suppression_radius(self) -> int:
        return int(np.ceil(self.l / 2))

    def local_density(self, z_seq: np.ndarray) -> np.ndarray:
        self._validate()
        return local_density(z_seq, self.k, self.l)

    def predict(self, z_seq: np.ndarray, n_segments: int) -> LengthTable:
        """Segment one latent sequence into ``n_segments`` spans."""
        return self.segment(z_seq, n_segments)["lengths"]

    def segment(self, z_seq: np.ndarray, n_segments: int) -> dict:
        """Full segmentation record: densities, peaks, starts and lengths."""
        self._validate()
        rho = local_density(z_seq, self.k, self.l)
        peaks = select_peaks(rho, n_segments, self.suppression_radius)
        table = find_boundaries(z_seq, peaks)
        starts = np.concatenate(([0], np.cumsum(table.lengths)[:-1]))
        return {
            "density": rho,
            "peaks": peaks,
            "starts": starts,
            "lengths": table,
        }


# ---------------------------------------------------------------------------
# Length classification
# ---------------------------------------------------------------------------


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def length_loss(logits: np.ndarray, gold_lengths: np.ndarray, delta: float) -> float:
    """Weighted mean cross-entropy of per-gloss length classes.

    ``logits`` has shape (M, P) scoring classes 1..P; gold lengths must lie
    in that range.  Returns (delta / M) * sum_i CE_i.
    """
    logits = np.asarray(logits, dtype=np.float64)
    gold = np.asarray(gold_lengths, dtype=np.int64)
    M, P = logits.shape
    if gold.shape != (M,):
        raise SegmenterError("one gold length per gloss required")
    if np.any(gold < 1) or np.any(gold > P):
        raise SegmenterError(f"gold lengths must lie in [1, {P}]")
    logp = _log_softmax(logits)
    picked = logp[np.arange(M), gold - 1]
    return float(-(delta / M) * picked.sum())


def length_loss_grad(
    logits: np.ndarray, gold_lengths: np.ndarray, delta: float
) -> np.ndarray:
    """Analytic gradient of ``length_loss`` w.r.t. the logits; shape (M, P)."""
    logits = np.asarray(logits, dtype=np.float64)
    gold = np.asarray(gold_lengths, dtype=np.int64)
    M, P = logits.shape
    probs = np.exp(_log_softmax(logits))
    onehot = np.zeros_like(probs)
    onehot[np.arange(M), gold - 1] = 1.0
    return (delta / M) * (probs - onehot)


def top_length_tables(logits: np.ndarray, n_candidates: int) -> list[tuple[np.ndarray, float]]:
    """The n highest-joint-probability length tables under per-gloss scores.

    Best-first beam over per-gloss sorted class lists; returns
    (lengths, joint log-probability) pairs in descending order.  Fewer
    tables come back when P**M < n_candidates.
    """
    if n_candidates < 1:
        raise SegmenterError("need at least one candidate")
    logp = _log_softmax(np.asarray(logits, dtype=np.float64))
    M, P = logp.shape
    order = np.argsort(-logp, axis=1, kind="stable")
    sorted_lp = np.take_along_axis(logp, order, axis=1)

    start = (0,) * M
    heap = [(-float(sorted_lp[:, 0].sum()), start)]
    seen = {start}
    out: list[tuple[np.ndarray, float]] = []
    while heap and len(out) < n_candidates:
        neg, ranks = heapq.heappop(heap)
        lengths = order[np.arange(M), list(ranks)] + 1
        out.append((lengths.astype(np.int64), -neg))
        for i in range(M):
            if ranks[i] + 1 < P:
                child = ranks[:i] + (ranks[i] + 1,) + ranks[i + 1 :]
                if child not in seen:
                    seen.add(child)
                    score = neg + sorted_lp[i, ranks[i]] - sorted_lp[i, ranks[i] + 1]
                    heapq.heappush(heap, (float(score), child))
    return out


def predict_length_tables(
    logits: np.ndarray, n_candidates: int, max_class: int
) -> list[LengthTable]:
    """Candidate length tables ranked by joint probability."""
    return [
        LengthTable(lengths=lengths, max_class=max_class)
        for lengths, _ in top_length_tables(logits, n_candidates)
    ]


__all__ = [
    "LengthTable",
    "SegmenterError",
    "SequentialKNNSegmenter",
    "find_boundaries",
    "length_loss",
    "length_loss_grad",
    "local_density",
    "predict_length_tables",
    "select_peaks",
    "top_length_tables",
]
