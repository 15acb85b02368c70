"""Reverse-process sampling and training losses for token diffusion.

The reverse model predicts a distribution over the clean code at every
position and composes it with the exact one-step posterior:

    p(x_{t-1} | x_t) = sum_v q(x_{t-1} | x_t, x0=v) * p_model(x0=v | x_t)

so a denoiser only ever has to output code probabilities (MASK and PAD are
excluded from its support).  Everything here works on raw integer arrays
with an optional leading batch dimension; ``TokenGrid`` wrappers exist at
the API boundary.

A denoiser is any callable ``f(values, t) -> probs`` mapping int arrays of
shape (..., N, C) with 1-based states to float arrays of shape
(..., N, C, V) normalized over the last axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .kernel import (
    KernelError,
    TokenGrid,
    forward_marginal_array,
    mask_state,
    pad_state,
    posterior_array,
)
from .schedule import NoiseSchedule

Denoiser = Callable[[np.ndarray, int], np.ndarray]

#: Probabilities are clamped at this floor inside logs/KL so early training
#: with near-zero model mass does not produce infinities.
PROB_FLOOR = 1e-30


class SamplerError(RuntimeError):
    """Raised for invalid reverse-process states or misconfigured chains."""


class ClampCounter:
    """Counts how often a probability had to be floored inside a loss."""

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)

    def reset(self) -> None:
        self.count = 0


clamp_warnings = ClampCounter()


# ---------------------------------------------------------------------------
# Reverse-step distribution (x0-reparameterized)
# ---------------------------------------------------------------------------


def reverse_step_array(
    x_t: np.ndarray, t: int, probs: np.ndarray, schedule: NoiseSchedule
) -> np.ndarray:
    """Mixture of posteriors weighted by the denoiser output, in O(V).

    For a position currently holding code m the mixture expands to

        p(w) = (alpha_t*[w=m] + beta_t) * (bbar' * R + abar' * r_w)

    with r_v = probs_v / (bbar_t + abar_t*[v=m]), R = sum_v r_v, and primes
    marking step t-1 cumulatives; for a MASK position it collapses to

        p(w<=V) = gamma_t * (bbar' + abar' * probs_w) / gbar_t,
        p(MASK) = gbar' / gbar_t.

    Both agree with the explicit posterior mixture and sum to one.  When
    beta_bar_t = 0 (mask-only schedules) an observed code can only have
    been itself, so the step is a point mass on it.  PAD positions return
    a point mass on PAD.
    """
    schedule.check_timestep(t)
    x_t = np.asarray(x_t, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    V = schedule.vocab_size
    if probs.shape != x_t.shape + (V,):
        raise SamplerError(
            f"denoiser output shape {probs.shape} does not match grid "
            f"{x_t.shape} with vocab {V}"
        )
    i = t - 1
    alpha_t, beta_t, gamma_t = (
        float(schedule.alpha[i]),
        float(schedule.beta[i]),
        float(schedule.gamma[i]),
    )
    abar, bbar, gbar = (
        schedule.alpha_bar_at(t),
        schedule.beta_bar_at(t),
        schedule.gamma_bar_at(t),
    )
    abar_p, bbar_p, gbar_p = (
        schedule.alpha_bar_at(t - 1),
        schedule.beta_bar_at(t - 1),
        schedule.gamma_bar_at(t - 1),
    )

    out = np.zeros(x_t.shape + (V + 2,), dtype=np.float64)
    is_code = x_t <= V
    is_mask = x_t == mask_state(V)
    is_pad = x_t == pad_state(V)

    if np.any(is_mask) and gbar <= 0.0:
        raise SamplerError("MASK observed under a schedule with gamma_bar_t = 0")

    if np.any(is_code):
        m = x_t[is_code]  # (P,)
        p_codes = probs[is_code]  # (P, V)
        if bbar > 0.0:
            den = np.full_like(p_codes, bbar)
            rows = np.arange(m.shape[0])
            den[rows, m - 1] += abar
            r = p_codes / den
            total_r = r.sum(axis=-1, keepdims=True)
            mix = bbar_p * total_r + abar_p * r  # (P, V)
            coeff = np.full_like(p_codes, beta_t)
            coeff[rows, m - 1] += alpha_t
            out[is_code, :V] = coeff * mix
        else:
            rows = np.where(is_code)
            out[rows + (m - 1,)] = 1.0

    if np.any(is_mask):
        p_codes = probs[is_mask]
        out[is_mask, :V] = gamma_t * (bbar_p + abar_p * p_codes) / gbar
        out[is_mask, V] = gbar_p / gbar

    out[is_pad, V + 1] = 1.0
    return out


def reverse_step_grad_probs(
    x_t: np.ndarray,
    t: int,
    dist_grad: np.ndarray,
    probs: np.ndarray,
    schedule: NoiseSchedule,
) -> np.ndarray:
    """Backpropagate a gradient w.r.t. the reverse distribution onto probs.

    ``dist_grad`` has shape (..., V+2) matching ``reverse_step_array``
    output; the return has shape (..., V).  Mirrors the forward cases
    exactly so finite differences through the whole loss agree.
    """
    x_t = np.asarray(x_t, dtype=np.int64)
    V = schedule.vocab_size
    i = t - 1
    alpha_t, beta_t, gamma_t = (
        float(schedule.alpha[i]),
        float(schedule.beta[i]),
        float(schedule.gamma[i]),
    )
    abar, bbar, gbar = (
        schedule.alpha_bar_at(t),
        schedule.beta_bar_at(t),
        schedule.gamma_bar_at(t),
    )
    abar_p, bbar_p, gbar_p = (
        schedule.alpha_bar_at(t - 1),
        schedule.beta_bar_at(t - 1),
        schedule.gamma_bar_at(t - 1),
    )
    del gbar_p  # constant term, no probs dependence

    grad = np.zeros(x_t.shape + (V,), dtype=np.float64)
    is_code = x_t <= V
    is_mask = x_t == mask_state(V)

    if np.any(is_code) and bbar > 0.0:
        m = x_t[is_code]
        s = dist_grad[is_code, :V]  # (P, V)
        rows = np.arange(m.shape[0])
        coeff = np.full_like(s, beta_t)
        coeff[rows, m - 1] += alpha_t
        den = np.full_like(s, bbar)
        den[rows, m - 1] += abar
        # d p(w) / d probs_n = coeff_w * (bbar_p + abar_p*[w=n]) / den_n
        a_sum = (s * coeff).sum(axis=-1, keepdims=True)
        grad[is_code] = (bbar_p * a_sum + abar_p * s * coeff) / den

    if np.any(is_mask):
        s = dist_grad[is_mask, :V]
        grad[is_mask] = gamma_t * abar_p * s / gbar

    return grad


def reverse_step_distribution(
    x_t: TokenGrid, t: int, probs: np.ndarray, schedule: NoiseSchedule
) -> np.ndarray:
    """Per-position categorical over x_{t-1} for a single grid; (N, C, V+2)."""
    return reverse_step_array(x_t.values, t, probs, schedule)


# ---------------------------------------------------------------------------
# Stationary initialization and sampling loops
# ---------------------------------------------------------------------------


def stationary_distribution(schedule: NoiseSchedule) -> np.ndarray:
    """Reference distribution of x_T with no knowledge of the data.

    Marginalizing the closed-form T-step corruption over a uniformly random
    clean code gives mass gamma_bar_T on MASK and alpha_bar_T/V + beta_bar_T
    on each code; with a fully absorbing schedule this is all-MASK.
    """
    V = schedule.vocab_size
    T = schedule.timesteps
    out = np.zeros(V + 2, dtype=np.float64)
    out[:V] = schedule.alpha_bar_at(T) / V + schedule.beta_bar_at(T)
    out[V] = schedule.gamma_bar_at(T)
    return out


def _sample_categorical(
    dist: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Sample 1-based state indices from (..., K) probability vectors."""
    cdf = np.cumsum(dist, axis=-1)
    u = rng.random(dist.shape[:-1] + (1,))
    idx = (u > cdf).sum(axis=-1) + 1
    return np.minimum(idx, dist.shape[-1]).astype(np.int64)


def sample_token_batch(
    n_samples: int,
    n_frames: int,
    n_channels: int,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    mask_trace: list | None = None,
) -> np.ndarray:
    """Run the full reverse chain for a batch; returns (B, N, C) int64.

    x_T is drawn from the stationary mixture, then t = T..1 samples each
    position from the reparameterized reverse distribution.  Appends the
    MASK count after each step to ``mask_trace`` when given (index 0 holds
    the count at t=T before any denoising).

    Raises:
        SamplerError: if any MASK token survives at t=0, which can only
            happen when a schedule with gamma_bar_T < 1 mishandles the
            absorbing state.
    """
    V = schedule.vocab_size
    shape = (n_samples, n_frames, n_channels)
    init = stationary_distribution(schedule)
    x = _sample_categorical(np.broadcast_to(init, shape + (V + 2,)), rng)
    if mask_trace is not None:
        mask_trace.append(int((x == mask_state(V)).sum()))
    for t in range(schedule.timesteps, 0, -1):
        probs = denoiser(x, t)
        dist = reverse_step_array(x, t, probs, schedule)
        x = _sample_categorical(dist, rng)
        if mask_trace is not None:
            mask_trace.append(int((x == mask_state(V)).sum()))
    if np.any(x == mask_state(V)):
        raise SamplerError(
            "MASK tokens survived the full reverse chain; the schedule or "
            "reverse step handling is misconfigured"
        )
    return x


def sample_sequence(
    n_frames: int,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    n_channels: int = 3,
    mask_trace: list | None = None,
) -> TokenGrid:
    """Generate one MASK-free token grid of the requested length."""
    values = sample_token_batch(
        1, n_frames, n_channels, denoiser, schedule, rng, mask_trace=mask_trace
    )[0]
    return TokenGrid(values=values, vocab_size=schedule.vocab_size)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


@dataclass
class LossBreakdown:
    """Training loss terms; ``lam`` and ``delta`` are the weights applied to
    the auxiliary and length terms (the length value already carries its
    weight)."""

    l_vb: float
    l_aux: float
    l_len: float
    lam: float
    delta: float

    @property
    def total(self) -> float:
        return self.l_vb + self.lam * self.l_aux + self.l_len


def _clamped_log(p: np.ndarray) -> np.ndarray:
    clamped = p < PROB_FLOOR
    if np.any(clamped):
        clamp_warnings.add(clamped.sum())
    return np.log(np.maximum(p, PROB_FLOOR))


def _kl_rows(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """KL(q || p) along the last axis with the documented probability floor."""
    logq = np.where(q > 0.0, np.log(np.maximum(q, PROB_FLOOR)), 0.0)
    return (q * (logq - _clamped_log(p))).sum(axis=-1)


def vlb_terms(
    x0: np.ndarray,
    x_t: np.ndarray,
    t: int,
    probs: np.ndarray,
    schedule: NoiseSchedule,
) -> float:
    """Variational-bound term for one timestep, summed over non-PAD positions.

    For t >= 2 this is KL(q(x_{t-1}|x_t,x0) || p(x_{t-1}|x_t)); at t = 1 it
    is the negative log-likelihood of the true clean tokens under the final
    reverse step.
    """
    V = schedule.vocab_size
    x0 = np.asarray(x0, dtype=np.int64)
    x_t = np.asarray(x_t, dtype=np.int64)
    active = x0 != pad_state(V)
    p_rev = reverse_step_array(x_t, t, probs, schedule)
    if t == 1:
        chosen = np.take_along_axis(p_rev, x0[..., None] - 1, -1)[..., 0]
        return float(-(_clamped_log(chosen) * active).sum())
    q_post = posterior_array(x_t, x0, t, schedule)
    return float((_kl_rows(q_post, p_rev) * active).sum())


def terminal_kl(x0: np.ndarray, schedule: NoiseSchedule) -> float:
    """KL(q(x_T | x0) || stationary) summed over non-PAD positions.

    Constant with respect to any model parameters; reported once per
    schedule for completeness of the bound.
    """
    x0 = np.asarray(x0, dtype=np.int64)
    V = schedule.vocab_size
    active = x0 != pad_state(V)
    q_T = forward_marginal_array(x0, schedule.timesteps, schedule)
    prior = stationary_distribution(schedule)
    return float((_kl_rows(q_T, np.broadcast_to(prior, q_T.shape)) * active).sum())


def aux_nll(x0: np.ndarray, probs: np.ndarray, vocab_size: int) -> float:
    """Mean negative log-likelihood of clean codes under the denoiser output."""
    x0 = np.asarray(x0, dtype=np.int64)
    active = x0 != pad_state(vocab_size)
    n_active = int(active.sum())
    if n_active == 0:
        return 0.0
    idx = np.minimum(x0, vocab_size) - 1  # PAD rows are masked out below
    chosen = np.take_along_axis(probs, idx[..., None], -1)[..., 0]
    return float(-(_clamped_log(chosen) * active).sum() / n_active)


def combined_loss(
    x0: np.ndarray,
    x_t: np.ndarray,
    t: int,
    probs: np.ndarray,
    schedule: NoiseSchedule,
    lam: float = 1.0,
    delta: float = 0.01,
    l_len: float = 0.0,
) -> LossBreakdown:
    """Variational term plus weighted auxiliary clean-token likelihood.

    The length-prediction loss is computed by the caller (it depends on the
    condition encoder, not on this module) and passed through.
    """
    if lam < 0.0:
        raise SamplerError("auxiliary weight must be nonnegative")
    l_vb = vlb_terms(x0, x_t, t, probs, schedule)
    l_aux = aux_nll(x0, probs, schedule.vocab_size) if lam > 0.0 else 0.0
    return LossBreakdown(l_vb=l_vb, l_aux=l_aux, l_len=l_len, lam=lam, delta=delta)


def loss_probs_grad(
    x0: np.ndarray,
    x_t: np.ndarray,
    t: int,
    probs: np.ndarray,
    schedule: NoiseSchedule,
    lam: float,
) -> np.ndarray:
    """Analytic d(l_vb + lam*l_aux)/d(probs); shape (..., V).

    Matches ``combined_loss`` exactly, including the probability floor
    (floored entries contribute zero gradient) and PAD exclusion.
    """
    V = schedule.vocab_size
    x0 = np.asarray(x0, dtype=np.int64)
    x_t = np.asarray(x_t, dtype=np.int64)
    active = x0 != pad_state(V)
    p_rev = reverse_step_array(x_t, t, probs, schedule)

    # s = dL/d(p_rev)
    s = np.zeros_like(p_rev)
    if t == 1:
        chosen = np.take_along_axis(p_rev, x0[..., None] - 1, -1)[..., 0]
        live = (chosen >= PROB_FLOOR) & active
        np.put_along_axis(
            s,
            x0[..., None] - 1,
            np.where(live, -1.0 / np.maximum(chosen, PROB_FLOOR), 0.0)[..., None],
            -1,
        )
    else:
        q_post = posterior_array(x_t, x0, t, schedule)
        live = p_rev >= PROB_FLOOR
        s = np.where(live, -q_post / np.maximum(p_rev, PROB_FLOOR), 0.0)
        s *= active[..., None]

    grad = reverse_step_grad_probs(x_t, t, s, probs, schedule)

    n_active = int(active.sum())
    if lam > 0.0 and n_active > 0:
        idx = np.minimum(x0, V) - 1  # PAD rows are masked out below
        chosen = np.take_along_axis(probs, idx[..., None], -1)[..., 0]
        live = (chosen >= PROB_FLOOR) & active
        aux = np.where(live, -lam / n_active / np.maximum(chosen, PROB_FLOOR), 0.0)
        take = np.take_along_axis(grad, idx[..., None], -1)[..., 0] + aux
        np.put_along_axis(grad, idx[..., None], take[..., None], -1)
    return grad


# ---------------------------------------------------------------------------
# Exact oracle denoiser
# ---------------------------------------------------------------------------


class OracleDenoiser:
    """Bayes-exact clean-token predictor over an enumerable corpus.

    Given corrupted tokens x_t, weights every stored sequence s by its
    empirical frequency times the exact likelihood prod_i q(x_t_i | s_i)
    and returns per-position marginals over the codes.  Only sequences
    whose grid shape matches the query participate; an optional condition
    key restricts candidates further.
    """

    def __init__(
        self,
        dataset: Sequence[tuple[object, np.ndarray]] | Sequence[np.ndarray],
        schedule: NoiseSchedule,
        condition: object | None = None,
    ) -> None:
        self.schedule = schedule
        self.vocab_size = schedule.vocab_size
        self._groups: dict[tuple[int, int], np.ndarray] = {}
        grids: list[np.ndarray] = []
        for entry in dataset:
            key, values = entry if isinstance(entry, tuple) else (None, entry)
            if condition is not None and key != condition:
                continue
            values = np.asarray(values, dtype=np.int64)
            if np.any(values == mask_state(self.vocab_size)):
                raise KernelError("oracle corpus must contain clean grids")
            grids.append(values)
        if not grids:
            raise SamplerError(
                f"no dataset sequences available for condition {condition!r}"
            )
        by_shape: dict[tuple[int, int], list[np.ndarray]] = {}
        for g in grids:
            by_shape.setdefault(g.shape, []).append(g)
        for shape, members in by_shape.items():
            self._groups[shape] = np.stack(members)

    def __call__(self, x_t: np.ndarray, t: int) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=np.int64)
        shape = x_t.shape[-2:]
        if shape not in self._groups:
            raise SamplerError(
                f"no dataset sequence of shape {shape}; available: "
                f"{sorted(self._groups)}"
            )
        cands = self._groups[shape]  # (S, N, C) clean grids
        V = self.vocab_size
        abar = self.schedule.alpha_bar_at(t)
        bbar = self.schedule.beta_bar_at(t)
        gbar = self.schedule.gamma_bar_at(t)

        xt = x_t[..., None, :, :]  # (..., 1, N, C)
        sc = cands[(None,) * (x_t.ndim - 2)]  # (..., S, N, C) broadcast
        cand_pad = sc == pad_state(V)
        xt_code = xt <= V
        xt_mask = xt == mask_state(V)
        xt_pad = xt == pad_state(V)

        eq = xt_code & (sc == xt)
        mis = xt_code & ~cand_pad & (sc != xt)
        masked = xt_mask & ~cand_pad
        # Impossible pairings zero the whole candidate.
        impossible = (xt_code & cand_pad) | (xt_mask & cand_pad) | (xt_pad & ~cand_pad)

        def _count_log(count: np.ndarray, value: float) -> np.ndarray:
            # count * log(value) with the 0 * log(0) = 0 convention; a
            # positive count of a zero-probability event sinks the weight.
            if value > 0.0:
                return count * math.log(value)
            return np.where(count > 0, -np.inf, 0.0)

        logw = (
            _count_log(eq.sum(axis=(-2, -1)), abar + bbar)
            + _count_log(mis.sum(axis=(-2, -1)), bbar)
            + _count_log(masked.sum(axis=(-2, -1)), gbar)
        )
        logw = np.where(impossible.any(axis=(-2, -1)), -np.inf, logw)
        top = logw.max(axis=-1, keepdims=True)
        if np.any(~np.isfinite(top)):
            raise SamplerError(
                "no stored sequence is consistent with the corrupted input"
            )
        w = np.exp(logw - top)
        w /= w.sum(axis=-1, keepdims=True)

        onehot = np.zeros(cands.shape + (V,), dtype=np.float64)
        code_pos = cands <= V
        idx = np.where(code_pos)
        onehot[idx + (cands[code_pos] - 1,)] = 1.0
        probs = np.einsum("...s,sncv->...ncv", w, onehot)
        # Positions covered only by PAD candidates carry no code mass; give
        # them a uniform placeholder (they are excluded from losses anyway).
        norm = probs.sum(axis=-1, keepdims=True)
        probs = np.where(norm > 0.0, probs / np.maximum(norm, 1e-300), 1.0 / V)
        return probs


def oracle_denoiser(
    x_t: TokenGrid,
    t: int,
    condition: object | None,
    dataset: Sequence[tuple[object, np.ndarray]],
    schedule: NoiseSchedule,
) -> np.ndarray:
    """One-shot functional wrapper around :class:`OracleDenoiser`."""
    return OracleDenoiser(dataset, schedule, condition=condition)(x_t.values, t)


__all__ = [
    "Denoiser",
    "LossBreakdown",
    "OracleDenoiser",
    "SamplerError",
    "aux_nll",
    "clamp_warnings",
    "combined_loss",
    "loss_probs_grad",
    "oracle_denoiser",
    "reverse_step_array",
    "reverse_step_distribution",
    "reverse_step_grad_probs",
    "sample_sequence",
    "sample_token_batch",
    "stationary_distribution",
    "terminal_kl",
    "vlb_terms",
]
