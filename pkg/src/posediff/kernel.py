"""Categorical transition kernels for mask-and-replace token corruption.

Tokens are 1-based: codes are 1..V, MASK = V+1, PAD = V+2.  MASK and PAD
are absorbing: once a chain enters either state it never leaves, and PAD
only ever arises from PAD (it marks positions past the true sequence
length, not corruption).  Probability vectors over the V+2 states are
returned as float64 arrays indexed by ``state - 1``.

Transition matrices are column-indexed: entry [m, n] is the probability
of moving to state m+1 given current state n+1.  Production code never
multiplies the matrices together; the t-step marginal and the one-step
posterior both use O(V) closed forms.  Explicit matrices exist for the
single-step kernels (and for test oracles that do materialize products).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schedule import NoiseSchedule


class KernelError(ValueError):
    """Raised for invalid tokens, unreachable states, or bad kernel inputs."""


def mask_state(vocab_size: int) -> int:
    """1-based index of the MASK token."""
    return vocab_size + 1


def pad_state(vocab_size: int) -> int:
    """1-based index of the PAD token."""
    return vocab_size + 2


@dataclass
class TokenGrid:
    """A frames-by-channels grid of discrete code indices.

    ``values`` holds 1-based states in [1, V+2]; clean data never contains
    MASK.  The channel count is 3 for the default three-patch skeleton
    split and 1 for the single-patch ablation.
    """

    values: np.ndarray
    vocab_size: int

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.int64)
        if values.ndim != 2:
            raise KernelError("token grid must be 2-dimensional (frames x channels)")
        if values.size and (values.min() < 1 or values.max() > self.vocab_size + 2):
            raise KernelError(
                f"token values must lie in [1, {self.vocab_size + 2}]"
            )
        self.values = values

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def is_clean(self) -> bool:
        """True when the grid contains no MASK tokens."""
        return not np.any(self.values == mask_state(self.vocab_size))

    def require_clean(self) -> None:
        if not self.is_clean():
            raise KernelError("clean token grids must not contain MASK")


# ---------------------------------------------------------------------------
# Explicit one-step matrices
# ---------------------------------------------------------------------------


def uniform_matrix(alpha_t: float, vocab_size: int) -> np.ndarray:
    """V x V uniform-resampling kernel: keep with alpha, else uniform.

    Diagonal entries are alpha_t + beta_t and off-diagonals beta_t with
    beta_t = (1 - alpha_t) / V, which makes every column sum to one.
    This variant has no MASK/PAD states; it exists for ablations only.
    """
    if not 0.0 <= alpha_t <= 1.0:
        raise KernelError(f"alpha_t must lie in [0, 1], got {alpha_t}")
    beta_t = (1.0 - alpha_t) / vocab_size
    mat = np.full((vocab_size, vocab_size), beta_t, dtype=np.float64)
    np.fill_diagonal(mat, alpha_t + beta_t)
    return mat


def mask_replace_matrix(
    alpha_t: float, beta_t: float, gamma_t: float, vocab_size: int
) -> np.ndarray:
    """(V+2) x (V+2) mask-and-replace kernel.

    Code columns: keep alpha_t, uniform-resample beta_t per code, mask
    gamma_t, never PAD.  The MASK and PAD columns are absorbing point
    masses on themselves.
    """
    total = alpha_t + vocab_size * beta_t + gamma_t
    if abs(total - 1.0) > 1e-9:
        raise KernelError(
            f"alpha + V*beta + gamma must equal 1, got {total!r}"
        )
    if min(alpha_t, beta_t, gamma_t) < -1e-12:
        raise KernelError("per-step masses must be nonnegative")
    n = vocab_size + 2
    mat = np.zeros((n, n), dtype=np.float64)
    mat[:vocab_size, :vocab_size] = beta_t
    np.fill_diagonal(mat[:vocab_size, :vocab_size], alpha_t + beta_t)
    mat[vocab_size, :vocab_size] = gamma_t  # code -> MASK
    mat[vocab_size, vocab_size] = 1.0  # MASK absorbing
    mat[vocab_size + 1, vocab_size + 1] = 1.0  # PAD absorbing
    return mat


def step_matrix(schedule: NoiseSchedule, t: int) -> np.ndarray:
    """Mask-and-replace matrix for step t of a schedule."""
    schedule.check_timestep(t)
    i = t - 1
    return mask_replace_matrix(
        float(schedule.alpha[i]),
        float(schedule.beta[i]),
        float(schedule.gamma[i]),
        schedule.vocab_size,
    )


# ---------------------------------------------------------------------------
# Closed-form marginals, corruption sampling, posterior
# ---------------------------------------------------------------------------


def _check_clean_tokens(tokens: np.ndarray, vocab_size: int) -> None:
    if np.any(tokens == mask_state(vocab_size)):
        raise KernelError("clean input tokens must not be MASK")
    if tokens.size and (tokens.min() < 1 or tokens.max() > vocab_size + 2):
        raise KernelError(f"token values must lie in [1, {vocab_size + 2}]")


def forward_marginal_array(
    x0: np.ndarray, t: int, schedule: NoiseSchedule
) -> np.ndarray:
    """t-step marginal q(x_t | x_0) for an array of clean tokens.

    Returns shape ``x0.shape + (V+2,)``.  For a code token the mass is
    alpha_bar + beta_bar on the original value, beta_bar on every other
    code, gamma_bar on MASK and zero on PAD; a PAD token stays PAD with
    probability one.  Accepts t=0 (identity marginal).
    """
    schedule.check_timestep(t, minimum=0)
    x0 = np.asarray(x0, dtype=np.int64)
    V = schedule.vocab_size
    _check_clean_tokens(x0, V)
    a = schedule.alpha_bar_at(t)
    b = schedule.beta_bar_at(t)
    g = schedule.gamma_bar_at(t)
    out = np.zeros(x0.shape + (V + 2,), dtype=np.float64)
    is_pad = x0 == pad_state(V)
    out[..., :V] = b
    out[..., V] = g
    np.put_along_axis(
        out, x0[..., None] - 1, np.take_along_axis(out, x0[..., None] - 1, -1) + a, -1
    )
    out[is_pad] = 0.0
    out[is_pad, V + 1] = 1.0
    return out


def forward_marginal(x0_token: int, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """t-step marginal for a single clean token; shape (V+2,)."""
    return forward_marginal_array(np.array([x0_token]), t, schedule)[0]


def sample_corrupted(
    x0: TokenGrid, t: int, schedule: NoiseSchedule, rng: np.random.Generator
) -> TokenGrid:
    """Draw x_t ~ q(x_t | x_0) independently per position.

    Equivalent to sampling each position from its closed-form marginal:
    with probability alpha_bar keep, with V*beta_bar resample uniformly
    over codes (possibly landing back on the original), else MASK.  PAD
    positions stay PAD.  Deterministic given the generator state.
    """
    schedule.check_timestep(t)
    x0.require_clean()
    if x0.vocab_size != schedule.vocab_size:
        raise KernelError("grid and schedule vocab sizes disagree")
    V = schedule.vocab_size
    a = schedule.alpha_bar_at(t)
    g = schedule.gamma_bar_at(t)
    values = x0.values.copy()
    u = rng.random(values.shape)
    uniform_draw = rng.integers(1, V + 1, size=values.shape)
    resample = (u >= a) & (u < 1.0 - g)
    to_mask = u >= 1.0 - g
    values[resample] = uniform_draw[resample]
    values[to_mask] = mask_state(V)
    pad = x0.values == pad_state(V)
    values[pad] = pad_state(V)
    return TokenGrid(values=values, vocab_size=V)


def posterior_array(
    x_t: np.ndarray, x0: np.ndarray, t: int, schedule: NoiseSchedule
) -> np.ndarray:
    """Exact one-step posterior q(x_{t-1} | x_t, x_0) per position.

    Bayes' rule with both factors in closed form:

        q(x_{t-1}=w | x_t, x_0)
            = q(x_t | x_{t-1}=w) * q(x_{t-1}=w | x_0) / q(x_t | x_0)

    evaluated in O(V) per position, never via matrix products.  The t=1
    base case uses the identity zero-step marginal, so the posterior is a
    point mass on x_0.  Returns shape ``x_t.shape + (V+2,)``.

    Raises:
        KernelError: when q(x_t | x_0) = 0, i.e. x_t is unreachable from
            x_0 (corrupted chain state, impossible for honest forward
            samples).
    """
    schedule.check_timestep(t)
    x_t = np.asarray(x_t, dtype=np.int64)
    x0 = np.asarray(x0, dtype=np.int64)
    if x_t.shape != x0.shape:
        raise KernelError("x_t and x_0 shapes must match")
    V = schedule.vocab_size
    MASK, PAD = mask_state(V), pad_state(V)
    _check_clean_tokens(x0, V)

    prev = forward_marginal_array(x0, t - 1, schedule)  # q(x_{t-1} | x_0)
    denom_full = forward_marginal_array(x0, t, schedule)
    denom = np.take_along_axis(denom_full, x_t[..., None] - 1, -1)[..., 0]
    if np.any(denom <= 0.0):
        raise KernelError(
            "x_t is unreachable from x_0 at this timestep (zero-probability "
            "transition); the chain state is corrupted"
        )

    i = t - 1
    alpha_t, beta_t, gamma_t = (
        float(schedule.alpha[i]),
        float(schedule.beta[i]),
        float(schedule.gamma[i]),
    )
    # step[w] = q(x_t | x_{t-1} = w) for the observed x_t, by case on x_t.
    step = np.zeros(x_t.shape + (V + 2,), dtype=np.float64)
    is_code = x_t <= V
    is_mask = x_t == MASK
    is_pad = x_t == PAD
    step[is_code, :V] = beta_t
    code_rows = np.where(is_code)
    step[code_rows + (x_t[is_code] - 1,)] += alpha_t
    step[is_mask, :V] = gamma_t
    step[is_mask, V] = 1.0
    step[is_pad, V + 1] = 1.0

    return step * prev / denom[..., None]


def posterior(
    x_t_token: int, x0_token: int, t: int, schedule: NoiseSchedule
) -> np.ndarray:
    """Posterior over x_{t-1} for a single (x_t, x_0) pair; shape (V+2,)."""
    return posterior_array(
        np.array([x_t_token]), np.array([x0_token]), t, schedule
    )[0]


# ---------------------------------------------------------------------------
# Test-oracle helpers (explicit products; not used by production paths)
# ---------------------------------------------------------------------------


def cumulative_matrix(schedule: NoiseSchedule, t: int) -> np.ndarray:
    """Explicit product Q_t ... Q_1 for oracles; t=0 gives the identity."""
    schedule.check_timestep(t, minimum=0)
    n = schedule.vocab_size + 2
    mat = np.eye(n, dtype=np.float64)
    for step in range(1, t + 1):
        mat = step_matrix(schedule, step) @ mat
    return mat


def dump_matrix_csv(matrix: np.ndarray, path: str) -> None:
    """Write a transition matrix as CSV for inspection."""
    np.savetxt(path, matrix, delimiter=",", fmt="%.17g")


__all__ = [
    "KernelError",
    "TokenGrid",
    "mask_state",
    "pad_state",
    "uniform_matrix",
    "mask_replace_matrix",
    "step_matrix",
    "forward_marginal",
    "forward_marginal_array",
    "sample_corrupted",
    "posterior",
    "posterior_array",
    "cumulative_matrix",
    "dump_matrix_csv",
]
