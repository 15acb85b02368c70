"""Corruption schedules for mask-and-replace categorical diffusion.

A schedule fixes, for every timestep t in 1..T, how a single token is
corrupted: it survives the step with probability alpha_t, is resampled
uniformly over the V codes with probability V*beta_t, or drops into the
absorbing MASK state with probability gamma_t.  The per-step masses must
satisfy alpha_t + V*beta_t + gamma_t = 1.

The t-step marginal of one token is governed by the cumulative quantities

    alpha_bar_t = prod_{i<=t} alpha_i          (survival so far)
    gamma_bar_t = 1 - prod_{i<=t} (1 - gamma_i)  (masked by now)
    beta_bar_t  = (1 - alpha_bar_t - gamma_bar_t) / V

which again form a probability vector: alpha_bar_t + V*beta_bar_t +
gamma_bar_t = 1.  Schedules are specified through linear cumulative
endpoints and inverted to per-step coefficients, so the closed-form
marginals and the step-wise chain agree exactly.

All arrays are float64; cumulative products use running products (T stays
in the hundreds, no underflow risk).  A built schedule is immutable and
safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ScheduleError(ValueError):
    """Raised when schedule parameters cannot form a valid corruption chain."""


#: Sum constraints are enforced at this tolerance.
_SUM_ATOL = 1e-12

# Default cumulative endpoints: survival decays to a small floor (kept
# strictly positive so per-step inversion stays well defined) while the
# masked fraction climbs to 0.9.
DEFAULT_ALPHA_BAR_END = 0.01
DEFAULT_GAMMA_BAR_END = 0.9


@dataclass(frozen=True)
class ScheduleSpec:
    """Serializable description of a schedule (kind plus endpoints).

    ``mask_and_replace`` keeps a uniform-resampling component; ``mask_only``
    forces beta to zero at every step (pure absorbing corruption, the
    one-shot iterative-refinement special case when T=1).
    """

    kind: str = "mask_and_replace"
    alpha_bar_end: float = DEFAULT_ALPHA_BAR_END
    gamma_bar_end: float = DEFAULT_GAMMA_BAR_END

    def __post_init__(self) -> None:
        if self.kind not in ("mask_and_replace", "mask_only"):
            raise ScheduleError(f"unknown schedule kind: {self.kind!r}")

    def resolved_endpoints(self) -> tuple[float, float]:
        """Final (alpha_bar_T, gamma_bar_T), with mask_only pinned to (0, 1)."""
        if self.kind == "mask_only":
            return 0.0, 1.0
        return float(self.alpha_bar_end), float(self.gamma_bar_end)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "alpha_bar_end": self.alpha_bar_end,
            "gamma_bar_end": self.gamma_bar_end,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScheduleSpec":
        return cls(
            kind=d.get("kind", "mask_and_replace"),
            alpha_bar_end=float(d.get("alpha_bar_end", DEFAULT_ALPHA_BAR_END)),
            gamma_bar_end=float(d.get("gamma_bar_end", DEFAULT_GAMMA_BAR_END)),
        )


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step and cumulative corruption coefficients for T timesteps.

    Arrays are indexed by t-1 (entry 0 holds the coefficients of step 1).
    ``alpha_bar_at`` and friends accept t in 0..T, with t=0 denoting the
    uncorrupted state (alpha_bar=1, gamma_bar=0, beta_bar=0).
    """

    timesteps: int
    vocab_size: int
    alpha: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    alpha_bar: np.ndarray
    gamma_bar: np.ndarray
    beta_bar: np.ndarray
    spec: ScheduleSpec = field(default_factory=ScheduleSpec)

    def __post_init__(self) -> None:
        T, V = self.timesteps, self.vocab_size
        if T < 1:
            raise ScheduleError("timestep count must be >= 1")
        if V < 1:
            raise ScheduleError("vocab_size must be >= 1")
        for name in ("alpha", "gamma", "beta", "alpha_bar", "gamma_bar", "beta_bar"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (T,):
                raise ScheduleError(f"{name} must have shape ({T},)")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        self._validate()

    def _validate(self) -> None:
        V = self.vocab_size
        per_step = self.alpha + V * self.beta + self.gamma
        if np.max(np.abs(per_step - 1.0)) > 1e-9:
            raise ScheduleError("per-step masses must sum to 1")
        cumulative = self.alpha_bar + V * self.beta_bar + self.gamma_bar
        if np.max(np.abs(cumulative - 1.0)) > _SUM_ATOL:
            raise ScheduleError("cumulative masses must sum to 1")
        for name in ("alpha", "gamma", "beta", "alpha_bar", "gamma_bar", "beta_bar"):
            arr = getattr(self, name)
            if np.any(arr < -_SUM_ATOL) or np.any(arr > 1.0 + _SUM_ATOL):
                raise ScheduleError(f"{name} must lie in [0, 1]")
        if np.any(np.diff(self.alpha_bar) > _SUM_ATOL):
            raise ScheduleError("alpha_bar must be non-increasing")
        if np.any(np.diff(self.gamma_bar) < -_SUM_ATOL):
            raise ScheduleError("gamma_bar must be non-decreasing")

    # -- cumulative lookups with the t=0 convention ------------------------

    def alpha_bar_at(self, t: int) -> float:
        """alpha_bar_t for t in 0..T (t=0 is the clean state)."""
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def gamma_bar_at(self, t: int) -> float:
        return 0.0 if t == 0 else float(self.gamma_bar[t - 1])

    def beta_bar_at(self, t: int) -> float:
        return 0.0 if t == 0 else float(self.beta_bar[t - 1])

    def check_timestep(self, t: int, minimum: int = 1) -> None:
        if not (minimum <= t <= self.timesteps):
            raise ScheduleError(
                f"timestep {t} outside [{minimum}, {self.timesteps}]"
            )


def per_step_from_cumulative(
    alpha_bar: np.ndarray, gamma_bar: np.ndarray, vocab_size: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Invert cumulative coefficients into per-step (alpha, gamma, beta).

    Uses alpha_t = alpha_bar_t / alpha_bar_{t-1} and
    gamma_t = 1 - (1 - gamma_bar_t) / (1 - gamma_bar_{t-1}) with the
    t=0 convention alpha_bar_0 = 1, gamma_bar_0 = 0, then
    beta_t = (1 - alpha_t - gamma_t) / V.

    Raises:
        ScheduleError: if alpha_bar hits zero before the final step (the
            chain would be fully corrupted too early for the requested T),
            or if gamma_bar reaches one before the final step.
    """
    alpha_bar = np.asarray(alpha_bar, dtype=np.float64)
    gamma_bar = np.asarray(gamma_bar, dtype=np.float64)
    T = alpha_bar.shape[0]
    prev_a = np.concatenate(([1.0], alpha_bar[:-1]))
    prev_g = np.concatenate(([0.0], gamma_bar[:-1]))
    if np.any(prev_a == 0.0):
        raise ScheduleError(
            "alpha_bar reaches zero before the final step; "
            "per-step inversion is undefined"
        )
    if np.any(prev_g == 1.0):
        raise ScheduleError(
            "gamma_bar reaches one before the final step; "
            "per-step inversion is undefined"
        )
    alpha = alpha_bar / prev_a
    gamma = 1.0 - (1.0 - gamma_bar) / (1.0 - prev_g)
    beta = (1.0 - alpha - gamma) / vocab_size
    # Exact-zero cleanup for mask-only style schedules where the linear
    # construction makes beta analytically zero but roundoff leaves ~1e-17.
    beta[np.abs(beta) < 1e-15] = np.abs(beta[np.abs(beta) < 1e-15])
    return alpha, gamma, beta


def cumulative_from_per_step(
    alpha: np.ndarray, gamma: np.ndarray, vocab_size: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rebuild cumulative coefficients from per-step ones (running products)."""
    alpha_bar = np.cumprod(np.asarray(alpha, dtype=np.float64))
    gamma_bar = 1.0 - np.cumprod(1.0 - np.asarray(gamma, dtype=np.float64))
    beta_bar = (1.0 - alpha_bar - gamma_bar) / vocab_size
    return alpha_bar, gamma_bar, beta_bar


def build_schedule(
    timesteps: int,
    vocab_size: int,
    spec: ScheduleSpec | None = None,
) -> NoiseSchedule:
    """Construct a schedule with linear cumulative trajectories.

    alpha_bar interpolates linearly from 1 (at a virtual t=0) down to the
    spec's final value, gamma_bar from 0 up to its final value, both on the
    grid t/T.  The per-step coefficients come from exact inversion, so
    rebuilding the cumulatives from them reproduces the inputs.

    Raises:
        ScheduleError: for timesteps < 1 or endpoints that would push any
            beta_bar_t below zero (final endpoints summing above 1).
    """
    if timesteps < 1:
        raise ScheduleError("timesteps must be >= 1")
    spec = spec or ScheduleSpec()
    a_end, g_end = spec.resolved_endpoints()
    if not (0.0 <= a_end <= 1.0 and 0.0 <= g_end <= 1.0):
        raise ScheduleError("endpoints must lie in [0, 1]")
    if a_end + g_end > 1.0 + _SUM_ATOL:
        raise ScheduleError(
            f"endpoints alpha_bar_end={a_end} + gamma_bar_end={g_end} exceed 1; "
            "some beta_bar_t would be negative"
        )
    if spec.kind == "mask_and_replace" and a_end == 0.0:
        raise ScheduleError(
            "mask_and_replace needs alpha_bar_end > 0 so per-step inversion "
            "stays defined; use mask_only for an exactly absorbing endpoint"
        )
    grid = np.arange(1, timesteps + 1, dtype=np.float64) / timesteps
    alpha_bar = 1.0 + (a_end - 1.0) * grid
    if spec.kind == "mask_only":
        # Pin gamma_bar = 1 - alpha_bar exactly so beta vanishes identically.
        gamma_bar = 1.0 - alpha_bar
    else:
        gamma_bar = g_end * grid
    beta_bar = (1.0 - alpha_bar - gamma_bar) / vocab_size
    if np.any(beta_bar < -_SUM_ATOL):
        raise ScheduleError("endpoints produce a negative beta_bar")
    beta_bar = np.maximum(beta_bar, 0.0)
    alpha, gamma, beta = per_step_from_cumulative(alpha_bar, gamma_bar, vocab_size)
    return NoiseSchedule(
        timesteps=timesteps,
        vocab_size=vocab_size,
        alpha=alpha,
        gamma=gamma,
        beta=beta,
        alpha_bar=alpha_bar,
        gamma_bar=gamma_bar,
        beta_bar=beta_bar,
        spec=spec,
    )
