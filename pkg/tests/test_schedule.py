"""Tests for corruption-schedule construction and per-step inversion."""

import numpy as np
import pytest

from posediff.schedule import (
    NoiseSchedule,
    ScheduleError,
    ScheduleSpec,
    build_schedule,
    cumulative_from_per_step,
    per_step_from_cumulative,
)


def test_default_schedule_endpoints():
    sched = build_schedule(100, vocab_size=16)
    assert sched.timesteps == 100
    assert sched.alpha_bar[-1] == pytest.approx(0.01, abs=1e-12)
    assert sched.gamma_bar[-1] == pytest.approx(0.9, abs=1e-12)


def test_single_step_beta_bar_value():
    # alpha_bar_1 = 0.5, gamma_bar_1 = 0.3, V = 4 -> beta_bar_1 = 0.05
    spec = ScheduleSpec(alpha_bar_end=0.5, gamma_bar_end=0.3)
    sched = build_schedule(1, vocab_size=4, spec=spec)
    assert sched.beta_bar[0] == pytest.approx((1 - 0.5 - 0.3) / 4, abs=1e-15)


def test_mask_only_forces_zero_beta_and_alpha():
    sched = build_schedule(10, vocab_size=8, spec=ScheduleSpec(kind="mask_only"))
    assert np.all(sched.beta_bar >= 0.0)
    assert np.all(sched.beta_bar == 0.0)
    assert np.all(sched.beta == 0.0)
    assert sched.gamma_bar[-1] == 1.0
    assert sched.alpha_bar[-1] == 0.0


def test_rejects_zero_timesteps():
    with pytest.raises(ScheduleError):
        build_schedule(0, vocab_size=4)


def test_rejects_negative_beta_bar_endpoints():
    with pytest.raises(ScheduleError):
        build_schedule(5, vocab_size=4, spec=ScheduleSpec(alpha_bar_end=0.5, gamma_bar_end=0.6))


def test_per_step_ratio_examples():
    # alpha_bar = (0.9, 0.81) -> alpha = (0.9, 0.9)
    alpha, gamma, beta = per_step_from_cumulative(
        np.array([0.9, 0.81]), np.array([0.05, 0.0975]), vocab_size=4
    )
    np.testing.assert_allclose(alpha, [0.9, 0.9], atol=1e-12)
    # gamma_bar = (0.05, 0.0975) -> gamma = (0.05, 0.05) since 1-0.95^2 = 0.0975
    np.testing.assert_allclose(gamma, [0.05, 0.05], atol=1e-12)


def test_single_entry_beta_bar_arithmetic():
    alpha, gamma, beta = per_step_from_cumulative(
        np.array([0.81]), np.array([0.0975]), vocab_size=4
    )
    beta_bar = (1 - 0.81 - 0.0975) / 4
    assert beta[0] == pytest.approx(beta_bar, abs=1e-12)  # t=1: beta == beta_bar


def test_inversion_guard_on_early_zero():
    with pytest.raises(ScheduleError):
        per_step_from_cumulative(
            np.array([0.5, 0.0, 0.0]), np.array([0.1, 0.2, 0.3]), vocab_size=4
        )


@pytest.mark.parametrize("timesteps", [1, 2, 7, 100, 1000])
@pytest.mark.parametrize("kind", ["mask_and_replace", "mask_only"])
def test_round_trip_per_step_and_cumulative(timesteps, kind):
    sched = build_schedule(timesteps, vocab_size=11, spec=ScheduleSpec(kind=kind))
    abar, gbar, bbar = cumulative_from_per_step(sched.alpha, sched.gamma, 11)
    np.testing.assert_allclose(abar, sched.alpha_bar, atol=1e-10)
    np.testing.assert_allclose(gbar, sched.gamma_bar, atol=1e-10)
    np.testing.assert_allclose(bbar, sched.beta_bar, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_round_trip_random_valid_schedules(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 50))
    V = int(rng.integers(2, 32))
    # Random monotone cumulatives with a strictly positive survival floor.
    a_end = rng.uniform(0.01, 0.4)
    g_end = rng.uniform(0.1, 1.0 - a_end - 0.01)
    sched = build_schedule(
        T, vocab_size=V, spec=ScheduleSpec(alpha_bar_end=a_end, gamma_bar_end=g_end)
    )
    abar, gbar, bbar = cumulative_from_per_step(sched.alpha, sched.gamma, V)
    np.testing.assert_allclose(abar, sched.alpha_bar, atol=1e-10)
    np.testing.assert_allclose(gbar, sched.gamma_bar, atol=1e-10)


def test_invariant_total_mass_exact():
    for kind in ("mask_and_replace", "mask_only"):
        sched = build_schedule(123, vocab_size=7, spec=ScheduleSpec(kind=kind))
        total = sched.alpha_bar + 7 * sched.beta_bar + sched.gamma_bar
        assert np.max(np.abs(total - 1.0)) <= 1e-12


def test_default_monotonicity_strict():
    sched = build_schedule(50, vocab_size=5)
    assert np.all(np.diff(sched.alpha_bar) < 0)
    assert np.all(np.diff(sched.gamma_bar) > 0)


def test_schedule_arrays_immutable():
    sched = build_schedule(10, vocab_size=4)
    with pytest.raises(ValueError):
        sched.alpha_bar[0] = 0.5


def test_spec_round_trips_through_dict():
    spec = ScheduleSpec(kind="mask_only", alpha_bar_end=0.2, gamma_bar_end=0.7)
    assert ScheduleSpec.from_dict(spec.to_dict()) == spec


def test_mask_and_replace_requires_positive_survival_floor():
    with pytest.raises(ScheduleError):
        build_schedule(
            10, vocab_size=4, spec=ScheduleSpec(alpha_bar_end=0.0, gamma_bar_end=0.9)
        )
