import numpy as np
import pytest

from diffzsl.diffusion import DiffusionSchedule, make_schedule
from diffzsl.numerics import Rng

# Direct evaluation of the stated discretization for T=4, (0.1, 20),
# frozen after first computation.
GOLDEN_BETAS = [0.4763202784776236, 0.8490225815440854,
                0.956473050326738, 0.9874511343005119]
GOLDEN_ALPHA_BARS = [0.5236797215223764, 0.07906381245316066,
                     0.003441406585624948, 4.318574906034136e-05]
GOLDEN_KAPPAS = [0.2763428149169136, 0.7188171192032476,
                 0.9413364969881192, 0.9934284135050704]
GOLDEN_BETA_TILDES = [0.0, 0.43912561797806565,
                      0.8838924778534716, 0.9840954123614769]


def default_schedule():
    return make_schedule(4, 0.1, 20.0)


def test_schedule_golden_values():
    sched = default_schedule()
    assert np.allclose(sched.betas, GOLDEN_BETAS, rtol=0, atol=1e-15)
    assert np.allclose(sched.alpha_bars[1:], GOLDEN_ALPHA_BARS, rtol=0, atol=1e-15)
    assert np.allclose(sched.kappas[1:], GOLDEN_KAPPAS, rtol=0, atol=1e-15)
    assert np.allclose(sched.beta_tildes[1:], GOLDEN_BETA_TILDES, rtol=0, atol=1e-15)


def test_schedule_matches_direct_discretization():
    steps, bmin, bmax = 7, 0.05, 12.0
    sched = make_schedule(steps, bmin, bmax)
    for t in range(1, steps + 1):
        expo = bmin / steps + (bmax - bmin) * (2 * t - 1) / (2 * steps ** 2)
        assert abs(sched.betas[t - 1] - (1.0 - np.exp(-expo))) < 1e-15


def test_schedule_rejects_bad_range():
    with pytest.raises(ValueError):
        make_schedule(4, 0.5, 0.5)
    with pytest.raises(ValueError):
        make_schedule(4, -1.0, 2.0)
    with pytest.raises(ValueError):
        make_schedule(0, 0.1, 20.0)


def test_schedule_monotonicity():
    sched = default_schedule()
    assert np.all(np.diff(sched.alpha_bars) < 0)
    assert sched.alpha_bars[-1] < sched.alpha_bars[1] < 1.0
    assert sched.beta_tildes[1] == 0.0
    assert np.all(np.diff(sched.kappas) > 0)
    assert np.all((sched.kappas[1:] > 0) & (sched.kappas[1:] < 1))


def test_schedule_alpha_bar_zero_is_one():
    assert default_schedule().alpha_bars[0] == 1.0


def test_diffuse_step_small_beta_is_identity():
    sched = DiffusionSchedule(betas=np.array([1e-14]))
    v = Rng(0).normal((4, 3))
    out = sched.diffuse_step(v, 1, Rng(1))
    assert np.max(np.abs(out - v)) < 1e-5


def test_diffuse_step_moments():
    sched = default_schedule()
    rng = Rng(2)
    v = np.array([[0.7, -1.1, 0.4]])
    t = 2
    n = 100_000
    draws = sched.diffuse_step(np.tile(v, (n, 1)), t, rng)
    beta = sched.betas[t - 1]
    want_mean = np.sqrt(1 - beta) * v.ravel()
    se = np.sqrt(beta / n)
    assert np.all(np.abs(draws.mean(axis=0) - want_mean) < 3 * se)
    assert np.all(np.abs(draws.var(axis=0) / beta - 1.0) < 0.05)


def test_diffuse_marginal_t0_is_exact():
    sched = default_schedule()
    v = Rng(3).normal((5, 4))
    out = sched.diffuse_marginal(v, 0, Rng(4))
    assert np.array_equal(out, v)


def test_iterated_steps_match_marginal_moments():
    sched = default_schedule()
    rng = Rng(5)
    v0 = np.array([[0.9, -0.5, 0.2]])
    n = 100_000
    for t in range(1, sched.steps + 1):
        iterated = np.tile(v0, (n, 1))
        for s in range(1, t + 1):
            iterated = sched.diffuse_step(iterated, s, rng)
        ab = sched.alpha_bars[t]
        want_mean = np.sqrt(ab) * v0.ravel()
        want_var = 1.0 - ab
        se = np.sqrt(want_var / n)
        assert np.all(np.abs(iterated.mean(axis=0) - want_mean) < 3 * se)
        assert np.all(np.abs(iterated.var(axis=0) / want_var - 1.0) < 0.05)
        direct = sched.diffuse_marginal(np.tile(v0, (n, 1)), t, rng)
        assert np.all(np.abs(direct.mean(axis=0) - want_mean) < 3 * se)
        assert np.all(np.abs(direct.var(axis=0) / want_var - 1.0) < 0.05)


def test_marginal_at_full_noise_is_standard_normal():
    # deeper schedule so alpha_bar_T ~ 2e-9 and the clean signal vanishes
    sched = make_schedule(8, 0.1, 40.0)
    rng = Rng(6)
    n = 100_000
    v0 = np.full((n, 2), 1.3)
    out = sched.diffuse_marginal(v0, sched.steps, rng)
    assert np.all(np.abs(out.mean(axis=0)) < 3.0 / np.sqrt(n))
    assert np.all(np.abs(out.var(axis=0) - 1.0) < 0.05)


def test_posterior_collapses_at_t1():
    sched = default_schedule()
    rng = Rng(7)
    v0_hat = rng.normal((6, 3))
    v_1 = rng.normal((6, 3))
    out = sched.posterior_sample(v0_hat, v_1, 1, rng)
    assert np.array_equal(out, v0_hat)


def test_posterior_zero_inputs_moments():
    sched = default_schedule()
    rng = Rng(8)
    t = 3
    n = 100_000
    zeros = np.zeros((n, 2))
    out = sched.posterior_sample(zeros, zeros, t, rng)
    bt = sched.beta_tildes[t]
    assert np.all(np.abs(out.mean(axis=0)) < 3 * np.sqrt(bt / n))
    assert np.all(np.abs(out.var(axis=0) / bt - 1.0) < 0.05)


def test_posterior_mean_matches_formula():
    sched = default_schedule()
    rng = Rng(9)
    t = 4
    v0_hat = np.array([[0.4, -0.8]])
    v_t = np.array([[1.1, 0.3]])
    n = 100_000
    out = sched.posterior_sample(np.tile(v0_hat, (n, 1)), np.tile(v_t, (n, 1)), t, rng)
    ab_t, ab_prev = sched.alpha_bars[t], sched.alpha_bars[t - 1]
    beta = sched.betas[t - 1]
    mu = (np.sqrt(ab_prev) * beta / (1 - ab_t)) * v0_hat \
        + (np.sqrt(1 - beta) * (1 - ab_prev) / (1 - ab_t)) * v_t
    se = np.sqrt(sched.beta_tildes[t] / n)
    assert np.all(np.abs(out.mean(axis=0) - mu.ravel()) < 3 * se)


def test_posterior_consistency_reproduces_previous_marginal():
    # v_t ~ marginal(t), v_{t-1} ~ posterior(v0, v_t) has the marginal(t-1) law
    sched = default_schedule()
    rng = Rng(10)
    v0 = np.array([[0.6, -0.4]])
    n = 100_000
    for t in range(2, sched.steps + 1):
        tiled = np.tile(v0, (n, 1))
        v_t = sched.diffuse_marginal(tiled, t, rng)
        v_prev = sched.posterior_sample(tiled, v_t, t, rng)
        ab = sched.alpha_bars[t - 1]
        want_var = 1.0 - ab
        se = np.sqrt(want_var / n)
        assert np.all(np.abs(v_prev.mean(axis=0) - np.sqrt(ab) * v0.ravel()) < 3 * se)
        assert np.all(np.abs(v_prev.var(axis=0) / want_var - 1.0) < 0.05)


def test_posterior_shape_mismatch():
    sched = default_schedule()
    with pytest.raises(ValueError):
        sched.posterior_sample(np.zeros((2, 3)), np.zeros((3, 3)), 2, Rng(0))


def test_step_out_of_range():
    sched = default_schedule()
    with pytest.raises(ValueError):
        sched.diffuse_step(np.zeros((1, 2)), 5, Rng(0))
    with pytest.raises(ValueError):
        sched.diffuse_marginal(np.zeros((1, 2)), -1, Rng(0))
    with pytest.raises(ValueError):
        sched.n2d(0)


def test_n2d_values():
    sched = default_schedule()
    for t in range(1, 5):
        assert sched.n2d(t) == 1.0 - np.sqrt(sched.alpha_bars[t])
    assert np.all(np.diff([sched.n2d(t) for t in range(1, 5)]) > 0)
    # limiting behavior: alpha_bar -> 1 gives 0, alpha_bar -> 0 gives 1
    tiny = DiffusionSchedule(betas=np.array([1e-14]))
    assert tiny.n2d(1) < 1e-7
    big = DiffusionSchedule(betas=np.full(40, 0.9))
    assert big.n2d(40) > 1.0 - 1e-7


def test_schedule_json_round_trip():
    sched = default_schedule()
    back = DiffusionSchedule.from_json(sched.to_json())
    assert np.array_equal(back.betas, sched.betas)
    assert np.array_equal(back.alpha_bars, sched.alpha_bars)


def test_schedule_json_rejects_inconsistent_steps():
    with pytest.raises(ValueError):
        DiffusionSchedule.from_json('{"version": 1, "steps": 3, "betas": [0.1, 0.2]}')
