"""Executable checks of the distribution-overlap and contraction claims.

Covers the closed-form overlap mass of two equal-variance 1-D Gaussians,
a Monte-Carlo overlap estimator for the d-dimensional case, the
Bhattacharyya-based overlap lower bound, KL contraction of diffused
Gaussian pairs, exact 1-D Wasserstein-1 on empirical supports, the
sqrt(alpha_bar) Wasserstein contraction of the forward diffusion, and
train/validation critic-gap diagnostics with their duality bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .diffusion import DiffusionSchedule
from .numerics import Mlp, Rng


@dataclass(frozen=True)
class Gaussian1D:
    mean: float
    var: float

    def __post_init__(self):
        if self.var <= 0:
            raise ValueError("variance must be positive")


@dataclass(frozen=True)
class GaussianND:
    mean: np.ndarray      # (d,)
    var: float            # isotropic

    def __post_init__(self):
        if self.var <= 0:
            raise ValueError("variance must be positive")
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        d = self.dim
        diff = x - self.mean
        return -0.5 * (d * np.log(2 * np.pi * self.var)
                       + np.sum(diff ** 2, axis=1) / self.var)


@dataclass(frozen=True)
class Empirical1D:
    points: np.ndarray    # sorted support, uniform weights

    def __post_init__(self):
        pts = np.sort(np.asarray(self.points, dtype=np.float64))
        if pts.size == 0:
            raise ValueError("empirical distribution needs at least one point")
        object.__setattr__(self, "points", pts)


def overlap_1d_closed(m: float, alpha_bar: float) -> float:
    """Overlap mass of two point masses 0 and m after diffusion to level
    alpha_bar: both become Gaussians with variance 1-alpha_bar and means
    0 and sqrt(alpha_bar)*m, giving 2*Phi(-|m| sqrt(abar) / (2 sqrt(1-abar)))."""
    if not 0.0 < alpha_bar < 1.0:
        raise ValueError("alpha_bar must lie strictly in (0, 1)")
    return float(2.0 * norm.cdf(-abs(m) * np.sqrt(alpha_bar)
                                / (2.0 * np.sqrt(1.0 - alpha_bar))))


def overlap_mc(p: GaussianND, q: GaussianND, n: int, rng: Rng):
    """Monte-Carlo estimate of integral min(p, q); returns (estimate, stderr).

    Importance-samples from the balanced mixture (p+q)/2 so the integrand
    min(p,q) / mixture is bounded in [0, 1] and the estimator has finite
    variance: with w = 2*min(p,q)/(p+q), the estimate is mean(w).
    """
    if n < 1:
        raise ValueError("need at least one sample")
    if p.dim != q.dim:
        raise ValueError("dimension mismatch")
    pick_q = rng.uniform(n) < 0.5
    eps = rng.normal((n, p.dim))
    x = np.where(pick_q[:, None],
                 q.mean + np.sqrt(q.var) * eps,
                 p.mean + np.sqrt(p.var) * eps)
    # 2*min(p,q)/(p+q) = 2*sigmoid(-|log p - log q|), stable in log space
    dlog = np.abs(p.log_pdf(x) - q.log_pdf(x))
    w = 2.0 / (1.0 + np.exp(dlog))
    est = float(np.mean(w))
    se = float(np.std(w) / np.sqrt(n))
    return est, se


def overlap_lower_bound(delta0: np.ndarray, alpha_bar: float) -> float:
    """Bhattacharyya-based bound: overlap >= exp(-D^2/4)/2 where D^2 is the
    Mahalanobis distance of the diffused means, abar*||delta0||^2/(1-abar)."""
    if not 0.0 < alpha_bar < 1.0:
        raise ValueError("alpha_bar must lie strictly in (0, 1)")
    d2 = alpha_bar * float(np.sum(np.asarray(delta0, dtype=np.float64) ** 2)) \
        / (1.0 - alpha_bar)
    return 0.5 * float(np.exp(-d2 / 4.0))


def gaussian_kl(p: GaussianND, q: GaussianND) -> float:
    """KL(p || q) for isotropic Gaussians."""
    if p.dim != q.dim:
        raise ValueError("dimension mismatch")
    d = p.dim
    ratio = p.var / q.var
    return float(0.5 * (d * ratio - d + d * np.log(1.0 / ratio)
                        + np.sum((q.mean - p.mean) ** 2) / q.var))


def diffused_gaussian(p: GaussianND, sched: DiffusionSchedule, t: int) -> GaussianND:
    """Marginal of a Gaussian pushed through the forward chain to step t."""
    ab = sched.alpha_bars[t]
    return GaussianND(mean=np.sqrt(ab) * p.mean, var=ab * p.var + (1.0 - ab))


def kl_contraction_check(p0: GaussianND, q0: GaussianND,
                         sched: DiffusionSchedule, t: int):
    """Returns (kl_0, kl_t, holds): diffusion must not increase KL."""
    kl_0 = gaussian_kl(p0, q0)
    kl_t = gaussian_kl(diffused_gaussian(p0, sched, t),
                       diffused_gaussian(q0, sched, t))
    return kl_0, kl_t, bool(kl_t <= kl_0 + 1e-12)


def w1_exact_1d(p: Empirical1D, q: Empirical1D) -> float:
    """Exact 1-D Wasserstein-1 between empirical distributions.

    Equal support sizes reduce to the mean absolute difference of sorted
    order statistics; unequal sizes use the CDF-difference integral,
    which is the exact value for uniform weights.
    """
    a, b = p.points, q.points
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    allpts = np.sort(np.concatenate([a, b]))
    deltas = np.diff(allpts)
    cdf_a = np.searchsorted(a, allpts[:-1], side="right") / a.size
    cdf_b = np.searchsorted(b, allpts[:-1], side="right") / b.size
    return float(np.sum(np.abs(cdf_a - cdf_b) * deltas))


def w1_contraction_check(p: Empirical1D, q: Empirical1D, sched: DiffusionSchedule,
                         t: int, n_noise: int, rng: Rng):
    """Empirical check of W1(P_t, Q_t) <= sqrt(alpha_bar_t) * W1(P, Q).

    Both sides are diffused with common random numbers (shared quantile
    resampling and shared Gaussian noise) to cut estimator variance; the
    remaining sampling slack is absorbed by a conservative 4/sqrt(n)
    allowance on the bound.
    """
    w0 = w1_exact_1d(p, q)
    ab = sched.alpha_bars[int(t)]
    qs = (np.arange(n_noise) + 0.5) / n_noise
    pa = np.quantile(p.points, qs)
    qa = np.quantile(q.points, qs)
    noise = rng.normal(n_noise)
    scale = np.sqrt(ab)
    spread = np.sqrt(1.0 - ab)
    p_t = Empirical1D(scale * pa + spread * noise)
    q_t = Empirical1D(scale * qa + spread * noise)
    w_t = w1_exact_1d(p_t, q_t)
    bound = scale * w0
    slack = 4.0 / np.sqrt(n_noise)
    return w0, w_t, bound, bool(w_t <= bound + slack)


# -- critic generalization-gap diagnostics ------------------------------------

def critic_gap(net: Mlp, x_tr: np.ndarray, x_val: np.ndarray) -> float:
    """|mean score on train - mean score on validation|."""
    if x_tr.shape[0] == 0 or x_val.shape[0] == 0:
        raise ValueError("empty split")
    return float(abs(net.forward(x_tr).mean() - net.forward(x_val).mean()))


def generalization_gap_check(adv: Mlp, diff: Mlp, adv_tr, adv_val,
                             diff_tr, diff_val, sched: DiffusionSchedule, t: int):
    """Reports (gap_adv, gap_diff, bound_ratio = sqrt(alpha_bar_t)).

    The contraction theorem bounds the diffused critic's gap by
    sqrt(alpha_bar_t) times the W1 bound of the clean gap; the gaps
    themselves are diagnostics, the ratio is the certified factor.
    """
    gap_adv = critic_gap(adv, adv_tr, adv_val)
    gap_diff = critic_gap(diff, diff_tr, diff_val)
    return gap_adv, gap_diff, float(np.sqrt(sched.alpha_bars[int(t)]))


def duality_gap_bound(net: Mlp, x_tr: np.ndarray, x_val: np.ndarray,
                      grid: int = 10001):
    """Kantorovich-Rubinstein check for a scalar critic on 1-D inputs.

    Returns (gap, l_hat, w1): the score gap, the max gradient norm
    measured on a dense grid spanning both supports, and the exact W1
    between the splits. Duality guarantees gap <= l_hat * w1.
    """
    if net.in_dim != 1:
        raise ValueError("duality check expects a 1-D critic")
    gap = critic_gap(net, x_tr, x_val)
    lo = min(x_tr.min(), x_val.min())
    hi = max(x_tr.max(), x_val.max())
    xs = np.linspace(lo, hi, grid).reshape(-1, 1)
    l_hat = float(np.max(np.abs(net.grad_input(xs))))
    w1 = w1_exact_1d(Empirical1D(x_tr.ravel()), Empirical1D(x_val.ravel()))
    return gap, l_hat, w1
