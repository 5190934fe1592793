"""Forward diffusion chain, closed-form marginal, and posterior re-noising.

The schedule is the discretized variance-preserving SDE: for step count T
and rate range (beta_min, beta_max),

    beta_t = 1 - exp(-beta_min/T - (beta_max - beta_min) * (2t - 1) / (2 T^2))

with alpha_t = 1 - beta_t, alpha_bar_t the running product (alpha_bar_0 := 1
so the posterior is defined at t=1), posterior variance
beta_tilde_t = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t, and
noise-to-data ratio kappa_t = 1 - sqrt(alpha_bar_t).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .numerics import Rng


@dataclass(frozen=True)
class DiffusionSchedule:
    betas: np.ndarray                      # (T,), betas[i] is beta_{i+1}
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)   # (T+1,), index by t, [0] = 1
    beta_tildes: np.ndarray = field(init=False)  # (T+1,), [0] unused, [1] = 0
    kappas: np.ndarray = field(init=False)       # (T+1,), [0] = 0

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ValueError("schedule needs at least one step")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ValueError("every beta must lie strictly in (0, 1)")
        object.__setattr__(self, "betas", betas)
        alphas = 1.0 - betas
        alpha_bars = np.concatenate([[1.0], np.cumprod(alphas)])
        beta_tildes = np.zeros(betas.size + 1)
        beta_tildes[1:] = (1.0 - alpha_bars[:-1]) / (1.0 - alpha_bars[1:]) * betas
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bars", alpha_bars)
        object.__setattr__(self, "beta_tildes", beta_tildes)
        object.__setattr__(self, "kappas", 1.0 - np.sqrt(alpha_bars))

    @property
    def steps(self) -> int:
        return self.betas.size

    def _check_t(self, t: int, lowest: int = 1) -> int:
        t = int(t)
        if not lowest <= t <= self.steps:
            raise ValueError(f"step t={t} outside [{lowest}, {self.steps}]")
        return t

    def diffuse_step(self, v_prev: np.ndarray, t: int, rng: Rng) -> np.ndarray:
        """One forward-chain step: N(sqrt(1-beta_t) * v_{t-1}, beta_t I)."""
        t = self._check_t(t)
        beta = self.betas[t - 1]
        v_prev = np.asarray(v_prev, dtype=np.float64)
        return np.sqrt(1.0 - beta) * v_prev + np.sqrt(beta) * rng.normal(v_prev.shape)

    def diffuse_marginal(self, v0: np.ndarray, t: int, rng: Rng) -> np.ndarray:
        """Closed-form t-step noising: N(sqrt(abar_t) * v0, (1-abar_t) I)."""
        t = self._check_t(t, lowest=0)
        v0 = np.asarray(v0, dtype=np.float64)
        if t == 0:
            return v0.copy()
        ab = self.alpha_bars[t]
        return np.sqrt(ab) * v0 + np.sqrt(1.0 - ab) * rng.normal(v0.shape)

    def posterior_mean(self, v0_hat: np.ndarray, v_t: np.ndarray, t: int) -> np.ndarray:
        t = self._check_t(t)
        c0, c1 = self.posterior_coeffs(t)
        return c0 * np.asarray(v0_hat, dtype=np.float64) + c1 * np.asarray(v_t, dtype=np.float64)

    def posterior_coeffs(self, t: int):
        """Coefficients (on v0_hat, on v_t) of the re-noising mean."""
        t = self._check_t(t)
        if t == 1:
            return 1.0, 0.0
        ab_t, ab_prev = self.alpha_bars[t], self.alpha_bars[t - 1]
        beta = self.betas[t - 1]
        c0 = np.sqrt(ab_prev) * beta / (1.0 - ab_t)
        c1 = np.sqrt(self.alphas[t - 1]) * (1.0 - ab_prev) / (1.0 - ab_t)
        return c0, c1

    def posterior_sample(self, v0_hat: np.ndarray, v_t: np.ndarray, t: int,
                         rng: Rng) -> np.ndarray:
        """Re-noise a predicted clean feature back to step t-1 given v_t.

        At t=1 the posterior collapses (variance 0, mean v0_hat) and the
        predicted clean feature is returned exactly.
        """
        t = self._check_t(t)
        v0_hat = np.asarray(v0_hat, dtype=np.float64)
        v_t = np.asarray(v_t, dtype=np.float64)
        if v0_hat.shape != v_t.shape:
            raise ValueError("v0_hat and v_t shapes must agree")
        if t == 1:
            return v0_hat.copy()
        mean = self.posterior_mean(v0_hat, v_t, t)
        return mean + np.sqrt(self.beta_tildes[t]) * rng.normal(mean.shape)

    def n2d(self, t: int) -> float:
        """Noise-to-data ratio kappa_t = 1 - sqrt(alpha_bar_t)."""
        return float(self.kappas[self._check_t(t)])

    def to_json(self) -> str:
        return json.dumps(
            {"version": 1, "steps": self.steps, "betas": [float(b) for b in self.betas]},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "DiffusionSchedule":
        doc = json.loads(text)
        betas = np.asarray(doc["betas"], dtype=np.float64)
        if betas.size != int(doc["steps"]):
            raise ValueError("schedule step count disagrees with beta list")
        return cls(betas=betas)


def make_schedule(steps: int, beta_min: float = 0.1, beta_max: float = 20.0) -> DiffusionSchedule:
    """Variance-preserving schedule over ``steps`` discrete times."""
    steps = int(steps)
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not 0.0 < beta_min < beta_max:
        raise ValueError("need 0 < beta_min < beta_max")
    t = np.arange(1, steps + 1, dtype=np.float64)
    exponent = beta_min / steps + (beta_max - beta_min) * (2.0 * t - 1.0) / (2.0 * steps ** 2)
    return DiffusionSchedule(betas=1.0 - np.exp(-exponent))
