"""Closed-form diffusion quantities and parameterization conversions.

Holds the per-timestep constants of the forward noising chain (beta_t,
alpha_t, alpha_bar_t, beta_tilde_t for t = 1..T, with alpha_bar_0 := 1) and
the algebra between the eps-, x0- and posterior-mean parameterizations.
All operations are pure; timesteps are 1-based throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import as_grid


@dataclass(frozen=True)
class NoiseSchedule:
    """Arrays indexed [t-1] for timestep t; alpha_bar_prev[t-1] carries alpha_bar_{t-1}."""

    beta: np.ndarray
    alpha: np.ndarray = field(init=False)
    alpha_bar: np.ndarray = field(init=False)
    alpha_bar_prev: np.ndarray = field(init=False)
    beta_tilde: np.ndarray = field(init=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.ndim != 1 or beta.size < 1:
            raise ValueError("beta must be a non-empty 1D array")
        if np.any(beta <= 0.0) or np.any(beta >= 1.0):
            raise ValueError("beta_t must lie in (0, 1)")
        object.__setattr__(self, "beta", beta)
        alpha = 1.0 - beta
        alpha_bar = np.cumprod(alpha)
        alpha_bar_prev = np.concatenate(([1.0], alpha_bar[:-1]))
        # 0/0 guard: alpha_bar can round to exactly 1 for degenerate beta
        with np.errstate(invalid="ignore"):
            beta_tilde = np.where(alpha_bar < 1.0,
                                  (1.0 - alpha_bar_prev) / (1.0 - alpha_bar) * beta, 0.0)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha_bar", alpha_bar)
        object.__setattr__(self, "alpha_bar_prev", alpha_bar_prev)
        object.__setattr__(self, "beta_tilde", beta_tilde)

    @property
    def T(self):
        return self.beta.size

    def _check_t(self, t):
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside 1..{self.T}")
        return int(t)


def make_linear_schedule(T, beta_start=1e-4, beta_end=0.02):
    """Linear beta ramp inclusive of both endpoints; T=1 degenerates to [beta_start]."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError("require 0 < beta_start <= beta_end < 1")
    beta = np.linspace(beta_start, beta_end, T) if T > 1 else np.array([beta_start])
    return NoiseSchedule(beta)


def forward_sample(x0, t, eps, s):
    """q(x_t | x_0): sqrt(abar_t) x0 + sqrt(1-abar_t) eps."""
    t = s._check_t(t)
    x0 = as_grid(x0)
    eps = as_grid(eps)
    if eps.shape != x0.shape:
        raise ValueError("eps shape must match x0")
    ab = s.alpha_bar[t - 1]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def posterior_mean(x_t, x0, t, s):
    """Mean of q(x_{t-1} | x_t, x_0).

    Bayes gives the x0 coefficient sqrt(abar_{t-1}) beta_t / (1-abar_t); at
    t=1 (abar_0 = 1) this collapses to exactly x0 with zero variance.
    """
    t = s._check_t(t)
    x_t = as_grid(x_t)
    x0 = as_grid(x0)
    if x_t.shape != x0.shape:
        raise ValueError("x_t and x0 shapes must match")
    i = t - 1
    c0 = np.sqrt(s.alpha_bar_prev[i]) * s.beta[i] / (1.0 - s.alpha_bar[i])
    ct = np.sqrt(s.alpha[i]) * (1.0 - s.alpha_bar_prev[i]) / (1.0 - s.alpha_bar[i])
    return c0 * x0 + ct * x_t


def posterior_variance(t, s):
    """beta_tilde_t; zero at t=1."""
    t = s._check_t(t)
    return float(s.beta_tilde[t - 1])


def predict_x0_from_eps(z_t, eps_hat, t, s):
    """Invert the closed-form forward marginal: (z_t - sqrt(1-abar_t) eps) / sqrt(abar_t)."""
    t = s._check_t(t)
    z_t = as_grid(z_t)
    eps_hat = as_grid(eps_hat)
    if z_t.shape != eps_hat.shape:
        raise ValueError("z_t and eps_hat shapes must match")
    ab = s.alpha_bar[t - 1]
    return (z_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)
