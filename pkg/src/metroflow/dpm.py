"""Truncated Dirichlet process mixture over regression residuals.

Residual vectors (one or two dimensional) get a stick-breaking mixture of
Gaussians with a normal-inverse-Wishart base measure. The truncation assigns
the final stick the whole remainder, so the weights always sum to one. All
updates draw from exact conditionals; the module owns no sweep schedule, the
caller composes the updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import invwishart

_LOG_2PI = float(np.log(2.0 * np.pi))
_VAR_FLOOR = 1e-10


@dataclass(frozen=True)
class DpmHyperparams:
    """Base measure and concentration prior.

    ``s_scale`` left as None means the caller supplies a data-scaled matrix
    at fit time. Single-error fits use the second component of ``mu_0`` and
    the lower-right entry of the scale matrix.
    """

    mu_0: tuple[float, float] = (0.0, 0.0)
    tau_sigma: float = 0.01
    s_sigma: float = 4.0
    s_scale: Optional[np.ndarray] = None
    alpha_shape: float = 2.0
    alpha_rate: float = 2.0
    truncation: int = 20

    def __post_init__(self) -> None:
        if self.tau_sigma <= 0:
            raise ValueError("tau_sigma must be > 0")
        if self.s_sigma <= 1:
            raise ValueError("s_sigma must exceed 1")
        if self.alpha_shape <= 0 or self.alpha_rate <= 0:
            raise ValueError("alpha prior parameters must be > 0")
        if self.truncation < 2:
            raise ValueError("truncation must be >= 2")
        if self.s_scale is not None:
            s = np.asarray(self.s_scale, dtype=float)
            if s.shape != (2, 2) or not np.allclose(s, s.T):
                raise ValueError("s_scale must be a symmetric 2x2 matrix")
            if np.linalg.eigvalsh(s).min() <= 0:
                raise ValueError("s_scale must be positive definite")

    def sliced(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        """(mu_0, scale) restricted to the active error dimensions."""
        mu = np.asarray(self.mu_0, dtype=float)
        scale = (np.eye(2) if self.s_scale is None
                 else np.asarray(self.s_scale, dtype=float))
        if dim == 2:
            return mu, scale
        return mu[1:], scale[1:, 1:]


@dataclass
class DpmState:
    """Mutable mixture state for one chain."""

    assignments: np.ndarray      # (N,) component index per observation
    means: np.ndarray            # (C, d)
    covs: np.ndarray             # (C, d, d)
    sticks: np.ndarray           # (C,), last entry fixed at 1
    alpha: float
    weights: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.weights = weights_from_sticks(self.sticks)

    @property
    def truncation(self) -> int:
        return len(self.sticks)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def active_components(self) -> int:
        return len(np.unique(self.assignments))

    def min_cov_eigenvalue(self) -> float:
        return float(min(np.linalg.eigvalsh(c).min() for c in self.covs))


def weights_from_sticks(sticks: np.ndarray) -> np.ndarray:
    """Stick-breaking weights; the closed final stick makes them sum to 1."""
    sticks = np.asarray(sticks, dtype=float)
    remaining = np.concatenate([[1.0], np.cumprod(1.0 - sticks[:-1])])
    return sticks * remaining


def _prior_component(rng: np.random.Generator, mu_0: np.ndarray, tau: float,
                     df: float, scale: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cov = np.atleast_2d(invwishart.rvs(df=df, scale=scale, random_state=rng))
    mean = rng.multivariate_normal(mu_0, cov / tau)
    return mean, cov


def initial_state(rng: np.random.Generator, residuals: np.ndarray,
                  hyper: DpmHyperparams, scale: np.ndarray) -> DpmState:
    """Everything in component 0 at the empirical moments; rest from the prior."""
    residuals = np.atleast_2d(residuals.T).T
    n, d = residuals.shape
    c = hyper.truncation
    mu_0, _ = hyper.sliced(d)
    means = np.zeros((c, d))
    covs = np.zeros((c, d, d))
    emp_cov = np.cov(residuals.T, ddof=1) if n > 1 else np.eye(d)
    emp_cov = np.atleast_2d(emp_cov) + _VAR_FLOOR * np.eye(d)
    means[0] = residuals.mean(axis=0)
    covs[0] = emp_cov
    for j in range(1, c):
        means[j], covs[j] = _prior_component(rng, mu_0, hyper.tau_sigma,
                                             hyper.s_sigma, scale)
    # uniform weights: stick j keeps 1/(C-j) of the remainder
    sticks = np.array([1.0 / (c - j) for j in range(c)])
    return DpmState(assignments=np.zeros(n, dtype=np.intp), means=means,
                    covs=covs, sticks=sticks, alpha=1.0)


def _component_logpdf(residuals: np.ndarray, mean: np.ndarray,
                      cov: np.ndarray) -> np.ndarray:
    d = residuals.shape[1]
    diff = residuals - mean
    if d == 1:
        var = max(cov[0, 0], _VAR_FLOOR)
        return -0.5 * (_LOG_2PI + np.log(var) + diff[:, 0] ** 2 / var)
    s11, s12, s22 = cov[0, 0], cov[0, 1], cov[1, 1]
    det = max(s11 * s22 - s12 * s12, _VAR_FLOOR ** 2)
    quad = (diff[:, 0] ** 2 * s22 - 2.0 * diff[:, 0] * diff[:, 1] * s12
            + diff[:, 1] ** 2 * s11) / det
    return -_LOG_2PI - 0.5 * np.log(det) - 0.5 * quad


def update_assignments(rng: np.random.Generator, state: DpmState,
                       residuals: np.ndarray) -> None:
    residuals = np.atleast_2d(residuals.T).T
    c = state.truncation
    logp = np.empty((residuals.shape[0], c))
    with np.errstate(divide="ignore"):
        logw = np.log(state.weights)
    for j in range(c):
        logp[:, j] = logw[j] + _component_logpdf(residuals, state.means[j],
                                                 state.covs[j])
    logp -= logp.max(axis=1, keepdims=True)
    probs = np.exp(logp)
    probs /= probs.sum(axis=1, keepdims=True)
    u = rng.random(residuals.shape[0])
    state.assignments = (probs.cumsum(axis=1) < u[:, None]).sum(axis=1)


def update_components(rng: np.random.Generator, state: DpmState,
                      residuals: np.ndarray, hyper: DpmHyperparams,
                      scale: np.ndarray) -> None:
    """Conjugate normal-inverse-Wishart draw per component."""
    residuals = np.atleast_2d(residuals.T).T
    d = residuals.shape[1]
    mu_0, _ = hyper.sliced(d)
    tau, df = hyper.tau_sigma, hyper.s_sigma
    for j in range(state.truncation):
        members = residuals[state.assignments == j]
        m = len(members)
        if m == 0:
            state.means[j], state.covs[j] = _prior_component(rng, mu_0, tau, df, scale)
            continue
        xbar = members.mean(axis=0)
        centered = members - xbar
        scatter = centered.T @ centered
        tau_n = tau + m
        mu_n = (tau * mu_0 + m * xbar) / tau_n
        dev = (xbar - mu_0)[:, None]
        scale_n = scale + scatter + (tau * m / tau_n) * (dev @ dev.T)
        cov = np.atleast_2d(invwishart.rvs(df=df + m, scale=scale_n, random_state=rng))
        state.means[j] = rng.multivariate_normal(mu_n, cov / tau_n)
        state.covs[j] = cov


def update_sticks(rng: np.random.Generator, state: DpmState) -> None:
    c = state.truncation
    counts = np.bincount(state.assignments, minlength=c)
    tail = counts[::-1].cumsum()[::-1]  # tail[j] = members at or beyond j
    for j in range(c - 1):
        state.sticks[j] = rng.beta(1.0 + counts[j], state.alpha + tail[j + 1])
    state.sticks[c - 1] = 1.0
    state.weights = weights_from_sticks(state.sticks)


def update_alpha(rng: np.random.Generator, state: DpmState,
                 hyper: DpmHyperparams) -> None:
    sticks = np.clip(state.sticks[:-1], None, 1.0 - 1e-12)
    shape = hyper.alpha_shape + state.truncation - 1
    rate = hyper.alpha_rate - np.log1p(-sticks).sum()
    state.alpha = rng.gamma(shape, 1.0 / rate)


def mixture_mean(state: DpmState) -> np.ndarray:
    """Overall residual mean implied by the current mixture."""
    return state.weights @ state.means


def marginal_first_moments(state: DpmState) -> tuple[np.ndarray, np.ndarray]:
    """Per-observation mean and variance of the first error dimension."""
    mu = state.means[state.assignments, 0]
    var = np.maximum(state.covs[state.assignments, 0, 0], _VAR_FLOOR)
    return mu, var


def conditional_second_moments(state: DpmState, eps1: np.ndarray
                               ) -> tuple[np.ndarray, np.ndarray]:
    """Per-observation moments of the second error given the first.

    In the one-dimensional case (no first-stage error) the marginal moments
    of the single dimension are returned.
    """
    a = state.assignments
    if state.dim == 1:
        mu = state.means[a, 0]
        var = np.maximum(state.covs[a, 0, 0], _VAR_FLOOR)
        return mu, var
    s11 = np.maximum(state.covs[a, 0, 0], _VAR_FLOOR)
    s12 = state.covs[a, 0, 1]
    s22 = state.covs[a, 1, 1]
    mu = state.means[a, 1] + s12 / s11 * (eps1 - state.means[a, 0])
    var = np.maximum(s22 - s12 * s12 / s11, _VAR_FLOOR)
    return mu, var
