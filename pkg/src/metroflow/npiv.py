"""Bayesian nonparametric instrumental-variable curve estimation.

Outcome model: response = intercept + f(covariate) + g(first-stage residual)
+ e2, first stage: covariate = h(instrument) + e1. Both f (the flow vs
movements curve) and h are penalized B-splines, g is the control-function
term that absorbs confounding, and the error pair (e1, e2) carries a
truncated Dirichlet process mixture of bivariate Gaussians. Without
instruments the first stage and control term drop and e2 alone gets a
univariate mixture.

One Gibbs sweep updates, in order: (i) first-stage coefficients, (ii)
intercept plus outcome-side spline coefficients jointly, (iii) mixture
assignments of the residual pairs, (iv) component moments, (v) stick
fractions, (vi) the concentration parameter, (vii) smoothing variances.
f and g are centered to sample mean zero every sweep by shifting whole
coefficient vectors (the bases sum to one, so a constant shift of the
coefficients is a constant shift of the curve); the intercept absorbs the
shifts, which pins the otherwise unidentified levels.

Reported outcome and first-stage curves are on prediction scale: intercept
plus centered curve plus the mixture's mean error, i.e. the posterior
expected response at average confounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg as sla
from scipy.stats import spearmanr

from . import dpm
from .splines import (SplineBasisSpec, basis_matrix, difference_penalty,
                      evaluation_grid)


class NumericalError(RuntimeError):
    """Sampler state became non-finite; message carries the draw index."""


class DegenerateDesignError(RuntimeError):
    """Design matrix or basis crossproduct is not usable."""


MIN_SAMPLES = 200
_IG_SHAPE = 0.001
_IG_RATE = 0.001
_JITTER = 1e-10


@dataclass(frozen=True)
class NpivModelSpec:
    """Bases for the three smooth terms plus the estimation mode."""

    outcome_basis: SplineBasisSpec = SplineBasisSpec()
    first_stage_basis: SplineBasisSpec = SplineBasisSpec()
    control_basis: SplineBasisSpec = SplineBasisSpec()
    mode: str = "iv"

    def __post_init__(self) -> None:
        if self.mode not in ("iv", "noniv"):
            raise ValueError("mode must be 'iv' or 'noniv'")


@dataclass(frozen=True)
class McmcConfig:
    """Chain length bookkeeping; retained count must come out exact."""

    total_draws: int
    burn_in: int
    thin: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.total_draws < 1 or not (0 <= self.burn_in < self.total_draws):
            raise ValueError("need 0 <= burn_in < total_draws")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if (self.total_draws - self.burn_in) % self.thin != 0:
            raise ValueError("(total_draws - burn_in) must divide evenly by thin")

    @property
    def retained(self) -> int:
        return (self.total_draws - self.burn_in) // self.thin


FAST_MCMC = McmcConfig(total_draws=4_000, burn_in=1_000, thin=4)
DEFAULT_MCMC = McmcConfig(total_draws=50_000, burn_in=15_000, thin=10)


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained curves on fixed grids plus per-draw mixture diagnostics."""

    mode: str
    outcome_grid: np.ndarray
    outcome_curves: np.ndarray
    control_grid: Optional[np.ndarray]
    control_curves: Optional[np.ndarray]
    first_stage_grid: Optional[np.ndarray]
    first_stage_curves: Optional[np.ndarray]
    weight_sums: np.ndarray
    min_cov_eigenvalues: np.ndarray
    active_components: np.ndarray
    alphas: np.ndarray
    outcome_center_offsets: np.ndarray
    control_center_offsets: np.ndarray
    response: np.ndarray
    covariate: np.ndarray
    instrument: Optional[np.ndarray]
    mcmc: McmcConfig

    @property
    def retained(self) -> int:
        return self.outcome_curves.shape[0]


@dataclass(frozen=True)
class CredibleBand:
    """Simultaneous band: at least ceil((1-delta) * retained) whole curves
    lie inside [lower, upper]."""

    grid: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    delta: float
    contained_count: int


@dataclass(frozen=True)
class FirstStageRelevance:
    grid: np.ndarray
    mean: np.ndarray
    band: CredibleBand
    rank_correlation: float
    secant_slope: float


@dataclass(frozen=True)
class BottleneckReport:
    """Location and height of the estimated flow optimum for one fit."""

    station: str
    direction: str
    optimum_movements: float
    max_flow: float
    implied_min_headway_minutes: float
    significant_backward_bend: bool
    delta: float

    def as_dict(self) -> dict:
        return {
            "station": self.station,
            "direction": self.direction,
            "optimum_movements": self.optimum_movements,
            "max_flow": self.max_flow,
            "implied_min_headway_minutes": self.implied_min_headway_minutes,
            "significant_backward_bend": self.significant_backward_bend,
            "delta": self.delta,
        }


def _gaussian_draw(rng: np.random.Generator, precision: np.ndarray,
                   rhs: np.ndarray, context: str) -> np.ndarray:
    """Draw from N(precision^-1 rhs, precision^-1) via Cholesky.

    Highly unequal observation weights can push the crossproduct to the edge
    of positive definiteness; a ridge proportional to the diagonal scale is
    escalated a few steps before the design is declared degenerate.
    """
    diag_scale = float(np.mean(np.diag(precision)))
    upper = None
    for ridge in (0.0, 1e-10, 1e-8, 1e-6):
        try:
            upper = sla.cholesky(
                precision + ridge * diag_scale * np.eye(len(rhs)), lower=False)
            break
        except sla.LinAlgError:
            continue
    if upper is None:
        raise DegenerateDesignError(
            f"singular crossproduct in the {context} update")
    mean = sla.cho_solve((upper, False), rhs)
    noise = sla.solve_triangular(upper, rng.standard_normal(len(rhs)), lower=False)
    return mean + noise


def _penalized_ls(design: np.ndarray, target: np.ndarray,
                  penalty: np.ndarray) -> np.ndarray:
    a = design.T @ design + penalty + _JITTER * np.eye(design.shape[1])
    try:
        return sla.solve(a, design.T @ target, assume_a="pos")
    except sla.LinAlgError as exc:
        raise DegenerateDesignError("singular crossproduct in initialization") from exc


def _draw_smoothing_variance(rng: np.random.Generator, coef: np.ndarray,
                             penalty: np.ndarray, rank: int) -> float:
    quad = float(coef @ penalty @ coef)
    precision = rng.gamma(_IG_SHAPE + rank / 2.0, 1.0 / (_IG_RATE + quad / 2.0))
    return 1.0 / max(precision, 1e-12)


def gibbs_fit(response, covariate, instrument=None,
              spec: NpivModelSpec = NpivModelSpec(),
              hyper: dpm.DpmHyperparams = dpm.DpmHyperparams(),
              mcmc: McmcConfig = FAST_MCMC) -> PosteriorDraws:
    """Run one chain and return the retained posterior curves.

    ``instrument`` is required (and must vary) in IV mode and is ignored
    otherwise. Raises :class:`NumericalError` if the chain state stops being
    finite and :class:`DegenerateDesignError` on unusable designs.
    """
    q = np.asarray(response, dtype=float).ravel()
    n = np.asarray(covariate, dtype=float).ravel()
    if len(q) != len(n):
        raise ValueError("response and covariate lengths differ")
    if len(q) < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {len(q)}")
    if not (np.isfinite(q).all() and np.isfinite(n).all()):
        raise ValueError("non-finite values in the input sample")
    iv = spec.mode == "iv"
    z = None
    if iv:
        if instrument is None:
            raise ValueError("IV mode needs an instrument")
        z = np.asarray(instrument, dtype=float).ravel()
        if len(z) != len(q):
            raise ValueError("instrument length differs from the sample")
        if not np.isfinite(z).all():
            raise ValueError("non-finite values in the instrument")
        if np.ptp(z) == 0.0:
            raise DegenerateDesignError("instrument is constant")
    if np.ptp(n) == 0.0:
        raise DegenerateDesignError("covariate is constant")

    rng = np.random.default_rng(mcmc.seed)

    spec_f = spec.outcome_basis.with_domain(n.min(), n.max())
    basis_f = basis_matrix(n, spec_f)
    grid_f = evaluation_grid(n.min(), n.max())
    basis_f_grid = basis_matrix(grid_f, spec_f)
    pen_f = difference_penalty(spec_f.size, spec_f.penalty_order)
    rank_f = spec_f.size - spec_f.penalty_order

    if iv:
        spec_h = spec.first_stage_basis.with_domain(z.min(), z.max())
        basis_h = basis_matrix(z, spec_h)
        grid_h = evaluation_grid(z.min(), z.max())
        basis_h_grid = basis_matrix(grid_h, spec_h)
        pen_h = difference_penalty(spec_h.size, spec_h.penalty_order)
        rank_h = spec_h.size - spec_h.penalty_order
        gamma = _penalized_ls(basis_h, n, pen_h)
        eps1 = n - basis_h @ gamma
        # control-function domain frozen from the initial residual spread
        lo, hi = float(eps1.min()), float(eps1.max())
        pad = 0.3 * (hi - lo) if hi > lo else 1.0
        spec_g = spec.control_basis.with_domain(lo - pad, hi + pad)
        grid_g = evaluation_grid(*spec_g.domain)
        basis_g_grid = basis_matrix(grid_g, spec_g)
        pen_g = difference_penalty(spec_g.size, spec_g.penalty_order)
        rank_g = spec_g.size - spec_g.penalty_order
        basis_g = basis_matrix(eps1, spec_g, clamp=True)
        k_g = spec_g.size
    else:
        gamma = eps1 = None
        basis_g = np.empty((len(q), 0))
        k_g = 0

    k_f = spec_f.size
    design = np.hstack([np.ones((len(q), 1)), basis_f, basis_g])
    init_pen = np.zeros((design.shape[1], design.shape[1]))
    init_pen[1:1 + k_f, 1:1 + k_f] = pen_f
    if iv:
        init_pen[1 + k_f:, 1 + k_f:] = pen_g
    beta = _penalized_ls(design, q, init_pen)
    eps2 = q - design @ beta

    dim = 2 if iv else 1
    if hyper.s_scale is not None:
        _, scale = hyper.sliced(dim)
    else:
        v2 = max(float(np.var(eps2)), 1e-6)
        if iv:
            v1 = max(float(np.var(eps1)), 1e-6)
            scale = np.diag([v1, v2])
        else:
            scale = np.array([[v2]])
    residuals = np.column_stack([eps1, eps2]) if iv else eps2[:, None]
    state = dpm.initial_state(rng, residuals, hyper, scale)

    # weight floors: a mixture component collapsing onto exactly-tied
    # observations must not hand single points unbounded precision
    v2_floor = 1e-8 * float(scale[-1, -1])
    v1_floor = 1e-8 * float(scale[0, 0]) if iv else 0.0

    var_f = var_g = var_h = 1.0
    intercept = beta[0]
    coef_f = beta[1:1 + k_f].copy()
    coef_g = beta[1 + k_f:].copy()

    r = mcmc.retained
    out_curves = np.empty((r, len(grid_f)))
    ctl_curves = np.empty((r, len(grid_g))) if iv else None
    fs_curves = np.empty((r, len(grid_h))) if iv else None
    weight_sums = np.empty(r)
    min_eigs = np.empty(r)
    actives = np.empty(r, dtype=int)
    alphas = np.empty(r)
    out_offsets = np.empty(r)
    ctl_offsets = np.empty(r)

    kept = 0
    for sweep in range(mcmc.total_draws):
        if iv:
            mu1, v1 = dpm.marginal_first_moments(state)
            w1 = 1.0 / np.maximum(v1, v1_floor)
            prec = (basis_h.T * w1) @ basis_h + pen_h / var_h
            prec += _JITTER * np.eye(spec_h.size)
            gamma = _gaussian_draw(rng, prec, basis_h.T @ (w1 * (n - mu1)),
                                   "first-stage")
            eps1 = n - basis_h @ gamma
            basis_g = basis_matrix(eps1, spec_g, clamp=True)
            design = np.hstack([np.ones((len(q), 1)), basis_f, basis_g])

        mu2, v2 = dpm.conditional_second_moments(state, eps1)
        w2 = 1.0 / np.maximum(v2, v2_floor)
        prior = np.zeros((design.shape[1], design.shape[1]))
        prior[0, 0] = 1e-8
        prior[1:1 + k_f, 1:1 + k_f] = pen_f / var_f
        if iv:
            prior[1 + k_f:, 1 + k_f:] = pen_g / var_g
        prec = (design.T * w2) @ design + prior + _JITTER * np.eye(design.shape[1])
        beta = _gaussian_draw(rng, prec, design.T @ (w2 * (q - mu2)), "outcome")

        intercept = beta[0]
        coef_f = beta[1:1 + k_f]
        coef_g = beta[1 + k_f:]
        # center by coefficient shift: the basis rows sum to one
        f_shift = float(np.mean(basis_f @ coef_f))
        coef_f = coef_f - f_shift
        intercept += f_shift
        if iv:
            g_shift = float(np.mean(basis_g @ coef_g))
            coef_g = coef_g - g_shift
            intercept += g_shift
            eps2 = q - intercept - basis_f @ coef_f - basis_g @ coef_g
            residuals = np.column_stack([eps1, eps2])
        else:
            eps2 = q - intercept - basis_f @ coef_f
            residuals = eps2[:, None]

        dpm.update_assignments(rng, state, residuals)
        dpm.update_components(rng, state, residuals, hyper, scale)
        dpm.update_sticks(rng, state)
        dpm.update_alpha(rng, state, hyper)

        var_f = _draw_smoothing_variance(rng, coef_f, pen_f, rank_f)
        if iv:
            var_g = _draw_smoothing_variance(rng, coef_g, pen_g, rank_g)
            var_h = _draw_smoothing_variance(rng, gamma, pen_h, rank_h)

        if sweep >= mcmc.burn_in and (sweep - mcmc.burn_in) % mcmc.thin == 0:
            vitals = [intercept, float(coef_f.sum()), float(state.weights.sum()),
                      float(state.alpha)]
            if iv:
                vitals += [float(coef_g.sum()), float(gamma.sum())]
            if not all(math.isfinite(v) for v in vitals):
                raise NumericalError(f"non-finite sampler state at draw {sweep}")
            mix_mean = dpm.mixture_mean(state)
            out_curves[kept] = intercept + basis_f_grid @ coef_f + mix_mean[-1]
            if iv:
                ctl_curves[kept] = basis_g_grid @ coef_g
                fs_curves[kept] = basis_h_grid @ gamma + mix_mean[0]
                ctl_offsets[kept] = float(np.mean(basis_g @ coef_g))
            else:
                ctl_offsets[kept] = 0.0
            out_offsets[kept] = float(np.mean(basis_f @ coef_f))
            weight_sums[kept] = float(state.weights.sum())
            min_eigs[kept] = state.min_cov_eigenvalue()
            actives[kept] = state.active_components()
            alphas[kept] = state.alpha
            kept += 1

    assert kept == r
    return PosteriorDraws(
        mode=spec.mode,
        outcome_grid=grid_f, outcome_curves=out_curves,
        control_grid=grid_g if iv else None,
        control_curves=ctl_curves,
        first_stage_grid=grid_h if iv else None,
        first_stage_curves=fs_curves,
        weight_sums=weight_sums, min_cov_eigenvalues=min_eigs,
        active_components=actives, alphas=alphas,
        outcome_center_offsets=out_offsets, control_center_offsets=ctl_offsets,
        response=q.copy(), covariate=n.copy(),
        instrument=z.copy() if iv else None,
        mcmc=mcmc)


# ---------------------------------------------------------------------------
# posterior summaries


_CURVE_KINDS = ("outcome", "first_stage", "control")


def _curves(draws: PosteriorDraws, which: str) -> tuple[np.ndarray, np.ndarray]:
    if which == "outcome":
        return draws.outcome_grid, draws.outcome_curves
    if which == "first_stage":
        if draws.first_stage_curves is None:
            raise ValueError("no first stage without instruments")
        return draws.first_stage_grid, draws.first_stage_curves
    if which == "control":
        if draws.control_curves is None:
            raise ValueError("no control function without instruments")
        return draws.control_grid, draws.control_curves
    raise ValueError(f"unknown curve kind {which!r}; expected one of {_CURVE_KINDS}")


def posterior_mean_curve(draws: PosteriorDraws, which: str = "outcome"
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise average of the retained curves: (grid, mean)."""
    grid, curves = _curves(draws, which)
    return grid, curves.mean(axis=0)


def simultaneous_band(draws: PosteriorDraws, delta: float = 0.05,
                      which: str = "outcome") -> CredibleBand:
    """Inflate pointwise quantiles until enough whole curves fit inside.

    Starts from the pointwise delta/2 and 1 - delta/2 quantiles and lowers
    the pointwise level geometrically until at least ceil((1-delta) * R)
    retained curves lie entirely within the band.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie strictly between 0 and 1")
    grid, curves = _curves(draws, which)
    r = curves.shape[0]
    target = math.ceil((1.0 - delta) * r)
    level = delta
    while True:
        lower = np.quantile(curves, level / 2.0, axis=0)
        upper = np.quantile(curves, 1.0 - level / 2.0, axis=0)
        inside = ((curves >= lower) & (curves <= upper)).all(axis=1).sum()
        if inside >= target:
            break
        level *= 0.95
        if level < 1e-15:
            lower = curves.min(axis=0)
            upper = curves.max(axis=0)
            inside = r
            break
    return CredibleBand(grid=grid, lower=lower, upper=upper, delta=delta,
                        contained_count=int(inside))


def secant_slope_stats(draws: PosteriorDraws, which: str = "outcome",
                       central: float = 0.8) -> tuple[float, float]:
    """Slope of the posterior mean between the edges of the central grid
    portion, plus the standard deviation of the per-draw slopes."""
    if not (0.0 < central <= 1.0):
        raise ValueError("central must lie in (0, 1]")
    grid, curves = _curves(draws, which)
    margin = (1.0 - central) / 2.0
    lo = int(round(margin * (len(grid) - 1)))
    hi = len(grid) - 1 - lo
    span = grid[hi] - grid[lo]
    slopes = (curves[:, hi] - curves[:, lo]) / span
    mean_slope = float(curves.mean(axis=0)[hi] - curves.mean(axis=0)[lo]) / span
    sd = float(slopes.std(ddof=1)) if len(slopes) > 1 else 0.0
    return mean_slope, sd


def first_stage_relevance(draws: PosteriorDraws,
                          delta: float = 0.05) -> FirstStageRelevance:
    """Posterior mean and band of the first stage plus relevance summaries.

    The association summary is the rank correlation between the covariate
    and the instrument in the sample itself; the fitted curve's own ranking
    against its grid is +-1 by construction and carries no information.
    """
    grid, mean = posterior_mean_curve(draws, "first_stage")
    band = simultaneous_band(draws, delta, which="first_stage")
    rho = float(spearmanr(draws.covariate, draws.instrument).statistic)
    slope, _ = secant_slope_stats(draws, which="first_stage")
    return FirstStageRelevance(grid=grid, mean=mean, band=band,
                               rank_correlation=rho, secant_slope=slope)


def extract_optimum(draws: PosteriorDraws, delta: float = 0.05,
                    interval_minutes: float = 10.0, station: str = "",
                    direction: str = "") -> BottleneckReport:
    """Argmax of the posterior mean flow curve over the central support.

    The search is restricted to grid points between the 1st and 99th
    percentiles of the observed covariate. The backward bend is significant
    when some support point right of the optimum has its band upper edge
    strictly below the band lower edge at the optimum.
    """
    grid, curves = _curves(draws, "outcome")
    mean = curves.mean(axis=0)
    lo, hi = np.percentile(draws.covariate, [1.0, 99.0])
    mask = (grid >= lo) & (grid <= hi)
    if not mask.any():
        mask = np.ones_like(mask)
    idx = np.flatnonzero(mask)
    best = idx[int(np.argmax(mean[idx]))]
    optimum = float(grid[best])
    max_flow = float(mean[best])
    if max_flow <= 0:
        raise NumericalError("estimated maximum flow is not positive")
    band = simultaneous_band(draws, delta)
    right = idx[grid[idx] > optimum]
    bend = bool(right.size and (band.upper[right] < band.lower[best]).any())
    return BottleneckReport(
        station=station, direction=direction, optimum_movements=optimum,
        max_flow=max_flow,
        implied_min_headway_minutes=interval_minutes / max_flow,
        significant_backward_bend=bend, delta=delta)
