"""Two-stage least squares with polynomial terms.

Baseline parametric estimator: each power of the endogenous covariate is
first regressed on powers of the instrument, then the response is regressed
on the fitted powers. Covariance is the classical homoskedastic 2SLS form,
with residuals taken at the actual (not fitted) covariate values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .npiv import DegenerateDesignError


@dataclass(frozen=True)
class TwoSlsFit:
    """Intercept-first coefficients, their covariance, and the powers used."""

    coefficients: np.ndarray
    covariance: np.ndarray
    endog_powers: tuple[int, ...]
    instrument_powers: tuple[int, ...]
    n_samples: int

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def confidence_intervals(self, level: float = 0.95) -> np.ndarray:
        """Rows (lower, upper) per coefficient, normal approximation."""
        if not (0.0 < level < 1.0):
            raise ValueError("level must lie strictly between 0 and 1")
        half = stats.norm.ppf(0.5 + level / 2.0) * self.standard_errors()
        return np.column_stack([self.coefficients - half, self.coefficients + half])

    def predict(self, x) -> np.ndarray:
        """Structural curve: intercept plus the fitted polynomial in x."""
        x = np.asarray(x, dtype=float)
        terms = np.column_stack([x ** p for p in self.endog_powers])
        return self.coefficients[0] + terms @ self.coefficients[1:]


def _power_matrix(values: np.ndarray, powers: tuple[int, ...]) -> np.ndarray:
    return np.column_stack([np.ones_like(values)]
                           + [values ** p for p in powers])


def fit_2sls(response, covariate, instrument,
             endog_powers: tuple[int, ...] = (1,),
             instrument_powers: tuple[int, ...] | None = None) -> TwoSlsFit:
    """Fit response on covariate powers, instrumented by instrument powers.

    ``instrument_powers`` defaults to 1..max(endog_powers). Raises
    :class:`DegenerateDesignError` when either stage is rank deficient.
    """
    y = np.asarray(response, dtype=float).ravel()
    x = np.asarray(covariate, dtype=float).ravel()
    z = np.asarray(instrument, dtype=float).ravel()
    if not (len(y) == len(x) == len(z)):
        raise ValueError("response, covariate, instrument lengths differ")
    endog_powers = tuple(int(p) for p in endog_powers)
    if not endog_powers or any(p < 1 for p in endog_powers):
        raise ValueError("endog_powers must be positive integers")
    if instrument_powers is None:
        instrument_powers = tuple(range(1, max(endog_powers) + 1))
    else:
        instrument_powers = tuple(int(p) for p in instrument_powers)
        if not instrument_powers or any(p < 1 for p in instrument_powers):
            raise ValueError("instrument_powers must be positive integers")
    if len(instrument_powers) < len(endog_powers):
        raise DegenerateDesignError(
            "fewer instrument powers than endogenous terms")
    if np.ptp(z) == 0.0:
        raise DegenerateDesignError("instrument is constant")

    z_design = _power_matrix(z, instrument_powers)
    x_terms = np.column_stack([x ** p for p in endog_powers])
    coef_1, _, rank_1, _ = np.linalg.lstsq(z_design, x_terms, rcond=None)
    if rank_1 < z_design.shape[1]:
        raise DegenerateDesignError("first-stage design is rank deficient")
    fitted_terms = z_design @ coef_1

    design = np.column_stack([np.ones(len(y)), fitted_terms])
    k = design.shape[1]
    gram = design.T @ design
    if np.linalg.matrix_rank(gram) < k:
        raise DegenerateDesignError("second-stage design is rank deficient")
    beta = np.linalg.solve(gram, design.T @ y)

    actual = np.column_stack([np.ones(len(y)), x_terms])
    resid = y - actual @ beta
    dof = max(len(y) - k, 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(gram)
    return TwoSlsFit(coefficients=beta, covariance=cov,
                     endog_powers=endog_powers,
                     instrument_powers=instrument_powers, n_samples=len(y))
