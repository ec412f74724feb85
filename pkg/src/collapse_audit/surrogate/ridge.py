from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from ..errors import SingularSystemError


@dataclass
class RidgeModel:
    intercept: float
    coef: np.ndarray
    lam: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.intercept + np.asarray(X, dtype=float) @ self.coef

    @property
    def importance(self) -> np.ndarray:
        """Magnitude of each standardized coefficient."""
        return np.abs(self.coef)


def ridge_fit(X: np.ndarray, y: np.ndarray, lam: float, fit_intercept: bool = True) -> RidgeModel:
    """Penalized least squares with an unpenalized intercept.

    Solves ``(Xc'Xc + lam I) beta = Xc'yc`` on column-centered data, where
    centering absorbs the intercept. ``lam = 0`` on rank-deficient columns
    raises :class:`SingularSystemError`.
    """
    if lam < 0:
        raise ValueError("ridge penalty must be >= 0")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if fit_intercept:
        x_mean, y_mean = X.mean(axis=0), y.mean()
        Xc, yc = X - x_mean, y - y_mean
    else:
        x_mean, y_mean = np.zeros(X.shape[1]), 0.0
        Xc, yc = X, y
    k = X.shape[1]
    if lam == 0 and np.linalg.matrix_rank(Xc) < k:
        raise SingularSystemError(
            "design matrix is rank deficient (e.g. full one-hot with an intercept); use a ridge penalty > 0"
        )
    gram = Xc.T @ Xc
    gram[np.diag_indices_from(gram)] += lam
    try:
        beta = cho_solve(cho_factor(gram), Xc.T @ yc)
    except LinAlgError:
        raise SingularSystemError("normal equations are singular; use a ridge penalty > 0") from None
    return RidgeModel(float(y_mean - x_mean @ beta), beta, float(lam))
