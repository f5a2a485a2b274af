"""Small dense linear-algebra helpers built on Cholesky factorizations.

All solvers in this package go through these helpers so that symmetric
positive definite systems are never solved via explicit inverses.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .exceptions import NumericalError


def cho_factor_spd(a: np.ndarray, what: str = "matrix"):
    """Cholesky-factor a symmetric positive definite matrix.

    Raises NumericalError (not scipy's LinAlgError) so callers can map the
    failure to a structured exit code.
    """
    try:
        return scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"{what} is not symmetric positive definite") from exc


def cho_solve(factor, b: np.ndarray) -> np.ndarray:
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)
