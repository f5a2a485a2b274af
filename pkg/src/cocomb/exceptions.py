"""Exception types shared across the package.

The ``code`` attribute is machine-readable and drives the CLI exit status:
``schema`` errors exit with 3, ``numeric`` errors with 4.
"""


class CocombError(Exception):
    code = "error"


class DataError(CocombError):
    """Malformed or inconsistent input data (labels, shapes, file schemas)."""

    code = "schema"


class NumericalError(CocombError):
    """Numerical failure: rank deficiency, non-SPD covariance, no convergence."""

    code = "numeric"
