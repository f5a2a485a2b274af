"""Multi-expert base-forecast panels and their selection/permutation machinery.

The ``m`` available forecasts (expert j covers ``n_j`` variables, variable i is
covered by ``p_i`` experts, ``m = sum n_j = sum p_i``) are stacked *by-expert*:
expert-major, and within each expert the variables follow the constraint-system
label order. The companion *by-variable* stacking groups the forecasts of each
variable, experts in panel order; the permutation matrix ``P`` maps the former
onto the latter.

Matrices built here (dense 0/1):

* ``L_j`` (n_j x n): selects expert j's covered variables from ``y``;
* ``L``  (m x n*p): block-diagonal of the ``L_j``;
* ``K``  (m x n): ``L (1_p kron I_n)``, i.e. the stacked ``L_j``;
* ``P``  (m x m): by-expert to by-variable permutation;
* ``J``  (m x n): ``P K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constraints import ConstraintSystem
from .exceptions import DataError


@dataclass(frozen=True)
class ForecastPanel:
    """Immutable panel of base forecasts with its selection matrices.

    ``availability[i, j]`` is True when expert j forecasts variable i; ``y_hat``
    holds the m stacked values (by-expert order).
    """

    labels: tuple[str, ...]
    experts: tuple[str, ...]
    availability: np.ndarray
    y_hat: np.ndarray
    pairs: tuple[tuple[int, int], ...] = field(init=False, repr=False)
    L: np.ndarray = field(init=False, repr=False)
    K: np.ndarray = field(init=False, repr=False)
    P: np.ndarray = field(init=False, repr=False)
    J: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        avail = np.asarray(self.availability, dtype=bool)
        n, p = avail.shape
        if len(self.labels) != n:
            raise DataError("availability rows must match the variable labels")
        if len(self.experts) != p:
            raise DataError("availability columns must match the expert labels")
        if len(set(self.experts)) != p:
            raise DataError("expert labels must be unique")
        p_i = avail.sum(axis=1)
        n_j = avail.sum(axis=0)
        if np.any(p_i < 1):
            missing = [self.labels[i] for i in np.flatnonzero(p_i < 1)]
            raise DataError(f"variables without any forecast: {missing}")
        if np.any(n_j < 1):
            idle = [self.experts[j] for j in np.flatnonzero(n_j < 1)]
            raise DataError(f"experts without any forecast: {idle}")

        pairs = tuple(
            (i, j) for j in range(p) for i in range(n) if avail[i, j]
        )
        m = len(pairs)
        y_hat = np.asarray(self.y_hat, dtype=float).reshape(-1).copy()
        if y_hat.shape != (m,):
            raise DataError(f"expected {m} stacked values, got {y_hat.shape[0]}")

        var_idx = np.array([i for i, _ in pairs])
        exp_idx = np.array([j for _, j in pairs])
        eye = np.eye(n)
        K = eye[var_idx]
        L = np.zeros((m, n * p))
        L[np.arange(m), exp_idx * n + var_idx] = 1.0
        bv_order = sorted(range(m), key=lambda r: pairs[r])
        P = np.zeros((m, m))
        P[np.arange(m), bv_order] = 1.0
        J = P @ K

        for arr in (avail, y_hat, K, L, P, J):
            arr.setflags(write=False)
        object.__setattr__(self, "availability", avail)
        object.__setattr__(self, "y_hat", y_hat)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "J", J)

    # -- sizes ---------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.availability.shape[0]

    @property
    def p(self) -> int:
        return self.availability.shape[1]

    @property
    def m(self) -> int:
        return len(self.pairs)

    @property
    def n_j(self) -> np.ndarray:
        return self.availability.sum(axis=0)

    @property
    def p_i(self) -> np.ndarray:
        return self.availability.sum(axis=1)

    @property
    def balanced(self) -> bool:
        return bool(self.availability.all())

    # -- views ---------------------------------------------------------------

    def selection(self, j: int) -> np.ndarray:
        """L_j: the (n_j x n) selector of expert j's covered variables."""
        return np.eye(self.n)[self.availability[:, j]]

    def expert_rows(self, j: int) -> slice:
        """Positions of expert j's forecasts within the by-expert stack."""
        start = int(self.n_j[:j].sum())
        return slice(start, start + int(self.n_j[j]))

    def variable_rows(self, i: int) -> list[int]:
        """By-expert positions of the forecasts of variable i, expert order."""
        return [r for r, (vi, _) in enumerate(self.pairs) if vi == i]

    def expert_vector(self, j: int) -> np.ndarray:
        return self.y_hat[self.expert_rows(j)]

    def stack(self, values: np.ndarray) -> np.ndarray:
        """Stack an (n x p) value matrix into the by-expert m-vector.

        Index-based fast path; agrees bit-for-bit with multiplying through the
        dense selection matrices.
        """
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n, self.p):
            raise DataError(f"expected an {self.n}x{self.p} value matrix")
        var_idx = [i for i, _ in self.pairs]
        exp_idx = [j for _, j in self.pairs]
        return values[var_idx, exp_idx]

    def with_values(self, y_hat: np.ndarray) -> "ForecastPanel":
        """Same panel structure carrying a different stacked value vector."""
        return ForecastPanel(self.labels, self.experts, self.availability, y_hat)


def from_availability(
    availability: np.ndarray,
    sys: ConstraintSystem,
    experts=None,
    values: np.ndarray | None = None,
) -> ForecastPanel:
    """Build a panel from an availability mask (values default to zero)."""
    avail = np.asarray(availability, dtype=bool)
    if avail.ndim != 2 or avail.shape[0] != sys.n:
        raise DataError(f"availability must be {sys.n} x p")
    p = avail.shape[1]
    if experts is None:
        experts = tuple(f"expert{j + 1}" for j in range(p))
    m = int(avail.sum())
    y_hat = np.zeros(m) if values is None else values
    return ForecastPanel(sys.labels, tuple(experts), avail, y_hat)


def build_panel(forecasts, sys: ConstraintSystem) -> ForecastPanel:
    """Assemble a panel from (variable label, expert label, value) triples.

    Expert order is the input order of first appearance; variable order comes
    from the constraint system, which makes the stacking (and hence ``P``)
    deterministic.
    """
    experts: list[str] = []
    seen: set[tuple[int, int]] = set()
    cells: dict[tuple[int, int], float] = {}
    for var_label, expert_label, value in forecasts:
        i = sys.index_of(str(var_label))
        expert_label = str(expert_label)
        if expert_label not in experts:
            experts.append(expert_label)
        j = experts.index(expert_label)
        if (i, j) in seen:
            raise DataError(
                f"duplicate forecast for variable {var_label!r} by expert {expert_label!r}"
            )
        seen.add((i, j))
        cells[(i, j)] = float(value)

    avail = np.zeros((sys.n, len(experts)), dtype=bool)
    for i, j in seen:
        avail[i, j] = True
    values = np.array(
        [cells[(i, j)] for j in range(len(experts)) for i in range(sys.n) if avail[i, j]]
    )
    return ForecastPanel(sys.labels, tuple(experts), avail, values)


def to_by_variable(panel: ForecastPanel) -> np.ndarray:
    """Reorder the stacked base forecasts variable-major: ``P y_hat``."""
    return panel.P @ panel.y_hat


def residual_panel(panel: ForecastPanel, actuals: np.ndarray, fitted) -> np.ndarray:
    """In-sample forecast errors, one (m,) column per time index.

    ``actuals`` is (T x n) in label order; ``fitted`` is an iterable of
    (t, variable label, expert label, value) with t in 0..T-1.  Every
    (variable, expert) pair in the panel must be observed at every t.
    The entries are actual minus fitted.
    """
    actuals = np.asarray(actuals, dtype=float)
    if actuals.ndim != 2 or actuals.shape[1] != panel.n:
        raise DataError(f"actuals must be T x {panel.n}")
    T = actuals.shape[0]
    if T < 2:
        raise DataError("need at least two residual observations")

    expert_index = {name: j for j, name in enumerate(panel.experts)}
    row_of = {pair: r for r, pair in enumerate(panel.pairs)}
    fit = np.full((panel.m, T), np.nan)
    for t, var_label, expert_label, value in fitted:
        t = int(t)
        if not 0 <= t < T:
            raise DataError(f"time index {t} outside 0..{T - 1}")
        i = panel.labels.index(str(var_label)) if str(var_label) in panel.labels else -1
        if i < 0:
            raise DataError(f"unknown variable label {var_label!r}")
        j = expert_index.get(str(expert_label))
        if j is None:
            raise DataError(f"unknown expert label {expert_label!r}")
        r = row_of.get((i, j))
        if r is None:
            raise DataError(
                f"pair ({var_label!r}, {expert_label!r}) is not part of the panel"
            )
        fit[r, t] = float(value)
    if np.isnan(fit).any():
        missing = int(np.isnan(fit).sum())
        raise DataError(f"missing fitted values for {missing} residual cells")

    var_idx = [i for i, _ in panel.pairs]
    return actuals.T[var_idx, :] - fit


def residuals_from_arrays(
    panel: ForecastPanel, actuals: np.ndarray, forecasts: np.ndarray
) -> np.ndarray:
    """Residual matrix from dense arrays: ``forecasts`` is (p x T x n).

    Fast path for simulated data; bit-for-bit identical to ``residual_panel``
    on the same values.
    """
    actuals = np.asarray(actuals, dtype=float)
    forecasts = np.asarray(forecasts, dtype=float)
    T = actuals.shape[0]
    out = np.empty((panel.m, T))
    for r, (i, j) in enumerate(panel.pairs):
        out[r] = actuals[:, i] - forecasts[j, :, i]
    return out
