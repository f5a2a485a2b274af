"""Monte-Carlo study of the combination methods on a fixed two-level hierarchy.

The data generating process simulates the four bottom series of the seven
variable hierarchy (total X, intermediates A and B, bottom AA, AB, BA, BB)
from a two-factor model: each bottom series is the sum of two factors following
independent diagonal VAR(1) processes plus a cross-correlated noise term, and
the full vector is obtained bottom-up, so the simulated actuals are coherent by
construction. Each expert observes the factors, loads them with its own
coefficients and adds noise whose variance is proportional to the number of
bottom series aggregated into each node.

Six parameter settings vary the expert bias, factor loadings, error variance
and factor persistence; expert participation is either balanced or governed by
a two-state (frequent/infrequent) participation mechanism. Replications carry
independent, counter-based random streams derived from (seed, replication
index), so parallel and serial runs produce identical results.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._linalg import symmetrize
from .coherent import mint_reconcile, occ, scr, src
from .constraints import ConstraintSystem, from_aggregation
from .covariance import (
    block_by_expert,
    block_by_variable,
    diagonal_mse,
    sample_mse,
    shrink,
)
from .combiners import single_task_weights
from .exceptions import DataError, NumericalError
from .panel import ForecastPanel, from_availability, residuals_from_arrays

DGP_LABELS = ("X", "A", "B", "AA", "AB", "BA", "BB")
_DGP_A = np.array(
    [
        [1.0, 1.0, 1.0, 1.0],
        [1.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 1.0],
    ]
)

SIMULATION_METHODS = (
    "base_star",
    "base_star_shr",
    "base_shr",
    "ew",
    "ow_var",
    "ow_cov",
    "src",
    "scr_ew",
    "scr_var",
    "scr_cov",
    "occ_be",
    "occ_bv",
    "occ_shr",
    "occ_wls",
)

_BALANCED_ONLY = ("src", "base_star", "base_star_shr", "base_shr")

# Two-state participation chain: probability of forecasting a variable given
# the expert's previous participation state; the per-variable coverage rate is
# the chain's stationary probability enter / (1 - stay + enter).
FREQUENT_STAY = 0.95
FREQUENT_ENTER = 0.80
INFREQUENT_STAY = 0.50
INFREQUENT_ENTER = 0.20
FREQUENT_SHARE = 0.40


def dgp_system() -> ConstraintSystem:
    """The fixed 7-variable, 4-bottom hierarchy used by the simulation."""
    return from_aggregation(_DGP_A, DGP_LABELS)


def nearest_correlation(
    r0: np.ndarray, tol: float = 1e-9, max_iter: int = 100, pd_floor: float = 1e-8
) -> np.ndarray:
    """Closest correlation matrix by alternating projections.

    Dykstra-corrected alternation between the positive semidefinite cone and
    the unit-diagonal subspace, followed by an eigenvalue floor and diagonal
    rescale so the result supports a Cholesky draw. Raises after ``max_iter``
    steps without convergence.
    """
    a = symmetrize(np.asarray(r0, dtype=float))
    y = a.copy()
    ds = np.zeros_like(a)
    for _ in range(max_iter):
        rk = y - ds
        w, v = np.linalg.eigh(rk)
        x = symmetrize((v * np.clip(w, 0.0, None)) @ v.T)
        ds = x - rk
        y_new = x.copy()
        np.fill_diagonal(y_new, 1.0)
        if np.max(np.abs(y_new - y)) <= tol and np.max(np.abs(y_new - x)) <= tol:
            y = y_new
            break
        y = y_new
    else:
        raise NumericalError(f"nearest-correlation projection did not converge in {max_iter} steps")
    w, v = np.linalg.eigh(symmetrize(y))
    x = symmetrize((v * np.clip(w, pd_floor, None)) @ v.T)
    d = np.sqrt(np.diag(x))
    x = x / np.outer(d, d)
    np.fill_diagonal(x, 1.0)
    return symmetrize(x)


@dataclass(frozen=True)
class SimulationConfig:
    """One simulation cell: parameter setting, panel shape and randomness.

    ``setting`` selects the expert model parameters (1-6): bias ``mu``, factor
    loadings ``beta``, error variance ``sigma2`` and factor VAR coefficient:

    ====== ========== =============== =============== =========
    setting mu         beta            sigma2          var_coef
    1       0          (1, 1)          1               0
    2       0          (.5, .5)        1               0
    3       0          (.5, .5)        1               0.9
    4       0          Uniform(0,1)^2  1               0
    5       0          (.5, .5)        InvGamma(5, 5)  0
    6       N(0, 1)    (.5, .5)        1               0
    ====== ========== =============== =============== =========

    ``n_train`` observations feed the covariance estimates and ``test_len``
    further points (default 100) are held out for evaluation. ``error_corr``
    picks the expert-error correlation: identity, or a random correlation
    matrix drawn independently for every expert in every replication.
    """

    setting: int
    p: int = 4
    n_train: int = 200
    test_len: int = 100
    replications: int = 500
    seed: int = 0
    balanced: bool = True
    error_corr: str = "random_spd"
    frequent_stay: float = FREQUENT_STAY
    frequent_enter: float = FREQUENT_ENTER
    infrequent_stay: float = INFREQUENT_STAY
    infrequent_enter: float = INFREQUENT_ENTER

    def __post_init__(self) -> None:
        if self.setting not in range(1, 7):
            raise DataError("setting must be between 1 and 6")
        if self.p < 2:
            raise DataError("need at least two experts")
        if self.n_train < 2 or self.test_len < 1 or self.replications < 1:
            raise DataError("n_train, test_len and replications must be positive")
        if self.seed < 0:
            raise DataError("seed must be non-negative")
        if self.error_corr not in ("identity", "random_spd"):
            raise DataError("error_corr must be 'identity' or 'random_spd'")

    @property
    def total_len(self) -> int:
        return self.n_train + self.test_len

    @property
    def var_coef(self) -> float:
        return 0.9 if self.setting == 3 else 0.0

    def participation_rate(self, frequent: bool) -> float:
        stay = self.frequent_stay if frequent else self.infrequent_stay
        enter = self.frequent_enter if frequent else self.infrequent_enter
        return enter / (1.0 - stay + enter)


@dataclass(frozen=True)
class Replication:
    """One simulated replication: actuals, per-expert forecasts and the mask."""

    actuals: np.ndarray
    forecasts: np.ndarray
    availability: np.ndarray


def _expert_params(cfg: SimulationConfig, rng: np.random.Generator):
    p = cfg.p
    mu = np.zeros(p)
    beta = np.full((p, 2), 1.0 if cfg.setting == 1 else 0.5)
    sigma2 = np.ones(p)
    if cfg.setting == 4:
        beta = rng.uniform(0.0, 1.0, size=(p, 2))
    elif cfg.setting == 5:
        sigma2 = 1.0 / rng.gamma(shape=5.0, scale=1.0 / 5.0, size=p)
    elif cfg.setting == 6:
        mu = rng.standard_normal(p)
    return mu, beta, sigma2


def _random_correlation(rng: np.random.Generator, size: int) -> np.ndarray:
    raw = np.eye(size)
    iu = np.triu_indices(size, k=1)
    raw[iu] = rng.uniform(-1.0, 1.0, size=len(iu[0]))
    raw.T[iu] = raw[iu]
    return nearest_correlation(raw)


def _participation_mask(cfg: SimulationConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    """Frequent/infrequent participation mask with no empty variable or expert.

    Per-variable coverage is Bernoulli at the expert type's stationary
    participation rate, drawn independently across variables; a variable left
    uncovered is redrawn, and a draw leaving some expert idle is restarted.
    """
    n_frequent = max(1, round(FREQUENT_SHARE * cfg.p))
    rates = np.array([cfg.participation_rate(j < n_frequent) for j in range(cfg.p)])
    while True:
        mask = np.zeros((n, cfg.p), dtype=bool)
        for i in range(n):
            row = rng.random(cfg.p) < rates
            while not row.any():
                row = rng.random(cfg.p) < rates
            mask[i] = row
        if mask.any(axis=0).all():
            return mask


def generate_replication(cfg: SimulationConfig, rep_index: int) -> Replication:
    """Simulate one replication of actuals and per-expert base forecasts.

    Returns (n_train + test_len) observations of the 7-variable hierarchy
    together with the p experts' forecasts and the availability mask. Output
    is a pure function of (cfg.seed, rep_index).
    """
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, rep_index]))
    sys = dgp_system()
    n, n_b = sys.n, sys.n_b
    T = cfg.total_len
    mu, beta, sigma2 = _expert_params(cfg, rng)

    bottom_corr = _random_correlation(rng, n_b) if n_b > 1 else np.eye(1)
    if cfg.error_corr == "random_spd":
        thetas = [_random_correlation(rng, n) for _ in range(cfg.p)]
    else:
        thetas = [np.eye(n)] * cfg.p

    phi = cfg.var_coef
    innovations = rng.standard_normal((T, n_b, 2))
    if phi == 0.0:
        factors = innovations
    else:
        factors = np.empty_like(innovations)
        state = rng.standard_normal((n_b, 2)) / np.sqrt(1.0 - phi**2)
        for t in range(T):
            state = phi * state + innovations[t]
            factors[t] = state

    chol_bottom = np.linalg.cholesky(bottom_corr)
    eta = rng.standard_normal((T, n_b)) @ chol_bottom.T
    bottom = factors[:, :, 0] + factors[:, :, 1] + eta
    actuals = bottom @ sys.S.T

    # expert error scale: variance proportional to the number of aggregated
    # bottom series at each node; each expert has its own error correlation
    agg_size = sys.S @ np.ones(n_b)
    forecasts = np.empty((cfg.p, T, n))
    for j in range(cfg.p):
        systematic = mu[j] + beta[j, 0] * factors[:, :, 0] + beta[j, 1] * factors[:, :, 1]
        scale = np.sqrt(sigma2[j] * agg_size)
        chol_err = scale[:, None] * np.linalg.cholesky(thetas[j])
        noise = rng.standard_normal((T, n)) @ chol_err.T
        forecasts[j] = systematic @ sys.S.T + noise

    if cfg.balanced:
        availability = np.ones((n, cfg.p), dtype=bool)
    else:
        availability = _participation_mask(cfg, rng, n)
    return Replication(actuals=actuals, forecasts=forecasts, availability=availability)


# -- per-replication method evaluation ----------------------------------------


def _mint_projector(sys: ConstraintSystem, cov_n) -> np.ndarray:
    return mint_reconcile(np.zeros(sys.n), sys, cov_n).Psi.T


def _expert_selector(panel: ForecastPanel, j: int) -> np.ndarray:
    sel = np.zeros((panel.n, panel.m))
    sel[:, panel.expert_rows(j)] = np.eye(panel.n)
    return sel


def _method_weights(
    method: str,
    panel: ForecastPanel,
    sys: ConstraintSystem,
    resid: np.ndarray,
    cache: dict,
) -> np.ndarray:
    """The fixed (n x m) map from stacked base forecasts to the method output."""
    if method == "ew":
        return single_task_weights(panel, "ew").matrix(panel).T
    if method in ("ow_var", "ow_cov"):
        if "sample" not in cache:
            cache["sample"] = sample_mse(resid)
        return single_task_weights(panel, method, cache["sample"]).matrix(panel).T
    if method.startswith("scr_"):
        scheme = {"scr_ew": "ew", "scr_var": "ow_var", "scr_cov": "ow_cov"}[method]
        if scheme == "ew":
            ws = single_task_weights(panel, "ew")
        else:
            if "sample" not in cache:
                cache["sample"] = sample_mse(resid)
            ws = single_task_weights(panel, scheme, cache["sample"])
        combined_resid = ws.matrix(panel).T @ resid
        return scr(panel, sys, ws, None, shrink(combined_resid)).Psi.T
    if method == "src":
        covs = [shrink(resid[panel.expert_rows(j)]) for j in range(panel.p)]
        return src(panel, sys, covs).Psi.T
    if method == "occ_be":
        return occ(panel, sys, block_by_expert(resid, panel, shrink_blocks=True)).Psi.T
    if method == "occ_bv":
        return occ(panel, sys, block_by_variable(resid, panel, shrink_blocks=True)).Psi.T
    if method == "occ_shr":
        return occ(panel, sys, shrink(resid)).Psi.T
    if method == "occ_wls":
        return occ(panel, sys, diagonal_mse(resid)).Psi.T
    if method in ("base_star", "base_star_shr"):
        if "best_expert" not in cache:
            mses = [np.mean(resid[panel.expert_rows(j)] ** 2) for j in range(panel.p)]
            cache["best_expert"] = int(np.argmin(mses))
        j_star = cache["best_expert"]
        sel = _expert_selector(panel, j_star)
        if method == "base_star":
            return sel
        return _mint_projector(sys, shrink(resid[panel.expert_rows(j_star)])) @ sel
    if method == "base_shr":
        best, best_mse = None, np.inf
        for j in range(panel.p):
            m_j = _mint_projector(sys, shrink(resid[panel.expert_rows(j)]))
            rec_mse = np.mean((m_j @ resid[panel.expert_rows(j)]) ** 2)
            if rec_mse < best_mse:
                best, best_mse = m_j @ _expert_selector(panel, j), rec_mse
        return best
    raise DataError(f"unknown simulation method {method!r}")


def _replication_accuracy(cfg: SimulationConfig, rep_index: int, methods: tuple[str, ...]):
    data = generate_replication(cfg, rep_index)
    sys = dgp_system()
    panel = from_availability(data.availability, sys)
    n_train = cfg.n_train
    resid = residuals_from_arrays(panel, data.actuals[:n_train], data.forecasts[:, :n_train])

    test_actuals = data.actuals[n_train:]
    stacked = np.empty((panel.m, cfg.test_len))
    for r, (i, j) in enumerate(panel.pairs):
        stacked[r] = data.forecasts[j, n_train:, i]

    cache: dict = {}
    mae = np.empty((len(methods), panel.n))
    mse = np.empty((len(methods), panel.n))
    for k, method in enumerate(methods):
        weights = _method_weights(method, panel, sys, resid, cache)
        err = test_actuals.T - weights @ stacked
        mae[k] = np.abs(err).mean(axis=1)
        mse[k] = (err**2).mean(axis=1)
    return mae, mse


@dataclass(frozen=True)
class ExperimentResult:
    """Accuracy of each method relative to the equal-weight benchmark."""

    config: SimulationConfig
    methods: tuple[str, ...]
    mae: dict = field(repr=False)
    mse: dict = field(repr=False)
    avg_rel_mae: dict = field(default_factory=dict)
    avg_rel_mse: dict = field(default_factory=dict)

    def summary_rows(self) -> list[dict]:
        rows = []
        for method in self.methods:
            rows.append(
                {
                    "setting": self.config.setting,
                    "p": self.config.p,
                    "n_train": self.config.n_train,
                    "balanced": self.config.balanced,
                    "method": method,
                    "avg_rel_mae": self.avg_rel_mae[method],
                    "avg_rel_mse": self.avg_rel_mse[method],
                }
            )
        return rows


def run_experiment(
    cfg: SimulationConfig, methods, n_jobs: int = 1
) -> ExperimentResult:
    """Run the Monte-Carlo experiment and report geometric-mean relative accuracy.

    Per replication, the covariances and weights are estimated once from the
    ``n_train`` in-sample residuals and held fixed over the test window. The
    aggregate for each method is the geometric mean, over replications and
    variables, of its per-series MAE (and MSE) relative to the equal-weight
    combination.
    """
    methods = tuple(dict.fromkeys(methods))
    unknown = [m for m in methods if m not in SIMULATION_METHODS]
    if unknown:
        raise DataError(f"unknown methods: {unknown}; choose from {SIMULATION_METHODS}")
    if not cfg.balanced:
        blocked = [m for m in methods if m in _BALANCED_ONLY]
        if blocked:
            raise DataError(f"methods {blocked} are limited to balanced panels")
    wanted = methods if "ew" in methods else ("ew",) + methods

    if n_jobs == 1:
        per_rep = [
            _replication_accuracy(cfg, rep, wanted) for rep in range(cfg.replications)
        ]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            per_rep = list(
                pool.map(
                    _replication_accuracy,
                    [cfg] * cfg.replications,
                    range(cfg.replications),
                    [wanted] * cfg.replications,
                )
            )

    mae_all = np.stack([mae for mae, _ in per_rep])
    mse_all = np.stack([mse for _, mse in per_rep])
    ew_pos = wanted.index("ew")
    mae = {m: mae_all[:, k, :] for k, m in enumerate(wanted)}
    mse = {m: mse_all[:, k, :] for k, m in enumerate(wanted)}
    avg_rel_mae = {
        m: float(np.exp(np.mean(np.log(mae[m] / mae_all[:, ew_pos, :])))) for m in methods
    }
    avg_rel_mse = {
        m: float(np.exp(np.mean(np.log(mse[m] / mse_all[:, ew_pos, :])))) for m in methods
    }
    return ExperimentResult(
        config=cfg,
        methods=methods,
        mae={m: mae[m] for m in methods},
        mse={m: mse[m] for m in methods},
        avg_rel_mae=avg_rel_mae,
        avg_rel_mse=avg_rel_mse,
    )
