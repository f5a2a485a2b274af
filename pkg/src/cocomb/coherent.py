"""Coherent combination of multi-expert forecasts under linear constraints.

The optimal coherent combination (``occ``) solves the constrained GLS problem
of fitting the target vector to all stacked base forecasts subject to the zero
constraints, and admits four equivalent closed forms, indexed by model
representation (zero-constrained vs. structural) and by stacking (by-expert vs.
by-variable):

* ``zc_be``     project the multi-task combined forecast onto the coherent
                subspace with the oblique projector built from its covariance;
* ``zc_bv``     the same in the by-variable ordering (J and Sigma);
* ``struct_be`` GLS on the bottom variables through the structural matrix,
                then bottom-up expansion;
* ``struct_bv`` the structural route in the by-variable ordering.

The four are implemented independently so their agreement is a genuine
cross-check. ``mint_reconcile`` is the single-expert (p = 1) specialization;
``scr`` and ``src`` are the sequential combine-then-reconcile and
reconcile-then-average baselines.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._linalg import cho_factor_spd, cho_solve, symmetrize
from .combiners import WeightScheme, single_task_weights
from .constraints import ConstraintSystem
from .covariance import CovarianceEstimate, as_covariance
from .exceptions import DataError, NumericalError
from .panel import ForecastPanel, from_availability

FORMULATIONS = ("zc_be", "zc_bv", "struct_be", "struct_bv")


@dataclass(frozen=True)
class CoherentResult:
    """A coherent combined forecast with its weights and error covariance.

    ``Psi`` is always stored in the by-expert ordering (m x n), so that
    ``y_tilde = Psi.T @ y_hat``; for by-variable formulations the equivalent
    by-variable weights are ``P @ Psi``. ``W_tilde`` is the reconciled error
    covariance. ``M`` and ``W_c`` (projector and combined-forecast covariance)
    are filled by the zero-constrained routes and by ``mint_reconcile``.
    """

    y_tilde: np.ndarray
    Psi: np.ndarray
    W_tilde: np.ndarray
    formulation: str
    W_c: np.ndarray | None = None
    M: np.ndarray | None = None


def _coherent_projector(w_c: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Oblique projector onto the coherent subspace: I - W_c C'(C W_c C')^-1 C."""
    n = w_c.shape[0]
    if c.shape[0] == 0:
        return np.eye(n)
    cwc = symmetrize(c @ w_c @ c.T)
    f = cho_factor_spd(cwc, "constraint-space covariance")
    return np.eye(n) - w_c @ c.T @ cho_solve(f, c)


def _check_inputs(panel: ForecastPanel, sys: ConstraintSystem, cov: CovarianceEstimate) -> None:
    if panel.labels != sys.labels:
        raise DataError("panel and constraint system must share the variable set")
    if cov.singular:
        raise NumericalError(
            "covariance estimate is flagged singular; use a shrunk or block pattern"
        )
    if cov.m != panel.m:
        raise DataError(f"covariance size {cov.m} does not match panel size {panel.m}")


def _occ_zc_be(panel: ForecastPanel, sys: ConstraintSystem, cov: CovarianceEstimate) -> CoherentResult:
    f_w = cho_factor_spd(cov.W, "error covariance")
    b = cho_solve(f_w, panel.K)
    wc_inv = symmetrize(panel.K.T @ b)
    w_c = symmetrize(cho_solve(cho_factor_spd(wc_inv, "combined precision"), np.eye(panel.n)))
    omega = b @ w_c
    m_proj = _coherent_projector(w_c, sys.C)
    psi = omega @ m_proj.T
    return CoherentResult(
        y_tilde=psi.T @ panel.y_hat,
        Psi=psi,
        W_tilde=m_proj @ w_c,
        formulation="zc_be",
        W_c=w_c,
        M=m_proj,
    )


def _occ_zc_bv(panel: ForecastPanel, sys: ConstraintSystem, cov: CovarianceEstimate) -> CoherentResult:
    p = panel.P
    sigma = symmetrize(p @ cov.W @ p.T)
    f_s = cho_factor_spd(sigma, "error covariance (by-variable)")
    b = cho_solve(f_s, panel.J)
    sc_inv = symmetrize(panel.J.T @ b)
    sigma_c = symmetrize(cho_solve(cho_factor_spd(sc_inv, "combined precision"), np.eye(panel.n)))
    gamma = b @ sigma_c
    m_proj = _coherent_projector(sigma_c, sys.C)
    phi = gamma @ m_proj.T
    return CoherentResult(
        y_tilde=phi.T @ (p @ panel.y_hat),
        Psi=p.T @ phi,
        W_tilde=m_proj @ sigma_c,
        formulation="zc_bv",
        W_c=sigma_c,
        M=m_proj,
    )


def _occ_struct_be(panel: ForecastPanel, sys: ConstraintSystem, cov: CovarianceEstimate) -> CoherentResult:
    s = sys.S
    f_w = cho_factor_spd(cov.W, "error covariance")
    ks = panel.K @ s
    t1 = cho_solve(f_w, ks)
    h = symmetrize(ks.T @ t1)
    f_h = cho_factor_spd(h, "bottom-variable precision")
    g = cho_solve(f_h, t1.T)
    psi = (s @ g).T
    return CoherentResult(
        y_tilde=s @ (g @ panel.y_hat),
        Psi=psi,
        W_tilde=s @ cho_solve(f_h, s.T),
        formulation="struct_be",
    )


def _occ_struct_bv(panel: ForecastPanel, sys: ConstraintSystem, cov: CovarianceEstimate) -> CoherentResult:
    s = sys.S
    p = panel.P
    sigma = symmetrize(p @ cov.W @ p.T)
    f_s = cho_factor_spd(sigma, "error covariance (by-variable)")
    js = panel.J @ s
    t1 = cho_solve(f_s, js)
    h = symmetrize(js.T @ t1)
    f_h = cho_factor_spd(h, "bottom-variable precision")
    g_bv = cho_solve(f_h, t1.T)
    phi = (s @ g_bv).T
    return CoherentResult(
        y_tilde=s @ (g_bv @ (p @ panel.y_hat)),
        Psi=p.T @ phi,
        W_tilde=s @ cho_solve(f_h, s.T),
        formulation="struct_bv",
    )


_OCC_ROUTES = {
    "zc_be": _occ_zc_be,
    "zc_bv": _occ_zc_bv,
    "struct_be": _occ_struct_be,
    "struct_bv": _occ_struct_bv,
}


def occ(
    panel: ForecastPanel,
    sys: ConstraintSystem,
    cov: CovarianceEstimate,
    formulation: str = "zc_be",
) -> CoherentResult:
    """Optimal coherent combination of all available base forecasts.

    Minimizes the GLS criterion of the stacked base forecasts subject to the
    zero constraints. The four formulations agree up to floating-point error;
    ``zc_be`` is the default production route.
    """
    if formulation not in _OCC_ROUTES:
        raise DataError(f"unknown formulation {formulation!r}; pick one of {FORMULATIONS}")
    _check_inputs(panel, sys, cov)
    return _OCC_ROUTES[formulation](panel, sys, cov)


def mint_reconcile(
    y_hat: np.ndarray,
    sys: ConstraintSystem,
    cov_n: np.ndarray | CovarianceEstimate,
) -> CoherentResult:
    """Single-expert minimum-trace reconciliation (the p = 1 case).

    Projects one n-vector of base forecasts onto the coherent subspace with
    the oblique projector ``M = I - W C'(C W C')^-1 C``. Runs through the same
    code path as ``occ`` on a one-expert panel, of which it is the exact
    specialization.
    """
    y_hat = np.asarray(y_hat, dtype=float).reshape(-1)
    if y_hat.shape != (sys.n,):
        raise DataError(f"expected a base forecast vector of length {sys.n}")
    cov = cov_n if isinstance(cov_n, CovarianceEstimate) else as_covariance(cov_n)
    if cov.singular:
        raise NumericalError(
            "covariance estimate is flagged singular; use a shrunk or block pattern"
        )
    panel = from_availability(
        np.ones((sys.n, 1), dtype=bool), sys, experts=("expert1",), values=y_hat
    )
    res = _occ_zc_be(panel, sys, cov)
    return replace(res, formulation="mint")


def scr(
    panel: ForecastPanel,
    sys: ConstraintSystem,
    scheme: str | WeightScheme,
    cov_combine: CovarianceEstimate | None,
    cov_reconcile: np.ndarray | CovarianceEstimate,
) -> CoherentResult:
    """Sequential combination-then-reconciliation.

    Combines per variable under ``scheme`` (ew / ow_var / ow_cov, the latter
    two weighted from ``cov_combine``), then reconciles the combined vector
    with ``cov_reconcile`` (an n x n covariance, typically the shrunk MSE of
    the combined in-sample residuals).
    """
    ws = scheme if isinstance(scheme, WeightScheme) else single_task_weights(
        panel, scheme, cov_combine
    )
    y_c = ws.apply(panel)
    rec = mint_reconcile(y_c, sys, cov_reconcile)
    psi = ws.matrix(panel) @ rec.Psi
    return CoherentResult(
        y_tilde=rec.y_tilde,
        Psi=psi,
        W_tilde=rec.W_tilde,
        formulation=f"scr_{ws.scheme}",
        W_c=rec.W_c,
        M=rec.M,
    )


def src(panel: ForecastPanel, sys: ConstraintSystem, cov_per_expert) -> CoherentResult:
    """Sequential reconciliation-then-average: balanced panels only.

    Each expert's forecasts are reconciled with that expert's own n x n error
    covariance, then averaged with equal weights; the average of coherent
    vectors stays coherent. The returned error covariance assumes uncorrelated
    experts.
    """
    if not panel.balanced:
        raise DataError("src is limited to balanced panels (every expert covers every variable)")
    cov_list = list(cov_per_expert)
    if len(cov_list) != panel.p:
        raise DataError(f"need one covariance per expert ({panel.p}), got {len(cov_list)}")
    n, p = panel.n, panel.p
    psi_blocks = []
    y_parts = []
    w_tilde = np.zeros((n, n))
    for j, cov_j in enumerate(cov_list):
        res_j = mint_reconcile(panel.expert_vector(j), sys, cov_j)
        psi_blocks.append(res_j.Psi / p)
        y_parts.append(res_j.y_tilde)
        w_tilde += res_j.W_tilde / p**2
    return CoherentResult(
        y_tilde=np.mean(y_parts, axis=0),
        Psi=np.vstack(psi_blocks),
        W_tilde=w_tilde,
        formulation="src",
    )
