"""Estimators: logarithmic inversion (LI) and maximum likelihood (ML).

Parameter vectors follow :func:`core_model.vector_from_params` (14 signed
entries, ``log Q = -v . x'``) for the unconstrained model and
:func:`core_model.tp_vector` (9 entries) for the trace-preserving one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from ._design import (
    IC_COND_THRESHOLD,
    DesignMatrix,
    ICReport,
    build_design_matrix,
    ic_diagnostics,
)
from .core_model import (
    C0_SIGN,
    QFunctionParams,
    params_from_real,
    params_from_vector,
    positivity_status,
    project_physical,
    real_representation,
    tp_complete,
    tp_discriminant,
    tp_vector,
    vector_from_params,
)
from .errors import AllNegativeSpectrum, AllZeroRow, NoConvergence, NotIC
from .mse_theory import vtp_rows
from .phase_space import PhaseSpaceGrid, output_log_q
from .simulator import MeasurementRecord, task_rng

__all__ = [
    "DesignMatrix",
    "ICReport",
    "EstimateReport",
    "build_design_matrix",
    "ic_diagnostics",
    "li_estimate",
    "ml_estimate_nontp",
    "ml_estimate_tp",
    "nontp_loglik",
    "nontp_gradient",
    "tp_loglik",
    "tp_gradient",
]

TP_MARGIN = 1e-8


@dataclass
class EstimateReport:
    x: np.ndarray
    method: str
    c0: Optional[float] = None
    iterations: int = 0
    grad_norm: float = 0.0
    converged: bool = True
    cp_ok: Optional[bool] = None
    tp_discriminant: Optional[float] = None
    at_boundary: bool = False
    loglik: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @property
    def params(self) -> QFunctionParams:
        if len(self.x) == 9:
            return tp_complete(self.x)
        return params_from_vector(self.x, self.c0)

    def to_dict(self) -> dict:
        d = {
            "x": [float(v) for v in self.x],
            "method": self.method,
            "c0": None if self.c0 is None else float(self.c0),
            "iterations": int(self.iterations),
            "grad_norm": float(self.grad_norm),
            "converged": bool(self.converged),
            "cp_ok": self.cp_ok,
            "tp_discriminant": self.tp_discriminant,
            "at_boundary": bool(self.at_boundary),
            "loglik": self.loglik,
        }
        d.update(self.extra)
        return d

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _is_cp(x, c0=0.0) -> bool:
    return positivity_status(params_from_vector(x, c0), "CP").passed


# ---------------------------------------------------------------- LI


def li_estimate(rec: MeasurementRecord, D: DesignMatrix, grid: PhaseSpaceGrid | None = None,
                project: bool = False) -> EstimateReport:
    """Least-squares fit of ``-log(gamma_j nu_jk)`` over the bins with counts.

    ``grid`` is only used to turn the fitted constant into ``c0``.
    """
    counts = np.asarray(rec.counts, dtype=float)
    if counts.shape != (D.J, D.K):
        raise ValueError("record and design matrix disagree on (J, K)")
    empty = np.where(counts.sum(axis=1) <= 0)[0]
    if len(empty):
        raise AllZeroRow(f"inputs {empty.tolist()} have no counts")
    keep = (counts > 0).ravel()
    Vs = D.V[keep]
    u = -np.log(rec.nu.ravel()[keep])
    s = np.linalg.svd(Vs, compute_uv=False)
    if len(s) < Vs.shape[1] or s[-1] == 0 or (s[0] / s[-1]) ** 2 >= IC_COND_THRESHOLD:
        raise NotIC("Gram matrix of the surviving rows is singular")
    sol, *_ = np.linalg.lstsq(Vs, u, rcond=None)
    x = sol[:14]
    # rows model log(Q area / pi); remove the bin-area offset from the constant
    log_area = 0.0 if grid is None else np.log(grid.bin_area / np.pi)
    c0 = float(C0_SIGN * sol[14] - log_area)
    method = "LI"
    if project:
        p = project_physical(params_from_vector(x, c0))
        x = vector_from_params(p)
        method = "LI+projection"
    return EstimateReport(
        x=x, method=method, c0=c0, cp_ok=_is_cp(x, c0),
        extra={"rows_used": int(keep.sum())},
    )


# ---------------------------------------------------------------- non-TP ML


def nontp_loglik(x, V14: np.ndarray, nu: np.ndarray) -> float:
    """``-sum nu_jk v_jk.x - mu log sum exp(-v_jk.x)`` with ``mu = sum nu``."""
    e = -V14 @ x
    return float(nu @ e - nu.sum() * logsumexp(e))


def nontp_gradient(x, V14: np.ndarray, nu: np.ndarray) -> np.ndarray:
    e = -V14 @ x
    pi = np.exp(e - logsumexp(e))
    return V14.T @ (nu.sum() * pi - nu)


def _nontp_hessian(x, V14, nu):
    e = -V14 @ x
    pi = np.exp(e - logsumexp(e))
    m = V14.T @ pi
    return -nu.sum() * ((V14.T * pi) @ V14 - np.outer(m, m))


def _real_to_vector_map() -> np.ndarray:
    """Linear map ``(vec A', B') -> x`` (14 x 20) for symmetric ``A'``."""
    T = np.zeros((14, 20))
    for i in range(16):
        E = np.zeros(16)
        E[i] = 1.0
        E = E.reshape(4, 4)
        T[:, i] = vector_from_params(params_from_real(0.5 * (E + E.T), np.zeros(4), 0.0))
    for i in range(4):
        b = np.zeros(4)
        b[i] = 1.0
        T[:, 16 + i] = vector_from_params(params_from_real(np.zeros((4, 4)), b, 0.0))
    return T


_REAL_MAP = _real_to_vector_map()


def _factor_start(x, c0):
    """Square-root factor of ``A'`` (slightly inflated) and ``B'``."""
    Ap, Bp = real_representation(params_from_vector(x, c0))
    d, V = np.linalg.eigh(0.5 * (Ap + Ap.T))
    d = np.clip(d, 0.0, None) + 1e-3 * max(d.max(), 1e-3)
    return np.concatenate([(V * np.sqrt(d)).ravel(), Bp])


def _factor_to_x(y):
    R = y[:16].reshape(4, 4)
    return _REAL_MAP @ np.concatenate([(R @ R.T).ravel(), y[16:]])


def _cone_ascent(x, c0, V14, nu, tol):
    """Maximise the likelihood over the CP cone via ``A' = R R^T``."""
    mu = nu.sum()

    def fun(y):
        e = -V14 @ _factor_to_x(y)
        lse = logsumexp(e)
        pi = np.exp(e - lse)
        ga = _REAL_MAP.T @ (V14.T @ (nu / mu - pi))
        G = ga[:16].reshape(4, 4)
        gR = (G + G.T) @ y[:16].reshape(4, 4)
        return lse - nu @ e / mu, np.concatenate([gR.ravel(), ga[16:]])

    res = minimize(fun, _factor_start(x, c0), jac=True, method="L-BFGS-B",
                   options={"maxiter": 20_000, "gtol": tol, "ftol": 1e-15})
    return _factor_to_x(res.x), int(res.nit)


def ml_estimate_nontp(rec: MeasurementRecord, grid: PhaseSpaceGrid, init=None,
                      max_iter: int = 10_000, tol: float = 1e-7) -> EstimateReport:
    """Maximum likelihood over the CP cone.

    The log-likelihood is concave in ``x``.  Newton ascent is tried first;
    if it is blocked by the cone, the maximiser lies on the boundary and is
    found with the factorisation ``A' = R R^T``.  The constant ``c0`` is not
    identifiable from this likelihood and is carried over from ``init``.
    """
    D = build_design_matrix(rec.inputs, grid)
    if not ic_diagnostics(D).is_ic:
        raise NotIC(f"design is not informationally complete (cond = {D.cond:.3e})")
    V14 = D.V[:, :14]
    nu = rec.nu.ravel()
    mu = nu.sum()
    c0 = 0.0
    if init is None:
        try:
            li = li_estimate(rec, D, grid)
            x, c0 = li.x, li.c0
        except NotIC:  # too few occupied bins; start from the idle channel
            x = vector_from_params(QFunctionParams(a1=1.0, a2=1.0, g1=-1.0))
    else:
        x = np.asarray(init, dtype=float)
        if x.shape == (15,):
            c0 = C0_SIGN * x[14]
            x = x[:14]
    boundary = False
    if not _is_cp(x, c0):
        try:
            x = vector_from_params(project_physical(params_from_vector(x, c0)))
        except AllNegativeSpectrum:
            boundary = True  # the cone ascent clips the spectrum itself

    f = nontp_loglik(x, V14, nu)
    it = 0
    g = nontp_gradient(x, V14, nu)
    while not boundary and np.max(np.abs(g)) >= tol * mu:
        if it >= max_iter:
            raise NoConvergence("non-TP ML hit the iteration cap", best=x)
        it += 1
        H = _nontp_hessian(x, V14, nu)
        try:
            d = np.linalg.solve(-H, g)
        except np.linalg.LinAlgError:
            d = g / max(np.max(np.abs(np.diag(H))), 1.0)
        xt = x + d
        if not _is_cp(xt, c0):
            boundary = True
            break
        ft = nontp_loglik(xt, V14, nu)
        step = 1.0
        while ft < f - 1e-12 * abs(f) and step > 1e-12:
            step *= 0.5
            xt = x + step * d
            ft = nontp_loglik(xt, V14, nu)
        x, f = xt, ft
        g = nontp_gradient(x, V14, nu)
    if boundary:
        x, nit = _cone_ascent(x, c0, V14, nu, 1e-12)
        it += nit
    try:
        x = vector_from_params(project_physical(params_from_vector(x, c0)))
    except AllNegativeSpectrum:
        pass
    g = nontp_gradient(x, V14, nu)
    return EstimateReport(
        x=x, method="ML", c0=c0, iterations=it,
        grad_norm=float(np.max(np.abs(g))), converged=True,
        cp_ok=_is_cp(x, c0), at_boundary=boundary, loglik=nontp_loglik(x, V14, nu),
    )


# ---------------------------------------------------------------- TP ML


def _log_ptilde(t, inputs, grid):
    p = tp_complete(t)
    lq = np.array([output_log_q(p, a, grid.bin_centers) for a in inputs])
    return lq - logsumexp(lq, axis=1, keepdims=True)


def tp_loglik(t, rec: MeasurementRecord, grid: PhaseSpaceGrid) -> float:
    """Grid-conditioned multinomial log-likelihood ``sum n_jk log p~_jk``."""
    lp = _log_ptilde(np.asarray(t, float), rec.inputs, grid)
    n = np.asarray(rec.counts, float)
    return float(np.sum(n * lp, where=n > 0))


def _tp_score(t, rec, grid):
    lp = _log_ptilde(t, rec.inputs, grid)
    pt = np.exp(lp)
    R = vtp_rows(t, rec.inputs, grid).reshape(rec.J, grid.K, 9)
    gbar = np.einsum("jk,jkg->jg", pt, R)
    Rc = R - gbar[:, None, :]
    n = np.asarray(rec.counts, float)
    grad = np.einsum("jk,jkg->g", n, Rc)
    Nj = n.sum(axis=1)
    fisher = np.einsum("j,jk,jkg,jkh->gh", Nj, pt, Rc, Rc)
    f = float(np.sum(n * lp, where=n > 0))
    return f, grad, fisher


def tp_gradient(t, rec: MeasurementRecord, grid: PhaseSpaceGrid) -> np.ndarray:
    return _tp_score(np.asarray(t, float), rec, grid)[1]


def _admissible(t) -> bool:
    return t[0] > 0 and tp_discriminant(t) > TP_MARGIN * t[0] ** 2


def moment_init(rec: MeasurementRecord, grid: PhaseSpaceGrid) -> np.ndarray:
    """TP starting point from per-input sample means and a pooled covariance."""
    n = np.asarray(rec.counts, float)
    w = grid.bin_centers
    s = np.stack([w.real, w.imag], axis=-1)
    Nj = n.sum(axis=1)
    means = (n @ s) / Nj[:, None]
    cov = np.zeros((2, 2))
    for j in range(rec.J):
        ds = s - means[j]
        cov += (ds.T * n[j]) @ ds
    cov /= Nj.sum()
    cov -= grid.spacing**2 / 12.0 * np.eye(2)  # binning correction
    ev, evec = np.linalg.eigh(0.5 * (cov + cov.T))
    cov = (evec * np.maximum(ev, 0.05)) @ evec.T
    F = np.diag([1.0, -1.0])
    L = np.linalg.inv(cov)
    A22 = F @ L @ F / 4.0
    r1 = np.sqrt(2.0) * np.stack([rec.inputs.real, rec.inputs.imag], axis=-1)
    h = means @ L.T
    X = np.hstack([np.ones((rec.J, 1)), r1])
    coef, *_ = np.linalg.lstsq(X, h, rcond=None)
    c, S = coef[0], coef[1:].T
    B2 = F @ c / np.sqrt(2.0)
    A12 = -S.T @ F / (2.0 * np.sqrt(2.0))
    Ap = np.zeros((4, 4))
    Ap[:2, :2] = A12 @ np.linalg.solve(A22, A12.T)
    Ap[:2, 2:] = A12
    Ap[2:, :2] = A12.T
    Ap[2:, 2:] = A22
    Bp = np.concatenate([np.zeros(2), B2])
    t = tp_vector(params_from_real(Ap, Bp, 0.0))
    if not _admissible(t):
        t = np.array([1.0, 0, 0, 0, 0, -1.0, 0, 0, 0])
    return t


def _tp_ascent(t, rec, grid, max_iter, tol):
    f, g, Fi = _tp_score(t, rec, grid)
    scale = max(float(np.sum(rec.counts)), 1.0)
    it = 0
    stalled = False
    while np.max(np.abs(g)) >= tol * scale:
        if it >= max_iter:
            raise NoConvergence("TP ML hit the iteration cap", best=t)
        it += 1
        try:
            d = np.linalg.solve(Fi + 1e-12 * np.trace(Fi) * np.eye(9), g)
        except np.linalg.LinAlgError:
            d = g / max(np.trace(Fi), 1.0)
        step = 1.0
        accepted = False
        for _ in range(60):
            tt = t + step * d
            if _admissible(tt):
                ft = tp_loglik(tt, rec, grid)
                if ft >= f - 1e-13 * abs(f):
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            stalled = True
            break
        small = step * np.max(np.abs(d)) < 1e-14 * max(1.0, np.max(np.abs(t)))
        t = tt
        f, g, Fi = _tp_score(t, rec, grid)
        if small:
            stalled = True
            break
    return t, f, g, it, stalled


def ml_estimate_tp(rec: MeasurementRecord, grid: PhaseSpaceGrid, init=None,
                   n_starts: int = 4, seed: int = 0, max_iter: int = 500,
                   tol: float = 1e-10) -> EstimateReport:
    """Fisher-scoring ascent on the TP likelihood with optional multi-start.

    Extra starts are random perturbations of the first start; the best final
    likelihood wins.  A result whose discriminant is within ``1e-6`` of zero
    is flagged ``at_boundary``.
    """
    if rec.J < 3:
        raise NotIC("TP parameters are not identifiable with fewer than 3 input states")
    t0 = moment_init(rec, grid) if init is None else np.asarray(init, dtype=float)
    if not _admissible(t0):
        raise ValueError("initial TP vector violates a2^2 - 4|c2|^2 > 0")
    starts = [t0]
    rng = task_rng(seed, 9)
    while len(starts) < max(1, n_starts):
        pert = t0 + 0.1 * (np.abs(t0) + 0.1) * rng.standard_normal(9)
        if _admissible(pert):
            starts.append(pert)
    best = None
    failures = 0
    for s in starts:
        try:
            res = _tp_ascent(s, rec, grid, max_iter, tol)
        except NoConvergence:
            failures += 1
            continue
        if best is None or res[1] > best[1]:
            best = res
    if best is None:
        raise NoConvergence("no TP ML start converged")
    t, f, g, it, stalled = best
    disc = tp_discriminant(t)
    return EstimateReport(
        x=t, method="ML-TP", c0=tp_complete(t).c0, iterations=it,
        grad_norm=float(np.max(np.abs(g))), converged=not stalled or np.max(np.abs(g)) < 1e-6 * np.sum(rec.counts),
        cp_ok=positivity_status(tp_complete(t), "CP").passed, tp_discriminant=float(disc),
        at_boundary=disc < 1e-6, loglik=f, extra={"starts": len(starts), "failed_starts": failures},
    )
