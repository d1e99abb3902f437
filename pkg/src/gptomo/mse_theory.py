"""Asymptotic mean squared error of the LI and TP-constrained ML estimators.

Both formulas have the shape ``(1/N) Tr{P^T P Y}`` where ``P`` is the left
pseudoinverse of a row matrix (the 15-column ``V`` for LI, the 9-column
``V_TP`` for TP) and ``Y`` is block diagonal over inputs with blocks

    Y_j[k, k'] = s_k s_k' (delta_kk' / p_k - 1),   s_k = 1 - (1 - p_k)^N.

The trace is assembled block by block; ``Y`` is never formed.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ._design import build_design_matrix, ic_diagnostics
from .core_model import QFunctionParams, _a3_inverse, _blocks, tp_complete
from .errors import NotIC
from .phase_space import PhaseSpaceGrid, probability_table

# vec(dA3) = E1 (da2, dc2r, dc2i), vec(dA2) = E2 (dg1r, dg1i, dg2r, dg2i),
# db2 = E3 (db2r, db2i); vec stacks columns.
E1 = np.array([[0.5, 0, 0], [0, -1, -1j], [0, -1, 1j], [0.5, 0, 0]])
E2 = 0.5 * np.array([[0, 0, 1, 1j], [1, 1j, 0, 0], [1, -1j, 0, 0], [0, 0, 1, -1j]])
E3 = np.array([[1, 1j], [1, -1j]])


def _unvec(E: np.ndarray) -> np.ndarray:
    # column g of E -> 2x2 matrix, column-major
    return np.stack([E[:, g].reshape(2, 2).T for g in range(E.shape[1])])


_D1 = _unvec(E1)
_D2 = _unvec(E2)

# Block order (A3, b2, A2) -> (a2, b2r, b2i, c2r, c2i, g1r, g1i, g2r, g2i)
_TP_ORDER = [0, 3, 4, 1, 2, 5, 6, 7, 8]


class MSEResult(NamedTuple):
    total: float
    per_parameter: np.ndarray

    @property
    def normalized(self) -> float:
        return self.total / len(self.per_parameter)


def survival(p_tilde, N: int) -> np.ndarray:
    """Probability ``1 - (1 - p)^N`` that a bin is hit at least once."""
    p_tilde = np.asarray(p_tilde, dtype=float)
    with np.errstate(divide="ignore"):
        return -np.expm1(N * np.log1p(-np.clip(p_tilde, 0.0, 1.0)))


def y_block(p_tilde, N: int) -> np.ndarray:
    """K x K block of ``Y`` for one input."""
    p_tilde = np.asarray(p_tilde, dtype=float)
    s = survival(p_tilde, N)
    diag = np.zeros_like(p_tilde)
    pos = p_tilde > 0
    diag[pos] = s[pos] ** 2 / p_tilde[pos]
    return np.diag(diag) - np.outer(s, s)


def _trace_against_y(P: np.ndarray, p_tilde: np.ndarray, N: int) -> np.ndarray:
    """Diagonal of ``P Y P^T / N``; ``P`` is (n_par, J*K), ``p_tilde`` is (J, K)."""
    J, K = p_tilde.shape
    out = np.zeros(P.shape[0])
    for j in range(J):
        Pj = P[:, j * K:(j + 1) * K]
        pj = p_tilde[j]
        s = survival(pj, N)
        d = np.zeros(K)
        pos = pj > 0
        d[pos] = s[pos] ** 2 / pj[pos]
        Ps = Pj @ s
        out += (Pj**2) @ d - Ps**2
    return out / N


def mse_formula_nontp(p: QFunctionParams, inputs, grid: PhaseSpaceGrid, N: int) -> MSEResult:
    """Asymptotic LI error over the 14 estimable parameters."""
    D = build_design_matrix(inputs, grid)
    if not ic_diagnostics(D).is_ic:
        raise NotIC(f"design is not informationally complete (cond = {D.cond:.3e})")
    P = D.pseudoinverse()[:14]
    _, pt, _ = probability_table(p, inputs, grid)
    per = _trace_against_y(P, pt, N)
    return MSEResult(float(per.sum()), per)


def vtp_rows(t, inputs, grid: PhaseSpaceGrid) -> np.ndarray:
    """``JK x 9`` matrix of gradients ``d log Q_out(w_k | alpha_j) / dt``.

    Columns follow the ``(a2, b2r, b2i, c2r, c2i, g1r, g1i, g2r, g2i)`` order.
    """
    p = tp_complete(np.asarray(t, dtype=float))
    _, A2, A3 = _blocks(p)
    P = _a3_inverse(A3)
    Q = P @ A2.conj().T
    b2 = np.array([p.b2, np.conj(p.b2)])
    beta = P @ b2

    a = np.atleast_1d(np.asarray(inputs, dtype=complex))
    z = np.conj(grid.bin_centers)
    al = np.stack([a, a.conj()], axis=-1)  # (J, 2)
    zb = np.stack([z, z.conj()], axis=-1)  # (K, 2)
    qa = al @ Q.T  # (J, 2): A3^-1 A2^H alpha

    # M1 = -zz^H + (qa)(qa)^H + P/2 - beta qa^H + beta beta^H / 4
    m1_j = (
        np.einsum("jc,jd->jcd", qa, qa.conj())
        + 0.5 * P
        - np.einsum("c,jd->jcd", beta, qa.conj())
        + 0.25 * np.outer(beta, beta.conj())
    )
    m1_k = -np.einsum("kc,kd->kcd", zb, zb.conj())
    # Re Tr{M1^H D} = Re sum conj(M1) * D
    g1_j = np.einsum("jcd,gcd->jg", m1_j.conj(), _D1).real
    g1_k = np.einsum("kcd,gcd->kg", m1_k.conj(), _D1).real
    blk1 = g1_j[:, None, :] + g1_k[None, :, :]

    # A2 variation: 2 Re alpha^H dA2 u, u = -qa - z + beta/2
    u = -qa[:, None, :] - zb[None, :, :] + 0.5 * beta  # (J, K, 2)
    blk2 = 2.0 * np.einsum("jc,gcd,jkd->jkg", al.conj(), _D2, u).real

    # M3 = z + A3^-1 A2^H alpha - beta/2;  Re M3^H E3
    m3 = zb[None, :, :] + qa[:, None, :] - 0.5 * beta
    blk3 = np.einsum("jkc,cg->jkg", m3.conj(), E3).real

    rows = np.concatenate([blk1, blk3, blk2], axis=-1)[..., _TP_ORDER]
    return rows.reshape(-1, 9)


def mse_formula_tp(t, inputs, grid: PhaseSpaceGrid, N: int, cond_threshold: float = 1e10) -> MSEResult:
    """Asymptotic TP-constrained ML error over the 9 free parameters."""
    inputs = np.atleast_1d(np.asarray(inputs, dtype=complex))
    if len(inputs) < 3:
        raise NotIC("TP model needs at least 3 input states")
    Vt = vtp_rows(t, inputs, grid)
    s = np.linalg.svd(Vt, compute_uv=False)
    if len(s) < 9 or s[-1] == 0 or (s[0] / s[-1]) ** 2 > cond_threshold:
        raise NotIC("TP design rows are rank deficient")
    P = np.linalg.pinv(Vt)
    p = tp_complete(np.asarray(t, dtype=float))
    _, pt, _ = probability_table(p, inputs, grid)
    per = _trace_against_y(P, pt, N)
    return MSEResult(float(per.sum()), per)
