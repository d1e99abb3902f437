"""Design matrix ``V`` (rows ``v(alpha_j, z_k)``) and its Gram diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .core_model import printed_row_v
from .phase_space import PhaseSpaceGrid

IC_COND_THRESHOLD = 1e10


def design_rows(inputs, grid: PhaseSpaceGrid) -> np.ndarray:
    """Rows for every (input, bin) pair, shape ``(J, K, 15)``.

    Bin centres are heterodyne outcomes, so the row in the Q-function
    variable ``z = conj(w)`` is the reference layout evaluated at ``w``.
    """
    a = np.atleast_1d(np.asarray(inputs, dtype=complex))[:, None]
    w = grid.bin_centers[None, :]
    return printed_row_v(a, w)


@dataclass
class DesignMatrix:
    V: np.ndarray
    J: int
    K: int
    G: np.ndarray = field(init=False)
    cond: float = field(init=False)

    def __post_init__(self):
        self.G = self.V.T @ self.V
        s = np.linalg.svd(self.V, compute_uv=False)
        short = len(s) < self.V.shape[1]
        self.cond = float(np.inf if short or s[-1] == 0 else (s[0] / s[-1]) ** 2)

    def pseudoinverse(self) -> np.ndarray:
        """Left pseudoinverse ``(V^T V)^-1 V^T`` (15 x JK)."""
        return np.linalg.pinv(self.V)


def build_design_matrix(inputs, grid: PhaseSpaceGrid) -> DesignMatrix:
    inputs = np.atleast_1d(np.asarray(inputs, dtype=complex))
    if inputs.size < 1:
        raise ValueError("need at least one input state")
    rows = design_rows(inputs, grid)
    return DesignMatrix(rows.reshape(-1, 15), len(inputs), grid.K)


class ICReport(NamedTuple):
    is_ic: bool
    cond: float
    null_vector: Optional[np.ndarray]
    null_space: Optional[np.ndarray]


def ic_diagnostics(D: DesignMatrix, threshold: float = IC_COND_THRESHOLD) -> ICReport:
    """IC iff ``cond(G) < threshold``; otherwise also return the (approximate) null space."""
    V = D.V
    if V.shape[0] < V.shape[1]:  # pad with zero rows so every right singular vector appears
        V = np.vstack([V, np.zeros((V.shape[1] - V.shape[0], V.shape[1]))])
    _, s, vt = np.linalg.svd(V, full_matrices=False)
    if D.cond < threshold:
        return ICReport(True, D.cond, None, None)
    smax = s[0]
    # singular values of V are sqrt of Gram eigenvalues
    small = s**2 <= smax**2 / threshold
    basis = vt[small]
    return ICReport(False, D.cond, vt[-1], basis)
