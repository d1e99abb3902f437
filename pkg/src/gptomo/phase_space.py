"""Output phase space: grids, binned outcome probabilities, Gaussian moments.

All output-plane quantities are expressed in the heterodyne outcome ``w``
with coordinates ``(w_r, w_i)``; quadratures are ``x = sqrt(2) w_r`` and
``p = sqrt(2) w_i`` so that vacuum has covariance ``1/2`` per coordinate.
The process Q function is evaluated at ``z = conj(w)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core_model import QFunctionParams, log_q_value, real_representation
from .errors import Divergent, EmptyGrid, NonNormalizable

_F = np.diag([1.0, -1.0])


@dataclass(frozen=True)
class PhaseSpaceGrid:
    M: int
    extent: float
    center: complex = 0j

    def __post_init__(self):
        if int(self.M) < 2:
            raise ValueError("grid needs M >= 2")
        if not self.extent > 0:
            raise ValueError("grid extent must be positive")

    @property
    def K(self) -> int:
        return self.M * self.M

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / self.M

    @property
    def bin_area(self) -> float:
        return self.spacing**2

    @property
    def axis(self) -> np.ndarray:
        return -self.extent + (np.arange(self.M) + 0.5) * self.spacing

    @property
    def bin_centers(self) -> np.ndarray:
        """Complex centers, ``k = m * M + n`` with ``m`` along the real axis."""
        ax = self.axis
        re, im = np.meshgrid(ax, ax, indexing="ij")
        return (re + 1j * im).ravel() + self.center

    def bin_index(self, w: np.ndarray) -> np.ndarray:
        """Flat bin index of outcomes ``w``; -1 for points off the grid."""
        w = np.asarray(w) - self.center
        m = np.floor((w.real + self.extent) / self.spacing).astype(np.int64)
        n = np.floor((w.imag + self.extent) / self.spacing).astype(np.int64)
        inside = (m >= 0) & (m < self.M) & (n >= 0) & (n < self.M)
        return np.where(inside, m * self.M + n, -1)

    def to_dict(self) -> dict:
        d = {"M": int(self.M), "extent": float(self.extent)}
        if self.center != 0:
            d["center"] = [float(np.real(self.center)), float(np.imag(self.center))]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PhaseSpaceGrid":
        c = d.get("center", 0)
        if isinstance(c, (list, tuple)):
            c = complex(c[0], c[1])
        return cls(int(d["M"]), float(d["extent"]), complex(c))


def make_grid(M: int = 20, extent: float = 5.0, center: complex = 0j) -> PhaseSpaceGrid:
    return PhaseSpaceGrid(int(M), float(extent), complex(center))


class GaussianMoments(NamedTuple):
    mean: np.ndarray
    cov: np.ndarray
    amplitude: float


class BinProbabilities(NamedTuple):
    p: np.ndarray
    p_tilde: np.ndarray
    gamma: float


def _output_quadratic(p: QFunctionParams, alpha: complex):
    """Precision ``L``, linear term ``h`` and constant ``c`` of log Q_out(w).

    ``log Q_out = -s^T L s / 2 + h^T s + c`` with ``s = (w_r, w_i)``.
    """
    Ap, Bp = real_representation(p)
    alpha = complex(alpha)
    r1 = np.sqrt(2.0) * np.array([alpha.real, alpha.imag])
    A11, A12, A22 = Ap[:2, :2], Ap[:2, 2:], Ap[2:, 2:]
    L = 4.0 * _F @ A22 @ _F
    h = np.sqrt(2.0) * _F @ (Bp[2:] - 2.0 * A12.T @ r1)
    c = -r1 @ A11 @ r1 + Bp[:2] @ r1 + p.c0
    return L, h, c


def output_gaussian_moments(p: QFunctionParams, alpha: complex) -> GaussianMoments:
    """Mean, covariance and plane integral ``int Q_out d^2w / pi`` for input ``alpha``."""
    L, h, c = _output_quadratic(p, alpha)
    L = 0.5 * (L + L.T)
    ev = np.linalg.eigvalsh(L)
    if ev[0] <= 0:
        raise NonNormalizable(f"output precision not positive definite (min eig {ev[0]:.3e})")
    cov = np.linalg.inv(L)
    mean = cov @ h
    amplitude = 2.0 * np.exp(c + 0.5 * h @ mean) / np.sqrt(np.linalg.det(L))
    return GaussianMoments(mean, cov, float(amplitude))


def output_log_q(p: QFunctionParams, alpha, w) -> np.ndarray:
    """``log Q_out(w)`` for input ``alpha`` (outcome convention)."""
    return log_q_value(p, alpha, np.conj(np.asarray(w, dtype=complex)))


def bin_probabilities(p: QFunctionParams, alpha: complex, grid: PhaseSpaceGrid) -> BinProbabilities:
    """Midpoint-rule bin masses ``Q_out(w_k) * area / pi`` and their normalisation."""
    output_gaussian_moments(p, alpha)  # raises NonNormalizable
    logq = output_log_q(p, alpha, grid.bin_centers)
    mass = np.exp(logq) * grid.bin_area / np.pi
    gamma = float(mass.sum())
    if not gamma >= 1e-300:
        raise EmptyGrid(f"grid carries no mass (gamma = {gamma:.3e})")
    return BinProbabilities(mass, mass / gamma, gamma)


def probability_table(p: QFunctionParams, inputs, grid: PhaseSpaceGrid):
    """Stack of per-input ``(p, p_tilde, gamma)`` for a whole design."""
    rows = [bin_probabilities(p, a, grid) for a in np.atleast_1d(inputs)]
    return (
        np.array([r.p for r in rows]),
        np.array([r.p_tilde for r in rows]),
        np.array([r.gamma for r in rows]),
    )


def adaptive_grid(p: QFunctionParams, inputs, M: int = 20, n_sigma: float = 6.0) -> PhaseSpaceGrid:
    """Square grid centred on the output means, reaching ``n_sigma`` std devs past all of them."""
    moms = [output_gaussian_moments(p, a) for a in np.atleast_1d(inputs)]
    means = np.array([m.mean for m in moms])
    sig = max(np.sqrt(np.linalg.eigvalsh(m.cov)[-1]) for m in moms)
    lo = means.min(axis=0) - n_sigma * sig
    hi = means.max(axis=0) + n_sigma * sig
    ctr = 0.5 * (lo + hi)
    half = 0.5 * float(np.max(hi - lo))
    return make_grid(M, half, complex(ctr[0], ctr[1]))


def write_bin_csv(path, grid: PhaseSpaceGrid, probs: BinProbabilities) -> None:
    centers = grid.bin_centers
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "z_r", "z_i", "p", "p_tilde"])
        for k, (zc, pk, pt) in enumerate(zip(centers, probs.p, probs.p_tilde)):
            wr.writerow([k, repr(zc.real), repr(zc.imag), repr(float(pk)), repr(float(pt))])


def _integral_converges(M: np.ndarray) -> bool:
    H = 0.5 * (M + M.conj().T)
    K = (np.array([[1, 1j], [1, -1j]]) / np.sqrt(2)).conj().T @ H @ (
        np.array([[1, 1j], [1, -1j]]) / np.sqrt(2)
    )
    return bool(np.linalg.eigvalsh(K.real)[0] > 0)


def gaussian_integral(M, v) -> complex:
    """Closed form of ``int d^2b / pi exp(-bb^H M bb + v^T bb)``, ``bb = (b, b*)``.

    Equals ``exp(v^T M^-1 sigma_x v / 4) / (2 sqrt(det M))``.
    """
    M = np.asarray(M, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if not _integral_converges(M):
        raise Divergent("real part of the quadratic form is not positive definite")
    det = np.linalg.det(M)
    sx = np.array([[0, 1], [1, 0]])
    expo = v @ np.linalg.solve(M, sx @ v) / 4.0
    return complex(np.exp(expo) / (2.0 * np.sqrt(det)))
