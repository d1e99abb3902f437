"""Physical Gaussian channels and the benchmark process groups.

A channel acts on a quadrature column vector ``r`` as ``r -> X^T r + d`` and
on covariances as ``S -> X^T S X + Y``; ``d = (x0, p0)``.  With the vacuum
convention ``S = 1/2`` the heterodyne outcome ``w = (x + i p) / sqrt(2)`` of
input ``alpha`` is Gaussian with

    mean = X^T (Re alpha, Im alpha) + d / sqrt(2),
    cov  = (X^T X / 2 + Y + 1/2) / 2,

which fixes the process Q function completely.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .core_model import U, QFunctionParams, check_tp, params_from_real, positivity_status
from .errors import NotCP
from .simulator import task_rng

OMEGA = np.array([[0.0, 1.0], [-1.0, 0.0]])
_F = np.diag([1.0, -1.0])

RANGES = {
    "phi": (0.0, 2 * np.pi),
    "r": (0.0, 1.0 / 3.0),
    "theta": (0.0, np.pi / 2),
    "x0": (-2.0, 2.0),
    "p0": (-2.0, 2.0),
    "chi": (0.1, 1.5),
    "n_T": (0.0, 1.0),
    "a_T": (-1.0, 1.0),
    "theta_T": (0.0, np.pi / 2),
}


@dataclass(frozen=True)
class PhysicalChannelSpec:
    phi: float = 0.0
    r: float = 0.0
    theta: float = 0.0
    x0: float = 0.0
    p0: float = 0.0
    chi: float = 1.0
    n_T: float = 0.0
    a_T: float = 0.0
    theta_T: float = 0.0

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "PhysicalChannelSpec":
        return cls(**{k: float(v) for k, v in d.items()})


class ChannelMaps(NamedTuple):
    X: np.ndarray
    Y: np.ndarray


def rotation(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, s], [-s, c]])


def squeezing(r: float, theta: float) -> np.ndarray:
    R = rotation(theta)
    return R.T @ np.diag([np.exp(r), np.exp(-r)]) @ R


def xy_matrices(spec: PhysicalChannelSpec) -> ChannelMaps:
    """Transfer matrix ``X`` and added noise ``Y``.

    The gain term of ``Y`` is ``|1 - chi^2| / 2``, the smallest isotropic
    noise that keeps a gain-``chi`` channel physical.
    """
    X = spec.chi * squeezing(spec.r, spec.theta) @ rotation(spec.phi)
    RT = rotation(spec.theta_T)
    Y = 0.5 * abs(1.0 - spec.chi**2) * np.eye(2) + 0.5 * spec.n_T * RT.T @ np.diag(
        [1.0 + spec.a_T, 1.0 - spec.a_T]
    ) @ RT
    return ChannelMaps(X, Y)


def symplectic_check(maps: ChannelMaps, sigma_in=None) -> float:
    """Smallest eigenvalue of ``X^T S X + Y + i Omega / 2`` (physical iff >= -1e-10)."""
    S = 0.5 * np.eye(2) if sigma_in is None else np.asarray(sigma_in, dtype=float)
    out = maps.X.T @ S @ maps.X + maps.Y
    return float(np.linalg.eigvalsh(out + 0.5j * OMEGA)[0])


def channel_admissibility(maps: ChannelMaps) -> float:
    """Smallest eigenvalue of ``Y + i (Omega - X^T Omega X) / 2``.

    Non-negative iff the channel maps every valid state to a valid state.
    """
    M = maps.Y + 0.5j * (OMEGA - maps.X.T @ OMEGA @ maps.X)
    return float(np.linalg.eigvalsh(M)[0])


def sigma_t(t: float) -> np.ndarray:
    """Covariance of a two-mode squeezed vacuum of strength ``t / 2``."""
    c, s = np.cosh(t), np.sinh(t)
    return 0.5 * np.array(
        [[c, 0, s, 0], [0, c, 0, -s], [s, 0, c, 0], [0, -s, 0, c]]
    )


def process_matrix_at(spec: PhysicalChannelSpec, t: float) -> np.ndarray:
    """Finite-squeezing quadratic form ``A(t)`` of the channel's Choi state.

    The two-mode squeezed covariance is written in conjugate variables for
    both modes; flipping both momenta (``G = F + F``) maps it onto the
    ``(alpha, z)`` convention, where ``A(t)`` tends to the exact process
    matrix as ``t`` grows (error ~ ``exp(-t)``).
    """
    X, Y = xy_matrices(spec)
    T = np.eye(4)
    T[2:, 2:] = X
    bracket = T.T @ sigma_t(t) @ T + 0.5 * np.eye(4)
    bracket[2:, 2:] += Y
    G = np.kron(np.eye(2), _F)
    Ap = 0.5 * G @ np.linalg.inv(bracket) @ G
    return U @ Ap @ U.conj().T


def process_from_physical(spec: PhysicalChannelSpec) -> QFunctionParams:
    """Exact (infinite-squeezing) process Q function of a physical channel."""
    X, Y = xy_matrices(spec)
    d = np.array([spec.x0, spec.p0]) / np.sqrt(2.0)
    C = 0.5 * (0.5 * X.T @ X + Y + 0.5 * np.eye(2))
    P = np.linalg.inv(C)
    # log Q_out(s | a) = -(s - X^T a - d)^T P (s - X^T a - d) / 2 - log(2 sqrt(det C)),
    # rewritten in x = sqrt(2) (a, F s).
    Ap = np.zeros((4, 4))
    Ap[:2, :2] = 0.25 * X @ P @ X.T
    Ap[2:, 2:] = 0.25 * _F @ P @ _F
    Ap[:2, 2:] = -0.25 * X @ P @ _F
    Ap[2:, :2] = Ap[:2, 2:].T
    Bp = np.concatenate([-X @ P @ d, _F @ P @ d]) / np.sqrt(2.0)
    c0 = -0.5 * d @ P @ d - np.log(2.0 * np.sqrt(np.linalg.det(C)))
    p = params_from_real(Ap, Bp, float(c0))
    if not positivity_status(p, "CP").passed:
        raise NotCP("generated process failed the positivity check")
    return p


def idle_deformed(omega: float) -> QFunctionParams:
    """Idle channel seen through a finite two-mode squeezed probe."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    return QFunctionParams(a1=1.0, a2=1.0, g1=complex(-np.tanh(omega)))


# (name, fixed values, wildcard keys)
GROUPS = {
    1: [("idle", {}, ())],
    2: [
        ("phase", {}, ("phi",)),
        ("squeezer", {}, ("r", "theta")),
        ("displacer", {}, ("x0", "p0")),
        ("gain", {}, ("chi",)),
        ("symmetric noise", {"a_T": 0.0}, ("n_T",)),
        ("asymmetric noise", {}, ("n_T", "a_T", "theta_T")),
    ],
    3: [("all random", {}, tuple(RANGES))] * 10,
}


def group_size(group: int) -> int:
    if group not in GROUPS:
        raise ValueError(f"unknown group {group}")
    return len(GROUPS[group])


def sample_group(group: int, index: int, seed: int, x0p0_range=None):
    """Draw the ``index``-th (1-based) process of a benchmark group.

    Returns ``(spec, params)``; wildcards are uniform over their ranges.
    """
    rows = GROUPS.get(group)
    if rows is None:
        raise ValueError(f"unknown group {group}")
    if not 1 <= index <= len(rows):
        raise ValueError(f"group {group} has indices 1..{len(rows)}")
    _, fixed, wild = rows[index - 1]
    ranges = dict(RANGES)
    if x0p0_range is not None:
        lo, hi = map(float, x0p0_range)
        ranges["x0"] = ranges["p0"] = (lo, hi)
    rng = task_rng(seed, group, index)
    vals = dict(fixed)
    for key in RANGES:  # fixed draw order keeps streams stable
        if key in wild:
            lo, hi = ranges[key]
            vals[key] = float(rng.uniform(lo, hi))
    spec = PhysicalChannelSpec(**vals)
    return spec, process_from_physical(spec)


def is_physical(p: QFunctionParams, tol: float = 1e-8) -> bool:
    return check_tp(p).max_residual < tol and positivity_status(p, "CP").passed
