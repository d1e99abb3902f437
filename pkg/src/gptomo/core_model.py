"""Quadratic-exponent description of a single-mode Gaussian process.

The process Q function is

    Q(alpha, z) = exp(-Z^H A Z + B^H Z + c0),   Z = (alpha, alpha*, z, z*)

with the 4x4 Hermitian ``A`` assembled from (a1, a2, c1, c2, g1, g2) and the
column ``B`` from (b1, b2).  ``alpha`` labels the input coherent state and ``z``
the output variable of the Choi state.  Because of the transpose in the Choi
map, a heterodyne outcome ``w`` enters this function as ``z = conj(w)``; the
phase-space module takes care of that.

Linear parametrisation
----------------------
``log Q = -v(alpha, z) . x'`` is linear in a 15-vector ``x'``.  The reference
row layout ``printed_row_v`` is written in the heterodyne outcome variable.  Two
fixed conventions reconcile it with the matrix form:

* the row is evaluated at the outcome ``w = conj(z)``;
* the stored parameter vector carries the sign pattern ``PARAM_SIGNS`` (and
  ``C0_SIGN`` on the constant), i.e. ``x'[i] = PARAM_SIGNS[i] * natural[i]``.

Sign flips are orthogonal, so squared errors, MSE values and Gram-matrix
objectives are unaffected by this choice.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import AllNegativeSpectrum, SingularA3

U0 = np.array([[1.0, 1.0j], [1.0, -1.0j]]) / np.sqrt(2.0)
U = np.kron(np.eye(2), U0)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])

PARAM_NAMES = (
    "a1", "a2", "b1r", "b1i", "b2r", "b2i", "c1r", "c1i",
    "c2r", "c2i", "g1r", "g1i", "g2r", "g2i",
)
TP_PARAM_NAMES = ("a2", "b2r", "b2i", "c2r", "c2i", "g1r", "g1i", "g2r", "g2i")

# x'[i] = PARAM_SIGNS[i] * (natural parameter i); see module docstring.
PARAM_SIGNS = np.array(
    [1, 1, -1, -1, -1, -1, -1, 1, -1, 1, 1, -1, 1, -1], dtype=float
)
C0_SIGN = -1.0

TP_TOL = 1e-10
POSITIVITY_TOL = 1e-10


@dataclass(frozen=True)
class QFunctionParams:
    a1: float = 0.0
    a2: float = 0.0
    c1: complex = 0j
    c2: complex = 0j
    g1: complex = 0j
    g2: complex = 0j
    b1: complex = 0j
    b2: complex = 0j
    c0: float = 0.0

    def to_dict(self) -> dict:
        def cpx(v):
            v = complex(v)
            return [v.real, v.imag]

        return {
            "a1": float(self.a1),
            "a2": float(self.a2),
            "c1": cpx(self.c1),
            "c2": cpx(self.c2),
            "g1": cpx(self.g1),
            "g2": cpx(self.g2),
            "b1": cpx(self.b1),
            "b2": cpx(self.b2),
            "c0": float(self.c0),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QFunctionParams":
        def cpx(v):
            if isinstance(v, (list, tuple)):
                return complex(v[0], v[1])
            return complex(v)

        return cls(
            a1=float(d["a1"]),
            a2=float(d["a2"]),
            c1=cpx(d["c1"]),
            c2=cpx(d["c2"]),
            g1=cpx(d["g1"]),
            g2=cpx(d["g2"]),
            b1=cpx(d["b1"]),
            b2=cpx(d["b2"]),
            c0=float(d["c0"]),
        )


class TPResiduals(NamedTuple):
    W: float
    y: float
    w0: float

    @property
    def max_residual(self) -> float:
        return max(self.W, self.y, abs(self.w0))

    @property
    def is_tp(self) -> bool:
        return self.max_residual < TP_TOL


class PositivityStatus(NamedTuple):
    mode: str
    value: float
    passed: bool


def _blocks(p: QFunctionParams):
    c1, c2, g1, g2 = (complex(v) for v in (p.c1, p.c2, p.g1, p.g2))
    A1 = np.array([[p.a1 / 2, -np.conj(c1)], [-c1, p.a1 / 2]], dtype=complex)
    A2 = 0.5 * np.array([[g2, np.conj(g1)], [g1, np.conj(g2)]], dtype=complex)
    A3 = np.array([[p.a2 / 2, -np.conj(c2)], [-c2, p.a2 / 2]], dtype=complex)
    return A1, A2, A3


def assemble_matrices(p: QFunctionParams) -> tuple[np.ndarray, np.ndarray]:
    """Return the 4x4 Hermitian ``A`` and the 4-column ``B``."""
    A1, A2, A3 = _blocks(p)
    A = np.block([[A1, A2], [A2.conj().T, A3]])
    b1, b2 = complex(p.b1), complex(p.b2)
    B = np.array([b1, np.conj(b1), b2, np.conj(b2)], dtype=complex)
    return A, B


def params_from_matrices(A: np.ndarray, B: np.ndarray, c0: float) -> QFunctionParams:
    """Read the parameters back out of (A, B); inverse of :func:`assemble_matrices`."""
    return QFunctionParams(
        a1=float(2 * A[0, 0].real),
        a2=float(2 * A[2, 2].real),
        c1=complex(-A[1, 0]),
        c2=complex(-A[3, 2]),
        g1=complex(2 * A[1, 2]),
        g2=complex(2 * A[0, 2]),
        b1=complex(B[0]),
        b2=complex(B[2]),
        c0=float(c0),
    )


def log_q_value(p: QFunctionParams, alpha, z):
    """Exponent ``-Z^H A Z + B^H Z + c0`` evaluated in matrix form.

    ``alpha`` and ``z`` broadcast against each other.
    """
    A, B = assemble_matrices(p)
    alpha = np.asarray(alpha, dtype=complex)
    z = np.asarray(z, dtype=complex)
    alpha, z = np.broadcast_arrays(alpha, z)
    Z = np.stack([alpha, alpha.conj(), z, z.conj()], axis=-1)
    quad = np.einsum("...i,ij,...j->...", Z.conj(), A, Z)
    lin = Z @ B.conj()
    out = (-quad + lin).real + p.c0
    return out if out.ndim else float(out)


def printed_row_v(alpha, w) -> np.ndarray:
    """Row ``v`` in the reference layout, as a function of the outcome ``w``.

    Entries are ``2 * (|a|^2/2, |w|^2/2, a_r, a_i, w_r, -w_i, (a^2)_r, (a^2)_i,
    (w^2)_r, -(w^2)_i, (a w*)_r, (a w*)_i, (a* w*)_r, (a* w*)_i, 1/2)``.
    """
    a = np.asarray(alpha, dtype=complex)
    w = np.asarray(w, dtype=complex)
    a, w = np.broadcast_arrays(a, w)
    a2 = a * a
    w2 = w * w
    aw = a * w.conj()
    acw = a.conj() * w.conj()
    cols = [
        np.abs(a) ** 2,
        np.abs(w) ** 2,
        2 * a.real,
        2 * a.imag,
        2 * w.real,
        -2 * w.imag,
        2 * a2.real,
        2 * a2.imag,
        2 * w2.real,
        -2 * w2.imag,
        2 * aw.real,
        2 * aw.imag,
        2 * acw.real,
        2 * acw.imag,
        np.ones(a.shape),
    ]
    return np.stack(cols, axis=-1)


def build_row_v(alpha, z) -> np.ndarray:
    """Row ``v`` with ``-v . x'(p) == log_q_value(p, alpha, z)`` for every ``p``."""
    return printed_row_v(alpha, np.conj(np.asarray(z, dtype=complex)))


def vector_from_params(p: QFunctionParams, with_c0: bool = False) -> np.ndarray:
    """Signed 14-vector ``x`` (or 15-vector ``x'`` when ``with_c0``)."""
    nat = np.array(
        [
            p.a1, p.a2,
            complex(p.b1).real, complex(p.b1).imag,
            complex(p.b2).real, complex(p.b2).imag,
            complex(p.c1).real, complex(p.c1).imag,
            complex(p.c2).real, complex(p.c2).imag,
            complex(p.g1).real, complex(p.g1).imag,
            complex(p.g2).real, complex(p.g2).imag,
        ],
        dtype=float,
    )
    x = PARAM_SIGNS * nat
    if with_c0:
        x = np.append(x, C0_SIGN * p.c0)
    return x


def params_from_vector(x, c0: float | None = None) -> QFunctionParams:
    """Inverse of :func:`vector_from_params`.

    A 15-vector carries its own constant; for a 14-vector ``c0`` defaults to 0.
    """
    x = np.asarray(x, dtype=float)
    if x.shape == (15,):
        if c0 is None:
            c0 = C0_SIGN * x[14]
        x = x[:14]
    elif x.shape != (14,):
        raise ValueError(f"expected 14 or 15 entries, got shape {x.shape}")
    n = PARAM_SIGNS * x
    return QFunctionParams(
        a1=float(n[0]),
        a2=float(n[1]),
        b1=complex(n[2], n[3]),
        b2=complex(n[4], n[5]),
        c1=complex(n[6], n[7]),
        c2=complex(n[8], n[9]),
        g1=complex(n[10], n[11]),
        g2=complex(n[12], n[13]),
        c0=0.0 if c0 is None else float(c0),
    )


def tp_vector(p: QFunctionParams) -> np.ndarray:
    """The 9 free TP parameters ``(a2, b2r, b2i, c2r, c2i, g1r, g1i, g2r, g2i)``."""
    b2, c2, g1, g2 = (complex(v) for v in (p.b2, p.c2, p.g1, p.g2))
    return np.array(
        [p.a2, b2.real, b2.imag, c2.real, c2.imag, g1.real, g1.imag, g2.real, g2.imag]
    )


def tp_discriminant(t) -> float:
    t = np.asarray(t, dtype=float)
    return float(t[0] ** 2 - 4 * (t[3] ** 2 + t[4] ** 2))


def _a3_inverse(A3: np.ndarray, tol: float = 0.0) -> np.ndarray:
    det = (A3[0, 0] * A3[1, 1] - A3[0, 1] * A3[1, 0]).real
    if det <= tol:
        raise SingularA3(f"A3 not positive-invertible (det = {det:.3e})")
    return np.array([[A3[1, 1], -A3[0, 1]], [-A3[1, 0], A3[0, 0]]]) / det


def tp_complete(t, tol: float = 1e-14) -> QFunctionParams:
    """Fill in (a1, c1, b1, c0) from the 9 free parameters so the process is TP."""
    t = np.asarray(t, dtype=float)
    if t.shape != (9,):
        raise ValueError("TP parameter vector must have 9 entries")
    disc = tp_discriminant(t)
    if disc <= tol:
        raise SingularA3(f"a2^2 - 4|c2|^2 = {disc:.3e} is not positive")
    p = QFunctionParams(
        a2=float(t[0]),
        b2=complex(t[1], t[2]),
        c2=complex(t[3], t[4]),
        g1=complex(t[5], t[6]),
        g2=complex(t[7], t[8]),
    )
    _, A2, A3 = _blocks(p)
    A3i = _a3_inverse(A3)
    K = A2 @ A3i
    A1 = K @ A2.conj().T
    b2v = np.array([p.b2, np.conj(p.b2)])
    b1v = K @ b2v
    det = (A3[0, 0] * A3[1, 1] - A3[0, 1] * A3[1, 0]).real
    c0 = np.log(2 * np.sqrt(det)) - 0.25 * (b2v.conj() @ A3i @ b2v).real
    return QFunctionParams(
        a1=float(2 * A1[0, 0].real),
        a2=p.a2,
        c1=complex(-A1[1, 0]),
        c2=p.c2,
        g1=p.g1,
        g2=p.g2,
        b1=complex(b1v[0]),
        b2=p.b2,
        c0=float(c0),
    )


def check_tp(p: QFunctionParams) -> TPResiduals:
    """Norms of the residuals ``W``, ``y`` and ``w0`` of the TP conditions."""
    A1, A2, A3 = _blocks(p)
    A3i = _a3_inverse(A3)
    K = A2 @ A3i
    b1v = np.array([p.b1, np.conj(p.b1)], dtype=complex)
    b2v = np.array([p.b2, np.conj(p.b2)], dtype=complex)
    W = A1 - K @ A2.conj().T
    y = b1v - K @ b2v
    det = (A3[0, 0] * A3[1, 1] - A3[0, 1] * A3[1, 0]).real
    w0 = p.c0 - np.log(2 * np.sqrt(det)) + 0.25 * (b2v.conj() @ A3i @ b2v).real
    return TPResiduals(float(np.linalg.norm(W)), float(np.linalg.norm(y)), float(w0))


def positivity_status(p: QFunctionParams, mode: str = "CP") -> PositivityStatus:
    """CP: smallest eigenvalue of ``A``.  TP: ``a2^2 - 4|c2|^2`` (with ``a2 > 0``)."""
    mode = mode.upper()
    if mode == "CP":
        A, _ = assemble_matrices(p)
        val = float(np.linalg.eigvalsh(A)[0])
        return PositivityStatus("CP", val, val >= -POSITIVITY_TOL)
    if mode == "TP":
        val = float(p.a2**2 - 4 * abs(complex(p.c2)) ** 2)
        return PositivityStatus("TP", val, val >= -POSITIVITY_TOL and p.a2 > 0)
    raise ValueError(f"unknown mode {mode!r}")


def real_representation(p: QFunctionParams) -> tuple[np.ndarray, np.ndarray]:
    """``A' = U^H A U`` and ``B' = U^H B`` in (x1, p1, x2, p2) coordinates."""
    A, B = assemble_matrices(p)
    Ap = U.conj().T @ A @ U
    Bp = U.conj().T @ B
    return Ap.real, Bp.real


def params_from_real(Ap: np.ndarray, Bp: np.ndarray, c0: float) -> QFunctionParams:
    A = U @ Ap @ U.conj().T
    B = U @ Bp
    return params_from_matrices(A, B, c0)


def project_physical(p: QFunctionParams) -> QFunctionParams:
    """Trace-preserving projection of ``A'`` onto the positive cone.

    Negative eigenvalues of the real representation are zeroed and the rest
    rescaled so that ``Tr A'`` is unchanged; ``B`` and ``c0`` are kept.
    """
    A, B = assemble_matrices(p)
    Ap = U.conj().T @ A @ U
    Ap = 0.5 * (Ap.real + Ap.real.T)
    d, V = np.linalg.eigh(Ap)
    if d[0] >= -POSITIVITY_TOL:
        return p
    dplus = np.clip(d, 0.0, None)
    tr, trp = d.sum(), dplus.sum()
    if trp <= 0 or tr <= 0:
        raise AllNegativeSpectrum("no positive spectrum to project onto")
    Aphys = (tr / trp) * (V * dplus) @ V.T
    A_new = U @ Aphys @ U.conj().T
    q = params_from_matrices(A_new, B, p.c0)
    # B is untouched: copy exactly rather than through the round trip
    return QFunctionParams(q.a1, q.a2, q.c1, q.c2, q.g1, q.g2, p.b1, p.b2, p.c0)


def beam_splitter_process(theta: float) -> QFunctionParams:
    """Single output port of a beam splitter with transmissivity angle ``theta``."""
    c = np.cos(theta)
    return QFunctionParams(a1=c * c, a2=1.0, g1=complex(-c), c0=0.0)
