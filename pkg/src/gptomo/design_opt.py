"""Choice of input coherent states.

The geometric objective is ``Tr`` of the leading 14 x 14 block of ``G^-1``
with ``G = V^T V``.  Every row ``v(alpha, w)`` is a fixed linear map ``C`` of
``kron(f(alpha), h(w))`` where ``f`` and ``h`` are the monomials
``(1, re, im, |.|^2, Re .^2, Im .^2)``, so

    G = C (sum_j f_j f_j^T  kron  sum_k h_k h_k^T) C^T

costs O(J) per evaluation instead of O(JK).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .core_model import QFunctionParams
from .errors import AllStartsSingular, NumericalError
from .mse_theory import mse_formula_nontp, mse_formula_tp
from .phase_space import PhaseSpaceGrid
from .simulator import task_rng

SINGULAR_COND = 1e12


def monomials(x) -> np.ndarray:
    """``(1, re, im, |x|^2, Re x^2, Im x^2)`` along a new last axis."""
    x = np.asarray(x, dtype=complex)
    x2 = x * x
    return np.stack([np.ones(x.shape), x.real, x.imag, np.abs(x) ** 2, x2.real, x2.imag], axis=-1)


def _row_map() -> np.ndarray:
    C = np.zeros((15, 36))

    def put(row, i, k, val):
        C[row, 6 * i + k] += val

    put(0, 3, 0, 1)
    put(1, 0, 3, 1)
    put(2, 1, 0, 2)
    put(3, 2, 0, 2)
    put(4, 0, 1, 2)
    put(5, 0, 2, -2)
    put(6, 4, 0, 2)
    put(7, 5, 0, 2)
    put(8, 0, 4, 2)
    put(9, 0, 5, -2)
    put(10, 1, 1, 2); put(10, 2, 2, 2)
    put(11, 2, 1, 2); put(11, 1, 2, -2)
    put(12, 1, 1, 2); put(12, 2, 2, -2)
    put(13, 1, 2, -2); put(13, 2, 1, -2)
    put(14, 0, 0, 1)
    return C


ROW_MAP = _row_map()


def grid_moment_matrix(grid: PhaseSpaceGrid) -> np.ndarray:
    h = monomials(grid.bin_centers)
    return h.T @ h


def fast_gram(amps, H: np.ndarray) -> np.ndarray:
    f = monomials(np.atleast_1d(amps))
    Fm = f.T @ f
    return ROW_MAP @ np.kron(Fm, H) @ ROW_MAP.T


def _objective_from_gram(G: np.ndarray) -> float:
    ev = np.linalg.eigvalsh(G)
    if ev[0] <= 0 or ev[-1] / ev[0] > SINGULAR_COND:
        return np.inf
    Gi = np.linalg.inv(G)
    return float(np.trace(Gi[:14, :14]))


def _monomial_jacobian(amps):
    """Derivatives of the monomials w.r.t. (re, im), shape ``(J, 2, 6)``."""
    re, im = amps.real, amps.imag
    z, o = np.zeros_like(re), np.ones_like(re)
    d_re = np.stack([z, o, z, 2 * re, 2 * re, 2 * im], axis=-1)
    d_im = np.stack([z, z, o, 2 * im, -2 * im, 2 * re], axis=-1)
    return np.stack([d_re, d_im], axis=1)


def objective_and_gradient(v, H: np.ndarray):
    """Geometric objective of the flattened ``(re, im)`` vector and its gradient."""
    amps = _to_amps(v)
    f = monomials(amps)
    G = ROW_MAP @ np.kron(f.T @ f, H) @ ROW_MAP.T
    ev = np.linalg.eigvalsh(G)
    if ev[0] <= 0 or ev[-1] / ev[0] > SINGULAR_COND:
        return np.inf, np.zeros_like(v)
    Gi = np.linalg.inv(G)
    Gi14 = Gi[:, :14]
    S = Gi14 @ Gi14.T
    T = (ROW_MAP.T @ S @ ROW_MAP).reshape(6, 6, 6, 6)
    W = np.einsum("akbl,lk->ab", T, H)
    W = W + W.T
    grad = -np.einsum("ja,ab,jcb->jc", f, W, _monomial_jacobian(amps))
    return float(np.trace(Gi[:14, :14])), grad.ravel()


def geometric_objective(amps, grid: PhaseSpaceGrid, H: np.ndarray | None = None) -> float:
    """Trace of the leading 14 x 14 block of ``(V^T V)^-1``; ``inf`` when singular."""
    if H is None:
        H = grid_moment_matrix(grid)
    return _objective_from_gram(fast_gram(amps, H))


def geometric_bound(amps, grid: PhaseSpaceGrid, N: int) -> float:
    """Large-grid upper bound ``J N objective`` on the LI error."""
    return len(np.atleast_1d(amps)) * N * geometric_objective(amps, grid)


@dataclass
class InputDesign:
    amplitudes: np.ndarray
    L: float
    objective: float
    strategy: str
    meta: dict = field(default_factory=dict)

    @property
    def J(self) -> int:
        return len(self.amplitudes)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "L": float(self.L),
            "objective": float(self.objective),
            "amplitudes": [[float(a.real), float(a.imag)] for a in self.amplitudes],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InputDesign":
        amps = np.array([complex(a[0], a[1]) for a in d["amplitudes"]])
        return cls(amps, float(d["L"]), float(d["objective"]), d["strategy"], dict(d.get("meta", {})))

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["j", "alpha_r", "alpha_i"])
            for j, a in enumerate(self.amplitudes):
                wr.writerow([j, repr(float(a.real)), repr(float(a.imag))])


def canonicalize(design: InputDesign) -> InputDesign:
    """Sort amplitudes by (real, imag)."""
    a = np.asarray(design.amplitudes, dtype=complex)
    order = np.lexsort((a.imag, a.real))
    return InputDesign(a[order], design.L, design.objective, design.strategy, dict(design.meta))


def random_design(J: int, L: float, seed: int, index: int = 0) -> np.ndarray:
    """Amplitudes uniform in the box ``|Re|, |Im| <= L``."""
    u = task_rng(seed, 77, index).uniform(-L, L, size=(J, 2))
    return u[:, 0] + 1j * u[:, 1]


def _to_amps(v):
    v = np.asarray(v).reshape(-1, 2)
    return v[:, 0] + 1j * v[:, 1]


def _to_vec(a):
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).ravel()


def _box_minimize(fun, J, L, starts, seed, extra_starts=(), xatol=1e-9, fatol=1e-8,
                  max_evals=None):
    """Multi-start bounded Nelder-Mead; returns ``(best_vec, best_val, meta)``."""
    dim = 2 * J
    pts = [np.clip(_to_vec(a), -L, L) for a in extra_starts]
    if starts > 0:
        lhs = qmc.LatinHypercube(d=dim, seed=task_rng(seed, 5, J))
        pts += list(qmc.scale(lhs.random(starts), -L * np.ones(dim), L * np.ones(dim)))
    bounds = [(-L, L)] * dim
    max_evals = max_evals or 400 * dim
    best_v, best_f = None, np.inf
    n_eval = 0
    n_finite = 0
    for x0 in pts:
        f0 = fun(x0)
        if not np.isfinite(f0):
            # nudge singular starts once
            x0 = np.clip(x0 + 1e-3 * L * task_rng(seed, 6, n_eval).standard_normal(dim), -L, L)
            f0 = fun(x0)
            if not np.isfinite(f0):
                continue
        n_finite += 1
        x, fx = x0, f0
        # restarting the simplex escapes premature collapse in higher dimensions
        for _ in range(3):
            res = minimize(fun, x, method="Nelder-Mead", bounds=bounds,
                           options={"xatol": xatol, "fatol": fatol * max(fx, 1e-300),
                                    "maxfev": max_evals, "adaptive": True})
            n_eval += res.nfev
            improved = res.fun < fx * (1 - 1e-8)
            if res.fun <= fx:
                x, fx = res.x, res.fun
            if not improved:
                break
        if fx < best_f:
            best_v, best_f = x, fx
    if best_v is None:
        raise AllStartsSingular("every start produced a singular design")
    return best_v, float(best_f), {"starts": len(pts), "finite_starts": n_finite, "evaluations": n_eval,
                                   "seed": int(seed)}


def optimize_geometric(J: int, L: float, grid: PhaseSpaceGrid, starts: int = 32, seed: int = 0,
                       warm_starts=(), max_evals=None) -> InputDesign:
    """Box-constrained multi-start minimisation of the geometric objective.

    The objective is smooth wherever it is finite, so each Latin-hypercube
    start runs a bounded quasi-Newton search with the analytic gradient.
    """
    if J < 6:
        raise ValueError("an informationally complete design needs J >= 6")
    H = grid_moment_matrix(grid)
    dim = 2 * J
    pts = [np.clip(_to_vec(a), -L, L) for a in warm_starts]
    if starts > 0:
        lhs = qmc.LatinHypercube(d=dim, seed=task_rng(seed, 5, J))
        pts += list(qmc.scale(lhs.random(starts), -L * np.ones(dim), L * np.ones(dim)))
    best_v, best_f, n_eval, n_finite = None, np.inf, 0, 0
    for x0 in pts:
        f0, _ = objective_and_gradient(x0, H)
        if not np.isfinite(f0):
            continue
        n_finite += 1
        res = minimize(objective_and_gradient, x0, args=(H,), jac=True, method="L-BFGS-B",
                       bounds=[(-L, L)] * dim,
                       options={"ftol": 1e-12, "gtol": 1e-12 * f0, "maxiter": max_evals or 5000})
        n_eval += res.nfev
        if res.fun < min(f0, best_f):
            best_v, best_f = res.x, float(res.fun)
        elif f0 < best_f:
            best_v, best_f = x0, float(f0)
    if best_v is None:
        raise AllStartsSingular("every start produced a singular design")
    meta = {"starts": len(pts), "finite_starts": n_finite, "evaluations": n_eval, "seed": int(seed)}
    return InputDesign(_to_amps(best_v), float(L), best_f, "GEOMETRIC", meta)


def optimize_geometric_ladder(Js, L: float, grid: PhaseSpaceGrid, starts: int = 32, seed: int = 0,
                              max_evals=None) -> list[InputDesign]:
    """Optimise over increasing ``J``; each size is also warm-started from the
    previous optimum plus one extra state, so the objective cannot increase."""
    out = []
    prev = None
    for J in sorted(Js):
        warm = []
        if prev is not None:
            for i in range(4):
                extra = random_design(J - len(prev.amplitudes), L, seed, 1000 * J + i)
                warm.append(np.concatenate([prev.amplitudes, extra]))
        d = optimize_geometric(J, L, grid, starts, seed, warm, max_evals=max_evals)
        if prev is not None:
            for w in warm:
                fw = geometric_objective(w, grid)
                if fw < d.objective:
                    d = InputDesign(w, float(L), fw, "GEOMETRIC", d.meta)
        out.append(d)
        prev = d
    return out


def optimize_best_informed(truth, mode: str, J: int, L: float, grid: PhaseSpaceGrid, N: int,
                           starts: int = 8, seed: int = 0, warm_starts=(), max_evals=None) -> InputDesign:
    """Minimise the asymptotic error formula of the known truth (simulation oracle)."""
    mode = mode.upper()
    if mode in ("NONTP", "NON-TP"):
        p = truth if isinstance(truth, QFunctionParams) else None

        def evaluate(amps):
            return mse_formula_nontp(p, amps, grid, N).total

        tag = "BEST_NONTP"
    elif mode == "TP":
        t = np.asarray(truth, dtype=float)

        def evaluate(amps):
            return mse_formula_tp(t, amps, grid, N).total

        tag = "BEST_TP"
    else:
        raise ValueError(f"unknown mode {mode!r}")

    def fun(v):
        try:
            val = evaluate(_to_amps(v))
        except (NumericalError, np.linalg.LinAlgError):
            return np.inf
        return val if np.isfinite(val) else np.inf

    v, f, meta = _box_minimize(fun, J, L, starts, seed, warm_starts, xatol=1e-6, fatol=1e-6,
                               max_evals=max_evals or 100 * 2 * J)
    return InputDesign(_to_amps(v), float(L), f, tag, meta)
