"""Heterodyne sampling of output states, binned on a phase-space grid."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .core_model import QFunctionParams
from .errors import RejectionOverflow
from .phase_space import PhaseSpaceGrid, bin_probabilities, output_gaussian_moments

MIN_ACCEPTANCE = 1e-3


def task_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent stream for ``(seed, *key)``; order of evaluation is irrelevant."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


@dataclass
class MeasurementRecord:
    inputs: np.ndarray
    N: int
    counts: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_1d(np.asarray(self.inputs, dtype=complex))
        self.counts = np.atleast_2d(np.asarray(self.counts))
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))

    @property
    def J(self) -> int:
        return len(self.inputs)

    @property
    def nu_tilde(self) -> np.ndarray:
        return self.counts / self.N

    @property
    def nu(self) -> np.ndarray:
        """Calibrated frequencies ``gamma_j * nu_tilde_jk``."""
        return self.gamma[:, None] * self.nu_tilde

    def with_gamma(self, gamma) -> "MeasurementRecord":
        return MeasurementRecord(self.inputs.copy(), self.N, self.counts.copy(), np.asarray(gamma, float))

    def to_dict(self) -> dict:
        counts = self.counts
        counts = counts.tolist() if np.issubdtype(counts.dtype, np.integer) else counts.astype(float).tolist()
        return {
            "inputs": [[a.real, a.imag] for a in self.inputs],
            "N": int(self.N),
            "gamma": self.gamma.tolist(),
            "counts": counts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementRecord":
        inputs = np.array([complex(a[0], a[1]) for a in d["inputs"]])
        counts = np.array(d["counts"])
        return cls(inputs, int(d["N"]), counts, np.array(d["gamma"], float))

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    def write_counts_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["j", "k", "n"])
            for j, row in enumerate(self.counts):
                for k, n in enumerate(row):
                    wr.writerow([j, k, n])


def sample_outcomes(p: QFunctionParams, alpha: complex, N: int, grid: PhaseSpaceGrid,
                    rng: np.random.Generator) -> np.ndarray:
    """``N`` heterodyne outcomes conditioned on landing inside ``grid``."""
    if N < 1:
        raise ValueError("need at least one shot")
    mom = output_gaussian_moments(p, alpha)
    chol = np.linalg.cholesky(mom.cov)
    out = []
    have = 0
    drawn = accepted = 0
    batch = int(N * 1.05) + 64
    while have < N:
        s = rng.standard_normal((batch, 2)) @ chol.T + mom.mean
        w = s[:, 0] + 1j * s[:, 1]
        w = w[grid.bin_index(w) >= 0]
        drawn += batch
        accepted += len(w)
        if accepted < MIN_ACCEPTANCE * drawn:
            raise RejectionOverflow(
                f"only {accepted}/{drawn} samples land on the grid; recentre or enlarge it"
            )
        out.append(w)
        have += len(w)
        rate = accepted / drawn
        batch = int((N - have) / rate * 1.05) + 64
    return np.concatenate(out)[:N]


def sample_output_counts(p: QFunctionParams, alpha: complex, N: int, grid: PhaseSpaceGrid,
                         seed: int | np.random.Generator) -> np.ndarray:
    """Histogram of ``N`` grid-conditioned heterodyne outcomes (length ``K``)."""
    rng = seed if isinstance(seed, np.random.Generator) else task_rng(seed)
    w = sample_outcomes(p, alpha, N, grid, rng)
    return np.bincount(grid.bin_index(w), minlength=grid.K)


def run_experiment(p: QFunctionParams, inputs, N: int, grid: PhaseSpaceGrid, seed: int,
                   repetition: int = 0, stream: tuple = ()) -> MeasurementRecord:
    """Measure every input ``N`` times; input ``j`` uses stream ``(seed, *stream, repetition, j)``.

    Calibration weights ``gamma_j`` are the exact grid masses of the true process.
    """
    inputs = np.atleast_1d(np.asarray(inputs, dtype=complex))
    counts = np.empty((len(inputs), grid.K), dtype=np.int64)
    gamma = np.empty(len(inputs))
    for j, a in enumerate(inputs):
        counts[j] = sample_output_counts(p, a, N, grid, task_rng(seed, *stream, repetition, j))
        gamma[j] = bin_probabilities(p, a, grid).gamma
    return MeasurementRecord(inputs, int(N), counts, gamma)


def noiseless_record(p: QFunctionParams, inputs, N: int, grid: PhaseSpaceGrid) -> MeasurementRecord:
    """Record whose (real-valued) counts equal their expectations ``N * p_tilde``."""
    inputs = np.atleast_1d(np.asarray(inputs, dtype=complex))
    probs = [bin_probabilities(p, a, grid) for a in inputs]
    counts = np.array([N * b.p_tilde for b in probs])
    gamma = np.array([b.gamma for b in probs])
    return MeasurementRecord(inputs, int(N), counts, gamma)
