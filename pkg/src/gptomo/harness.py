"""Monte Carlo campaigns comparing input-state strategies."""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .core_model import tp_complete, tp_vector, vector_from_params
from .design_opt import optimize_best_informed, optimize_geometric, random_design
from .errors import NumericalError
from .mse_theory import mse_formula_nontp, mse_formula_tp
from .phase_space import make_grid
from .process_gen import group_size, sample_group
from .reconstruction import build_design_matrix, ic_diagnostics, li_estimate, ml_estimate_nontp, ml_estimate_tp
from .simulator import run_experiment

CSV_COLUMNS = (
    "strategy", "group", "process", "J", "N", "L", "K",
    "mse_empirical", "mse_formula", "stderr", "wall_time", "seed",
)
STRATEGIES = ("RML(TP)", "RML(non-TP)", "GML(non-TP)", "BML(TP)", "BML(non-TP)", "RLI(non-TP)")
TP_INDEX = np.array([1, 4, 5, 8, 9, 10, 11, 12, 13])  # TP parameters inside the 14-vector
MAX_SEED = 2**64


class ConfigError(ValueError):
    """Invalid campaign configuration."""


@dataclass
class ExperimentConfig:
    strategies: list = field(default_factory=lambda: ["RML(TP)", "RML(non-TP)", "GML(non-TP)"])
    group: int = 3
    processes: list | None = None
    x0p0_range: list | None = None
    J: int = 6
    L: float = 1.0
    M: int = 20
    extent: float = 5.0
    N: list = field(default_factory=lambda: [1000, 10000])
    repetitions: int = 30
    random_designs: int = 30
    metric: str = "all14"
    normalize: bool = True
    nontp_estimator: str = "ml"
    geometric_starts: int = 32
    best_starts: int = 2
    tp_starts: int = 4
    workers: int = 1
    record_wall_time: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        bad = [s for s in self.strategies if s not in STRATEGIES]
        if bad:
            raise ConfigError(f"unknown strategies {bad}; choose from {STRATEGIES}")
        if self.metric not in ("all14", "tp9"):
            raise ConfigError("metric must be 'all14' or 'tp9'")
        if self.nontp_estimator not in ("ml", "li", "li-proj"):
            raise ConfigError("nontp_estimator must be ml, li or li-proj")
        try:
            n = group_size(int(self.group))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for i in self.process_indices():
            if not 1 <= i <= n:
                raise ConfigError(f"group {self.group} has process indices 1..{n}")
        if int(self.J) < 1 or float(self.L) <= 0 or int(self.M) < 2 or float(self.extent) <= 0:
            raise ConfigError("J, L, M and extent must be positive (M >= 2)")
        if int(self.repetitions) < 1 or not self.N or min(int(n) for n in self.N) < 1:
            raise ConfigError("repetitions and every N must be >= 1")

    def process_indices(self) -> list:
        if self.processes is None:
            return list(range(1, group_size(int(self.group)) + 1))
        return [int(i) for i in self.processes]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ResultRow:
    strategy: str
    group: int
    process: int
    J: int
    N: int
    L: float
    K: int
    mse_empirical: float
    mse_formula: float
    stderr: float
    wall_time: float | None
    seed: int
    extra: dict = field(default_factory=dict)

    def csv_values(self) -> list:
        out = []
        for c in CSV_COLUMNS:
            v = getattr(self, c)
            if v is None:
                out.append("")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ResultRow":
        return cls(**d)


def check_seed(seed) -> int:
    s = int(seed)
    if not 0 <= s < MAX_SEED:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return s


def _strategy_id(name: str) -> int:
    return STRATEGIES.index(name)


def _errors(strategy, est_x, p, is_tp):
    """Squared errors on the 14- and 9-parameter sets."""
    x14 = vector_from_params(p)
    if is_tp:
        e14 = vector_from_params(tp_complete(est_x)) - x14
    else:
        e14 = np.asarray(est_x) - x14
    e14 = e14**2
    return float(e14.sum()), float(e14[TP_INDEX].sum())


def _estimate(rec, grid, is_tp, cfg, seed):
    if is_tp:
        return ml_estimate_tp(rec, grid, n_starts=cfg.tp_starts, seed=seed).x
    if cfg.nontp_estimator == "ml":
        return ml_estimate_nontp(rec, grid).x
    D = build_design_matrix(rec.inputs, grid)
    return li_estimate(rec, D, grid, project=cfg.nontp_estimator == "li-proj").x


def _formula(p, design, grid, N, is_tp, metric):
    try:
        if is_tp:
            if metric != "tp9":
                return np.nan
            return mse_formula_tp(tp_vector(p), design, grid, N).total
        per = mse_formula_nontp(p, design, grid, N).per_parameter
        return float(per.sum() if metric == "all14" else per[TP_INDEX].sum())
    except NumericalError:
        return np.nan


def _ic_random_design(J, L, seed, key, grid, is_tp):
    """Deterministic random design; non-TP strategies redraw until IC."""
    for attempt in range(100):
        amps = random_design(J, L, seed, key * 1000 + attempt)
        if is_tp or ic_diagnostics(build_design_matrix(amps, grid)).is_ic:
            return amps
    raise NumericalError("could not draw an informationally complete random design")


def _designs_for(strategy, cfg, p, grid, N, seed, process, geo_cache):
    J, L = int(cfg.J), float(cfg.L)
    is_tp = strategy.endswith("(TP)")
    if strategy.startswith(("RML", "RLI")):
        return [_ic_random_design(J, L, seed, process * 100 + d, grid, is_tp)
                for d in range(min(int(cfg.random_designs), int(cfg.repetitions)))]
    if "GML" not in geo_cache:
        geo_cache["GML"] = optimize_geometric(J, L, grid, cfg.geometric_starts, seed).amplitudes
    if strategy.startswith("GML"):
        return [geo_cache["GML"]]
    truth = tp_vector(p) if is_tp else p
    mode = "TP" if is_tp else "NONTP"
    d = optimize_best_informed(truth, mode, J, L, grid, N, cfg.best_starts, seed,
                               warm_starts=[geo_cache["GML"]])
    return [d.amplitudes]


def _run_process(args):
    cfg, seed, process = args
    grid = make_grid(cfg.M, cfg.extent)
    _, p = sample_group(int(cfg.group), process, seed, cfg.x0p0_range)
    n_par = 14 if cfg.metric == "all14" else 9
    scale = 1.0 / n_par if cfg.normalize else 1.0
    geo_cache: dict = {}
    rows = []
    for strategy in cfg.strategies:
        is_tp = strategy.endswith("(TP)")
        sid = _strategy_id(strategy)
        for N in (int(n) for n in cfg.N):
            t0 = time.perf_counter()
            designs = _designs_for(strategy, cfg, p, grid, N, seed, process, geo_cache)
            formulas = [_formula(p, d, grid, N, is_tp, cfg.metric) for d in designs]
            errs, failed = [], 0
            # repetition r uses design r mod (number of designs)
            for r in range(int(cfg.repetitions)):
                di = r % len(designs)
                try:
                    rec = run_experiment(p, designs[di], N, grid, seed, repetition=r,
                                         stream=(process, sid, di, N))
                    est = _estimate(rec, grid, is_tp, cfg, seed)
                except NumericalError:
                    failed += 1
                    continue
                errs.append(_errors(strategy, est, p, is_tp))
            errs = np.array(errs).reshape(-1, 2)
            e = errs[:, 0 if cfg.metric == "all14" else 1] * scale
            mse = float(e.mean()) if len(e) else np.nan
            se = float(e.std(ddof=1) / np.sqrt(len(e))) if len(e) > 1 else np.nan
            wall = time.perf_counter() - t0
            rows.append(ResultRow(
                strategy=strategy, group=int(cfg.group), process=int(process), J=int(cfg.J), N=N,
                L=float(cfg.L), K=grid.K, mse_empirical=mse,
                mse_formula=float(np.nanmean(formulas) * scale) if np.any(np.isfinite(formulas)) else np.nan,
                stderr=se, wall_time=round(wall, 3) if cfg.record_wall_time else None, seed=int(seed),
                extra={
                    "failed": failed,
                    "samples": int(len(e)),
                    "mse_all14": float(errs[:, 0].mean() / (14 if cfg.normalize else 1)) if len(e) else None,
                    "mse_tp9": float(errs[:, 1].mean() / (9 if cfg.normalize else 1)) if len(e) else None,
                    "designs": [[[float(a.real), float(a.imag)] for a in d] for d in designs],
                },
            ))
    return rows


def run_campaign(cfg: ExperimentConfig, seed: int, progress=None) -> list[ResultRow]:
    """Simulate, reconstruct and score every (process, strategy, N) cell.

    Results depend only on ``(cfg, seed)``; ``cfg.workers`` changes speed only.
    """
    cfg.validate()
    seed = check_seed(seed)
    jobs = [(cfg, seed, i) for i in cfg.process_indices()]
    rows: list[ResultRow] = []
    if int(cfg.workers) > 1:
        with ProcessPoolExecutor(max_workers=int(cfg.workers)) as ex:
            for k, res in enumerate(ex.map(_run_process, jobs), 1):
                rows.extend(res)
                if progress:
                    progress(k, len(jobs))
    else:
        for k, job in enumerate(jobs, 1):
            rows.extend(_run_process(job))
            if progress:
                progress(k, len(jobs))
    order = {s: i for i, s in enumerate(cfg.strategies)}
    rows.sort(key=lambda r: (r.process, order[r.strategy], r.N))
    return rows


def _jsonable(v):
    if isinstance(v, float) and not np.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def emit_results(rows, path, cfg: ExperimentConfig | None = None) -> tuple[str, str]:
    """Write ``results.csv`` and ``results.json`` into directory ``path``."""
    os.makedirs(path, exist_ok=True)
    csv_path = os.path.join(path, "results.csv")
    json_path = os.path.join(path, "results.json")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for r in rows:
            wr.writerow(r.csv_values())
    payload = {
        "config": None if cfg is None else cfg.to_dict(),
        "rows": [_jsonable(r.to_dict()) for r in rows],
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
    return csv_path, json_path


def load_results(path) -> list[ResultRow]:
    with open(os.path.join(path, "results.json"), encoding="utf-8") as fh:
        payload = json.load(fh)
    rows = []
    for d in payload["rows"]:
        d = {k: (np.nan if v is None and k in ("mse_empirical", "mse_formula", "stderr") else v)
             for k, v in d.items()}
        rows.append(ResultRow.from_dict(d))
    return rows
