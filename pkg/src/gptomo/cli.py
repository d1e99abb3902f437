"""Command-line entry points.

Every subcommand accepts ``--config FILE.json``; explicit flags override the
file.  Exit codes: 0 success, 2 usage or configuration error, 3 numerical
failure (message on stderr).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .core_model import QFunctionParams, tp_vector
from .design_opt import canonicalize, optimize_geometric
from .errors import NumericalError
from .harness import ConfigError, ExperimentConfig, check_seed, emit_results, run_campaign
from .mse_theory import mse_formula_nontp, mse_formula_tp
from .phase_space import PhaseSpaceGrid, make_grid
from .process_gen import PhysicalChannelSpec, process_from_physical, sample_group
from .reconstruction import build_design_matrix, li_estimate, ml_estimate_nontp, ml_estimate_tp
from .simulator import MeasurementRecord, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path is None or path == "-":
        print(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _settings(args, keys, defaults):
    """Defaults, then the config file, then explicit flags."""
    out = dict(defaults)
    if getattr(args, "config", None):
        cfg = _read_json(args.config)
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(cfg) - set(keys)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        out.update(cfg)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _need_seed(s):
    if s.get("seed") is None:
        raise ConfigError("--seed is required for this command")
    return check_seed(s["seed"])


def _grid(s) -> PhaseSpaceGrid:
    return make_grid(int(s["M"]), float(s["extent"]))


def _load_process(path) -> QFunctionParams:
    d = _read_json(path)
    if "params" in d:
        d = d["params"]
    return QFunctionParams.from_dict(d)


def _load_inputs(path) -> np.ndarray:
    d = _read_json(path)
    if isinstance(d, dict):
        d = d["amplitudes"]
    return np.array([complex(a[0], a[1]) if isinstance(a, (list, tuple)) else complex(a) for a in d])


def cmd_generate_process(args):
    keys = ("group", "index", "seed", "x0p0_range", "physical", "out")
    s = _settings(args, keys, {"group": 3, "index": 1})
    if s.get("physical"):
        spec = PhysicalChannelSpec.from_dict(s["physical"])
        p = process_from_physical(spec)
    else:
        seed = _need_seed(s)
        try:
            spec, p = sample_group(int(s["group"]), int(s["index"]), seed, s.get("x0p0_range"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    _write_json({"physical": spec.to_dict(), "params": p.to_dict(), "tp_vector": tp_vector(p).tolist()},
                s.get("out"))


def cmd_geometric_set(args):
    keys = ("J", "L", "M", "extent", "starts", "seed", "out", "csv")
    s = _settings(args, keys, {"J": 6, "L": 1.0, "M": 20, "extent": 5.0, "starts": 32})
    seed = _need_seed(s)
    try:
        d = optimize_geometric(int(s["J"]), float(s["L"]), _grid(s), int(s["starts"]), seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    d = canonicalize(d)
    _write_json(d.to_dict(), s.get("out"))
    if s.get("csv"):
        d.write_csv(s["csv"])


def cmd_simulate(args):
    keys = ("process", "inputs", "N", "M", "extent", "seed", "out", "counts_csv")
    s = _settings(args, keys, {"N": 10_000, "M": 20, "extent": 5.0})
    seed = _need_seed(s)
    for k in ("process", "inputs"):
        if not s.get(k):
            raise ConfigError(f"--{k} is required")
    grid = _grid(s)
    rec = run_experiment(_load_process(s["process"]), _load_inputs(s["inputs"]), int(s["N"]), grid, seed)
    d = rec.to_dict()
    d["grid"] = grid.to_dict()
    _write_json(d, s.get("out"))
    if s.get("counts_csv"):
        rec.write_counts_csv(s["counts_csv"])


def cmd_reconstruct(args):
    keys = ("record", "method", "M", "extent", "seed", "starts", "out")
    s = _settings(args, keys, {"method": "ml", "starts": 4})
    if not s.get("record"):
        raise ConfigError("--record is required")
    raw = _read_json(s["record"])
    rec = MeasurementRecord.from_dict(raw)
    g = dict(raw.get("grid", {"M": 20, "extent": 5.0}))
    g.update({k: s[k] for k in ("M", "extent") if s.get(k) is not None})
    grid = PhaseSpaceGrid.from_dict(g)
    method = s["method"]
    if method in ("li", "li-proj"):
        est = li_estimate(rec, build_design_matrix(rec.inputs, grid), grid, project=method == "li-proj")
    elif method == "ml":
        est = ml_estimate_nontp(rec, grid)
    elif method == "ml-tp":
        est = ml_estimate_tp(rec, grid, n_starts=int(s["starts"]), seed=_need_seed(s))
    else:
        raise ConfigError(f"unknown method {method!r}")
    out = est.to_dict()
    out["params"] = est.params.to_dict()
    _write_json(out, s.get("out"))


def cmd_mse_formula(args):
    keys = ("process", "inputs", "N", "M", "extent", "mode", "out")
    s = _settings(args, keys, {"N": 10_000, "M": 20, "extent": 5.0, "mode": "nontp"})
    for k in ("process", "inputs"):
        if not s.get(k):
            raise ConfigError(f"--{k} is required")
    p, amps, grid, N = _load_process(s["process"]), _load_inputs(s["inputs"]), _grid(s), int(s["N"])
    if s["mode"] == "nontp":
        r = mse_formula_nontp(p, amps, grid, N)
    elif s["mode"] == "tp":
        r = mse_formula_tp(tp_vector(p), amps, grid, N)
    else:
        raise ConfigError("mode must be 'nontp' or 'tp'")
    _write_json({"total": r.total, "normalized": r.normalized, "per_parameter": r.per_parameter.tolist()},
                s.get("out"))


def cmd_campaign(args):
    if not args.config:
        cfg_dict = {}
    else:
        cfg_dict = _read_json(args.config)
        if not isinstance(cfg_dict, dict):
            raise ConfigError("config file must hold a JSON object")
    seed = cfg_dict.pop("seed", None) if args.seed is None else args.seed
    out = cfg_dict.pop("out", None) if args.out is None else args.out
    for k in ("workers", "repetitions", "group", "J"):
        v = getattr(args, k)
        if v is not None:
            cfg_dict[k] = v
    if args.N:
        cfg_dict["N"] = args.N
    if args.strategies:
        cfg_dict["strategies"] = args.strategies
    try:
        cfg = ExperimentConfig.from_dict(cfg_dict)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if seed is None:
        raise ConfigError("--seed is required for this command")
    rows = run_campaign(cfg, check_seed(seed),
                        progress=lambda k, n: print(f"process {k}/{n} done", file=sys.stderr))
    csv_path, json_path = emit_results(rows, out or "results", cfg)
    print(csv_path)
    print(json_path)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gptomo", description="Gaussian process tomography tools")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file with settings; flags override it")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output path ('-' or omitted: stdout)")
        p.set_defaults(func=func)
        return p

    p = add("generate-process", cmd_generate_process, "sample a benchmark process")
    p.add_argument("--group", type=int)
    p.add_argument("--index", type=int)

    p = add("geometric-set", cmd_geometric_set, "optimise a process-independent input set")
    p.add_argument("--J", type=int)
    p.add_argument("--L", type=float)
    p.add_argument("--M", type=int)
    p.add_argument("--extent", type=float)
    p.add_argument("--starts", type=int)
    p.add_argument("--csv")

    p = add("simulate", cmd_simulate, "simulate binned heterodyne counts")
    p.add_argument("--process")
    p.add_argument("--inputs")
    p.add_argument("--N", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--extent", type=float)
    p.add_argument("--counts-csv", dest="counts_csv")

    p = add("reconstruct", cmd_reconstruct, "estimate the process from a record")
    p.add_argument("--record")
    p.add_argument("--method", choices=["li", "li-proj", "ml", "ml-tp"])
    p.add_argument("--M", type=int)
    p.add_argument("--extent", type=float)
    p.add_argument("--starts", type=int)

    p = add("mse-formula", cmd_mse_formula, "asymptotic error of a design")
    p.add_argument("--process")
    p.add_argument("--inputs")
    p.add_argument("--N", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--extent", type=float)
    p.add_argument("--mode", choices=["nontp", "tp"])

    p = add("campaign", cmd_campaign, "run a Monte Carlo strategy comparison")
    p.add_argument("--workers", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--group", type=int)
    p.add_argument("--J", type=int)
    p.add_argument("--N", type=int, nargs="+")
    p.add_argument("--strategies", nargs="+")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        args.func(args)
    except NumericalError as exc:
        print(f"numerical error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
