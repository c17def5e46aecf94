"""Command-line front end: ``gsavqe {run,enumerate,exact,plotdata}``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import glob
import io
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from .baselines import run_hea, run_rnd
from .driver import GsaConfig, RunRecord, config_fields, mse, run_gsa
from .hamiltonian import (HamiltonianError, TaskSpec, exact_ground_energy, load_hamiltonian,
                          parse_builtin)
from .space import Rules, SearchSpace, SearchSpaceError, enumerate_layer_states

METHODS = ("gsa", "hea", "rnd", "meta-gsa", "meta-hea")


class UsageError(Exception):
    """Bad arguments or configuration (exit 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# configuration


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    return tuple(float(x) for x in str(text).replace(",", " ").split())


def _words(text):
    return tuple(x for x in str(text).replace(",", " ").split())


_TYPES = {"int": int, "float": float, "bool": _bool}

SCHEMA: Dict[str, Dict[str, object]] = {
    "gsa": {name: _TYPES[t if isinstance(t, str) else t.__name__]
            for name, t in config_fields().items()},
    "hea": {"layers": int, "max_iters": int, "layout": _words},
    "rnd": {"n_rs": int, "retrain_all": _bool},
    "meta": {"training": _floats, "grid": _floats, "n_le": int, "n_lp": int,
             "encodings": _words},
    "task": {"hamiltonian": str, "builtin": str},
}

DEFAULTS = {
    "hea": {"layers": 3, "max_iters": 100, "layout": ("Ry", "Rz", "ring")},
    "rnd": {"n_rs": 6000, "retrain_all": False},
    "meta": {"training": (), "grid": (), "n_le": 1, "n_lp": 1,
             "encodings": ("f1", "f2", "f3")},
    "task": {},
}

META_LAYERS = 4


@dataclasses.dataclass
class Config:
    gsa: Dict[str, object]
    hea: Dict[str, object]
    rnd: Dict[str, object]
    meta: Dict[str, object]
    task: Dict[str, object]

    def gsa_config(self, **override) -> GsaConfig:
        return GsaConfig(**{**self.gsa, **override})


def parse_config(text: str, source="<config>") -> Config:
    """Flat ``key = value`` lines with optional ``[section]`` headers.

    A key outside any section must belong to exactly one section.
    """
    values: Dict[str, Dict[str, object]] = {s: {} for s in SCHEMA}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if line.startswith("["):
            if not line.endswith("]"):
                raise UsageError(f"{where}: malformed section header {line!r}")
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise UsageError(f"{where}: unknown section [{section}]")
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise UsageError(f"{where}: expected 'key = value'")
        if section is None:
            owners = [s for s in SCHEMA if key in SCHEMA[s]]
            if len(owners) != 1:
                raise UsageError(f"{where}: unknown key {key!r}" if not owners else
                                 f"{where}: ambiguous key {key!r}; put it in a section")
            sec = owners[0]
        else:
            sec = section
            if key not in SCHEMA[sec]:
                raise UsageError(f"{where}: unknown key {key!r} in [{sec}]")
        try:
            values[sec][key] = SCHEMA[sec][key](value)
        except ValueError as exc:
            raise UsageError(f"{where}: bad value for {key}: {exc}") from None
    merged = {s: {**DEFAULTS.get(s, {}), **values[s]} for s in SCHEMA}
    cfg = Config(**merged)
    try:
        cfg.gsa_config()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{source}: {exc}") from None
    return cfg


def load_config(path: Optional[str]) -> Config:
    if path is None:
        return parse_config("")
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path)


def parse_seeds(text: str) -> List[int]:
    """``"0-4"``, ``"1,5,9"`` or a mix; seeds must be distinct."""
    seeds: List[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            lo, sep, hi = part.partition("-")
            if sep and lo:
                a, b = int(lo), int(hi)
                if b < a:
                    raise UsageError(f"empty seed range {part!r}")
                seeds.extend(range(a, b + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise UsageError(f"bad seed list {text!r}") from None
    if not seeds:
        raise UsageError("no seeds given")
    if len(set(seeds)) != len(seeds):
        raise UsageError(f"duplicate seeds in {text!r}")
    return seeds


# ---------------------------------------------------------------------------
# task sources


def _hamiltonian_source(args, cfg: Config):
    file = args.hamiltonian or (None if args.builtin else cfg.task.get("hamiltonian"))
    builtin = args.builtin or (None if args.hamiltonian else cfg.task.get("builtin"))
    if args.hamiltonian and args.builtin:
        raise UsageError("give either --hamiltonian or --builtin, not both")
    if not file and not builtin:
        raise UsageError("no task: pass --hamiltonian FILE or --builtin NAME:N[:PARAMS]")
    return file, builtin


def load_task(args, cfg: Config) -> TaskSpec:
    file, builtin = _hamiltonian_source(args, cfg)
    if file:
        if not os.path.exists(file):
            raise FileNotFoundError(f"Hamiltonian file not found: {file}")
        try:
            return TaskSpec.ground_state(load_hamiltonian(file))
        except HamiltonianError as exc:
            raise HamiltonianError(f"{file}: {exc}") from None
    try:
        return TaskSpec.ground_state(parse_builtin(builtin))
    except HamiltonianError as exc:
        raise UsageError(str(exc)) from None


def load_family(args, cfg: Config):
    from .meta import HamiltonianFamily

    file, builtin = _hamiltonian_source(args, cfg)
    training = cfg.meta["training"] or None
    if file:
        if not os.path.exists(file):
            raise FileNotFoundError(f"family file not found: {file}")
        return HamiltonianFamily.from_file(file, training)
    parts = builtin.split(":")
    if len(parts) not in (2, 3):
        raise UsageError("meta builtin looks like NAME:N[:FIXED], delta is the first parameter")
    if not training:
        raise UsageError("meta runs on a builtin family need [meta] training = ...")
    try:
        fixed = [float(x) for x in parts[2].split(",")] if len(parts) == 3 and parts[2] else []
        return HamiltonianFamily.builtin(parts[0], int(parts[1]), training, fixed)
    except (ValueError, HamiltonianError) as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands


def _fmt(x):
    return "" if x is None else repr(float(x))


def summary_csv(records: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "final_energy", "abs_error", "quantum_cost"])
    for r in records:
        w.writerow([r.seed, _fmt(r.cost), _fmt(r.abs_error), r.quantum_cost])
    if records:
        finals = [r.cost for r in records]
        errs = [r.abs_error for r in records if r.abs_error is not None]
        qc = [r.quantum_cost for r in records]
        exact = records[0].exact
        w.writerow(["mean", _fmt(np.mean(finals)), _fmt(np.mean(errs)) if errs else "",
                    _fmt(np.mean(qc))])
        w.writerow(["best", _fmt(min(finals)), _fmt(min(errs)) if errs else "", min(qc)])
        w.writerow(["mse", _fmt(mse(finals, exact)) if exact is not None else "", "", ""])
    return buf.getvalue()


def _run_one(method, seed, args, cfg: Config) -> RunRecord:
    over = {"seed": seed}
    if args.noise is not None:
        over["noise"] = args.noise == "on"
    if method.startswith("meta") and "n_layers" not in cfg.gsa:
        over["n_layers"] = META_LAYERS
    gcfg = cfg.gsa_config(**over)
    if method == "gsa":
        return run_gsa(load_task(args, cfg), gcfg)
    if method == "hea":
        return run_hea(load_task(args, cfg), cfg.hea["layers"], gcfg,
                       cfg.hea["max_iters"], cfg.hea["layout"])
    if method == "rnd":
        return run_rnd(load_task(args, cfg), cfg.rnd["n_rs"], gcfg, cfg.rnd["retrain_all"])
    from .meta import run_meta_gsa, run_meta_hea

    family = load_family(args, cfg)
    grid = cfg.meta["grid"] or None
    if method == "meta-gsa":
        return run_meta_gsa(family, gcfg, grid, cfg.meta["encodings"])
    return run_meta_hea(family, cfg.meta["n_le"], cfg.meta["n_lp"], gcfg,
                        cfg.hea["max_iters"], grid)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    seeds = parse_seeds(args.seeds)
    method = args.method
    os.makedirs(args.out, exist_ok=True)
    records = []
    try:
        for seed in seeds:
            rec = _run_one(method, seed, args, cfg)
            stem = os.path.join(args.out, f"{method}_seed{seed}")
            with open(stem + ".json", "w", encoding="utf-8") as fh:
                fh.write(rec.to_json())
            with open(stem + "_trace.csv", "w", encoding="utf-8") as fh:
                fh.write(rec.trace_csv())
            records.append(rec)
            err = "" if rec.abs_error is None else f" abs_error={rec.abs_error:.6g}"
            print(f"seed {seed}: energy={rec.cost:.10g}{err} quantum_cost={rec.quantum_cost}")
    finally:
        # completed seeds are kept even when a later one fails
        with open(os.path.join(args.out, f"{method}_summary.csv"), "w", encoding="utf-8") as fh:
            fh.write(summary_csv(records))
    return 0


def cmd_enumerate(args) -> int:
    cfg = load_config(args.config)
    n, n_layers = args.qubits, args.layers
    if n < 1 or n_layers < 1:
        raise UsageError("--qubits and --layers must be positive")
    if not args.constrained:
        count = len(enumerate_layer_states(n)) ** n_layers
        paths = None
        if args.list:
            import itertools
            from .space import AnsatzPath

            states = enumerate_layer_states(n)
            paths = (AnsatzPath(c) for c in itertools.product(states, repeat=n_layers))
    else:
        rules = Rules(bool(cfg.gsa.get("ry_after_ry", False)))
        space = SearchSpace(n, n_layers, rules, budget=args.budget,
                            exact_max_qubits=max(n, cfg.gsa.get("exact_max_qubits", 4)))
        count = space.count()
        paths = space.enumerate_paths() if args.list else None
    print(count)
    if paths is not None:
        with open(args.list, "w", encoding="utf-8") as fh:
            for p in paths:
                fh.write(p.to_text() + "\n\n")
    return 0


def cmd_exact(args) -> int:
    cfg = load_config(args.config)
    task = load_task(args, cfg)
    e = exact_ground_energy(task.hamiltonian)
    print(repr(float(f"{e:.12g}")))
    return 0


def cmd_plotdata(args) -> int:
    files = sorted(glob.glob(os.path.join(args.records, "*.json")))
    records = []
    for f in files:
        with open(f, encoding="utf-8") as fh:
            try:
                records.append(RunRecord.from_json(fh.read()))
            except (ValueError, TypeError, KeyError):
                continue
    if not records:
        raise FileNotFoundError(f"no run records found in {args.records}")
    out = args.out or args.records
    os.makedirs(out, exist_ok=True)
    records.sort(key=lambda r: (r.method, r.seed))
    with open(os.path.join(out, "traces.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "seed", "quantum_cost", "best_cost", "stage"])
        for r in records:
            for q, c, s in r.trace:
                w.writerow([r.method, r.seed, q, repr(float(c)), s])
    means = {}
    for m in {r.method for r in records}:
        means[m] = float(np.mean([r.cost for r in records if r.method == m]))
    with open(os.path.join(out, "scatter.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "seed", "quantum_cost", "final_error", "final_cost",
                    "mean_final_cost"])
        for r in records:
            w.writerow([r.method, r.seed, r.quantum_cost, _fmt(r.abs_error), repr(r.cost),
                        repr(means[r.method])])
    print(f"{len(records)} records -> {out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gsavqe", description="Variable-ansatz VQE search")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def task_flags(sp):
        sp.add_argument("--hamiltonian", help="Pauli-sum file (or family file for meta methods)")
        sp.add_argument("--builtin", help="built-in model NAME:N[:PARAMS], e.g. tfim:4:1.0")

    r = sub.add_parser("run", help="run a method over a batch of seeds")
    r.add_argument("--config", help="settings file (see data/example.cfg)")
    r.add_argument("--method", choices=METHODS, default="gsa")
    r.add_argument("--seeds", default="0", help="seed list such as 0-19 or 1,5,9")
    r.add_argument("--out", default="runs", help="output directory (default: runs)")
    r.add_argument("--noise", choices=("on", "off"), help="override the config's noise setting")
    task_flags(r)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("enumerate", help="count (and optionally list) ansatz paths")
    e.add_argument("--config", help="settings file; reads ry_after_ry")
    e.add_argument("-n", "--qubits", type=int, required=True)
    e.add_argument("-l", "--layers", type=int, required=True)
    g = e.add_mutually_exclusive_group()
    g.add_argument("--constrained", dest="constrained", action="store_true", default=True)
    g.add_argument("--unconstrained", dest="constrained", action="store_false")
    e.add_argument("--list", metavar="FILE", help="write every path to FILE")
    e.add_argument("--budget", type=int, default=5_000_000,
                   help="memo-table entry limit for constrained counting")
    e.set_defaults(func=cmd_enumerate)

    x = sub.add_parser("exact", help="print the exact ground energy")
    x.add_argument("--config", help="settings file; may name the task")
    task_flags(x)
    x.set_defaults(func=cmd_exact)

    d = sub.add_parser("plotdata", help="merge run records into plotting CSVs")
    d.add_argument("records", help="directory holding run record JSON files")
    d.add_argument("--out", help="output directory (default: the records directory)")
    d.set_defaults(func=cmd_plotdata)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, HamiltonianError, SearchSpaceError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
