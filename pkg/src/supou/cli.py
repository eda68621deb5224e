"""Command line front end: ``supou {tau,simulate,estimate,figure}``.

Configs are JSON documents.  Model fields sit at the top level with the names
of :data:`supou.model.QUADRUPLE_FIELDS`; the experiment fields are::

    {"grid": {"t0": 1, "ratio": 2, "count": 13}, "n_paths": 2000,
     "q_grid": [0.5, 1.0] | {"start": .., "stop": .., "num": ..},
     "eps_cutoff": 1e-3, "n_ou": 64, "burn_in": null, "seed": 1, "workers": 1,
     "output_dir": "out",
     "estimator": {"window_frac": 0.25, "batching": 32, "kind": "mean", "tolerance": 0.15}}

A manifest written by ``simulate`` is itself a valid config.  Exit codes: 0 on
success, 2 for invalid configs or inputs, 3 for I/O failures.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .estimate import (DEFAULT_CHUNK, MomentAccumulator, chunk_stats, check_q_values, compare,
                       fit_breakpoint, fit_tau, format_report, read_moments, write_batches,
                       write_moments, write_tau)
from .model import QUADRUPLE_FIELDS, CharacteristicQuadruple, ModelError, check, classify
from .sim import (SimOptions, TimeGrid, default_burn_in, simulate_ensemble, simulate_path,
                  write_path_dump)
from .theory import tau_component, tau_total

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 2, 3

PANEL_LETTERS = ("a", "b", "c", "d", "e", "f")

# one quadruple per figure panel; each lands in the matching theorem case
DEFAULT_PANELS = {
    "a": dict(gamma=1.5, pi_shape=0.7, beta=0.3),
    "b": dict(gamma=1.8, pi_shape=0.4, beta=0.3),
    "c": dict(gamma=1.8, pi_shape=0.4, beta=1.5),
    "d": dict(gamma=1.5, pi_shape=0.1, beta=1.7),
    "e": dict(gamma=1.2, pi_shape=0.5, beta=0.3, b=1.0),
    "f": dict(gamma=1.7, pi_shape=0.5, beta=0.3, b=1.0),
}
_PANEL_COMMON = dict(w_plus=1.0, w_minus=1.0, c_plus=0.5, c_minus=0.5, pi_rate=1.0)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    quadruple: dict
    grid: TimeGrid = field(default_factory=TimeGrid)
    n_paths: int = 1000
    q_grid: list | None = None
    eps_cutoff: float = 1e-3
    n_ou: int = 64
    burn_in: float | None = None
    seed: int = 0
    workers: int = 1
    output_dir: str = "out"
    window_frac: float = 0.25
    batching: int = 32
    estimator: str = "mean"
    tolerance: float = 0.15
    chunk_size: int = DEFAULT_CHUNK

    @property
    def model(self) -> CharacteristicQuadruple:
        return CharacteristicQuadruple.from_mapping(self.quadruple)

    @property
    def options(self) -> SimOptions:
        return SimOptions(self.eps_cutoff, self.n_ou, self.burn_in)

    def q_values(self) -> np.ndarray:
        if self.q_grid is not None:
            return np.asarray(self.q_grid, dtype=float)
        bound = self.model.moment_bound
        hi = 3.0 if math.isinf(bound) else 0.95 * bound
        return np.linspace(0.1, hi, 16)

    @classmethod
    def from_mapping(cls, doc: dict) -> "ExperimentConfig":
        if "config" in doc and isinstance(doc["config"], dict):
            doc = doc["config"]  # a manifest
        quad = {k: doc[k] for k in QUADRUPLE_FIELDS if k in doc}
        grid_doc = doc.get("grid", {})
        est = doc.get("estimator", {})
        try:
            grid = TimeGrid(float(grid_doc.get("t0", 1.0)), float(grid_doc.get("ratio", 2.0)),
                            int(grid_doc.get("count", 11)))
            q_grid = doc.get("q_grid")
            if isinstance(q_grid, dict):
                q_grid = np.linspace(float(q_grid["start"]), float(q_grid["stop"]),
                                     int(q_grid["num"])).tolist()
            elif q_grid is not None:
                q_grid = [float(x) for x in q_grid]
            cfg = cls(
                quadruple=quad, grid=grid, n_paths=int(doc.get("n_paths", 1000)),
                q_grid=q_grid, eps_cutoff=float(doc.get("eps_cutoff", 1e-3)),
                n_ou=int(doc.get("n_ou", 64)),
                burn_in=None if doc.get("burn_in") is None else float(doc["burn_in"]),
                seed=int(doc.get("seed", 0)), workers=int(doc.get("workers", 1)),
                output_dir=str(doc.get("output_dir", "out")),
                window_frac=float(est.get("window_frac", 0.25)),
                batching=int(est.get("batching", 32)), estimator=str(est.get("kind", "mean")),
                tolerance=float(est.get("tolerance", 0.15)),
                chunk_size=int(doc.get("chunk_size", DEFAULT_CHUNK)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None
        cfg.validate()
        return cfg

    def validate(self) -> None:
        check(self.model)
        SimOptions(self.eps_cutoff, self.n_ou, self.burn_in)
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.estimator not in ("mean", "median"):
            raise ConfigError(f"estimator kind must be 'mean' or 'median', got {self.estimator!r}")
        check_q_values(self.q_values(), self.model.moment_bound)

    def to_mapping(self) -> dict:
        doc = dict(self.quadruple)
        doc.update(
            grid={"t0": self.grid.t0, "ratio": self.grid.ratio, "count": self.grid.count},
            n_paths=self.n_paths, q_grid=[float(x) for x in self.q_values()],
            eps_cutoff=self.eps_cutoff, n_ou=self.n_ou, burn_in=self.burn_in, seed=self.seed,
            workers=self.workers, output_dir=self.output_dir, chunk_size=self.chunk_size,
            estimator={"window_frac": self.window_frac, "batching": self.batching,
                       "kind": self.estimator, "tolerance": self.tolerance})
        return doc


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return ExperimentConfig.from_mapping(doc)


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    upd = {}
    if getattr(args, "seed", None) is not None:
        upd["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        upd["workers"] = args.workers
    if getattr(args, "paths", None) is not None:
        upd["n_paths"] = args.paths
    if getattr(args, "out", None) is not None:
        upd["output_dir"] = args.out
    cfg = replace(cfg, **upd)
    cfg.validate()
    return cfg


def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _num(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------- tau

def theory_bundle(q: CharacteristicQuadruple) -> dict:
    label = classify(q)
    comps = {c: tau_component(q, c).to_record() for c in label.components}
    return {"label": label.describe(), "theorem_case": label.theorem_case,
            "panel": label.panel, "total": tau_total(q).to_record(), "components": comps}


def cmd_tau(cfg: ExperimentConfig) -> str:
    q = cfg.model
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    total = tau_total(q)
    comps = {c: tau_component(q, c) for c in ("X1", "X2", "X3")
             if getattr(q, f"has_{c.lower()}")}
    _write_json(os.path.join(out, "theory.json"), theory_bundle(q))
    with open(os.path.join(out, "tau_theory.tsv"), "w") as fh:
        names = list(comps)
        fh.write("\t".join(["q", "tau_theory", "kind"] + [f"tau_{n}" for n in names]) + "\n")
        for qq in cfg.q_values():
            row = [_num(qq), _num(total(qq)), total.kind_at(qq)]
            row += [_num(comps[n](qq)) for n in names]
            fh.write("\t".join(row) + "\n")
    return total.label


# ---------------------------------------------------------------- simulate

def _partition(n_chunks: int, workers: int) -> list[list[int]]:
    """Contiguous blocks of chunk ids, one per worker."""
    edges = np.linspace(0, n_chunks, workers + 1).round().astype(int)
    return [list(range(a, b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _simulate_block(payload):
    quad_doc, grid, options, seed, n_paths, q_values, batching, chunk_size, chunk_ids = payload
    q = CharacteristicQuadruple.from_mapping(quad_doc)
    burn_in = options.burn_in if options.burn_in is not None else default_burn_in(n_paths)
    out = []
    for cid in chunk_ids:
        lo, hi = cid * chunk_size, min((cid + 1) * chunk_size, n_paths)
        xs = np.stack([simulate_path(q, grid, options, seed, j, burn_in).xstar
                       for j in range(lo, hi)])
        out.append((cid, chunk_stats(np.arange(lo, hi), xs, q_values, batching)))
    return out


def run_ensemble(cfg: ExperimentConfig):
    """Moment table of the configured ensemble, identical for any worker count."""
    q = cfg.model
    qv = cfg.q_values()
    acc = MomentAccumulator(cfg.grid.values, qv, cfg.batching, cfg.chunk_size, cfg.n_paths,
                            moment_bound=q.moment_bound)
    n_chunks = -(-cfg.n_paths // cfg.chunk_size)
    blocks = _partition(n_chunks, min(cfg.workers, n_chunks))
    payloads = [(cfg.quadruple, cfg.grid, cfg.options, cfg.seed, cfg.n_paths, qv,
                 cfg.batching, cfg.chunk_size, ids) for ids in blocks]
    if len(payloads) == 1:
        results = map(_simulate_block, payloads)
    else:
        pool = ProcessPoolExecutor(max_workers=len(payloads))
        results = pool.map(_simulate_block, payloads)
    try:
        for block in results:
            for cid, stats in block:
                acc.merge_chunk(cid, stats)
    finally:
        if len(payloads) > 1:
            pool.shutdown()
    return acc.table()


def manifest(cfg: ExperimentConfig, command: str) -> dict:
    return {"tool": "supou", "code_version": __version__, "command": command,
            "seed": cfg.seed, "config": cfg.to_mapping()}


def cmd_simulate(cfg: ExperimentConfig, dump_paths: bool = False):
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    table = run_ensemble(cfg)
    write_moments(table, os.path.join(out, "moments.tsv"))
    write_batches(table, os.path.join(out, "batches.tsv"))
    _write_json(os.path.join(out, "manifest.json"), manifest(cfg, "simulate"))
    if dump_paths:
        opts = replace(cfg.options, keep_components=True)
        with open(os.path.join(out, "paths.tsv"), "w") as fh:
            write_path_dump(simulate_ensemble(cfg.model, cfg.grid, cfg.n_paths, opts, cfg.seed),
                            fh)
    return table


# ---------------------------------------------------------------- estimate

def estimate_table(cfg: ExperimentConfig, table):
    q = cfg.model
    check_q_values(table.q_values, q.moment_bound, bound_frac=1.0)
    theory = tau_total(q)
    est = fit_tau(table, window_frac=cfg.window_frac, estimator=cfg.estimator)
    bp_error = None
    if len(est.q_values) >= 8:
        est.breakpoint = fit_breakpoint(est)
    else:
        bp_error = "fewer than 8 q values"
    comp = compare(est, theory, cfg.tolerance)
    return est, comp, theory, bp_error


def cmd_estimate(cfg: ExperimentConfig, moments_path: str | None = None):
    out = cfg.output_dir
    moments_path = moments_path or os.path.join(out, "moments.tsv")
    batches = os.path.join(os.path.dirname(moments_path) or ".", "batches.tsv")
    table = read_moments(moments_path, batches if os.path.exists(batches) else None)
    est, comp, theory, bp_error = estimate_table(cfg, table)
    os.makedirs(out, exist_ok=True)
    write_tau(est, comp, os.path.join(out, "tau.tsv"))
    report = format_report(est, comp, theory, bp_error)
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write(report)
    return est, comp, report


# ---------------------------------------------------------------- figure

def default_panel_configs() -> dict:
    return {k: dict(_PANEL_COMMON, **v) for k, v in DEFAULT_PANELS.items()}


def panel_configs(doc: dict | None) -> dict[str, ExperimentConfig]:
    """Per-panel configs: ``doc["panels"][letter]`` overlaid on the shared top-level fields."""
    if doc is None:
        doc = {"panels": default_panel_configs()}
    panels = doc.get("panels")
    if not isinstance(panels, dict):
        raise ConfigError("figure config needs a 'panels' object keyed by a..f")
    missing = [p for p in PANEL_LETTERS if p not in panels]
    if missing:
        raise ConfigError(f"missing panel configs: {missing}")
    shared = {k: v for k, v in doc.items() if k != "panels"}
    out = {}
    for letter in PANEL_LETTERS:
        cfg = ExperimentConfig.from_mapping({**shared, **panels[letter]})
        got = classify(cfg.model).panel
        if got != letter:
            raise ConfigError(f"panel ({letter}) config falls in panel ({got})")
        out[letter] = cfg
    return out


def cmd_figure(configs: dict[str, ExperimentConfig], out: str, empirical: bool = False,
               overrides=None) -> dict:
    os.makedirs(out, exist_ok=True)
    index = {"code_version": __version__, "empirical": empirical, "panels": {}}
    for letter, cfg in configs.items():
        if overrides is not None:
            cfg = _apply_overrides(cfg, overrides)
        q = cfg.model
        theory = tau_total(q)
        qv = cfg.q_values()
        hat = se = np.full(len(qv), np.nan)
        if empirical:
            est = fit_tau(run_ensemble(cfg), window_frac=cfg.window_frac,
                          estimator=cfg.estimator)
            hat, se = est.tau_hat, est.stderr
        name = f"panel_{letter}.tsv"
        with open(os.path.join(out, name), "w") as fh:
            fh.write("q\ttau_theory\ttau_hat\tse\n")
            for qq, h, s in zip(qv, hat, se):
                fh.write(f"{_num(qq)}\t{_num(theory(qq))}\t{_num(h)}\t{_num(s)}\n")
        index["panels"][letter] = {"file": name, "theory": theory.to_record(),
                                   "config": cfg.to_mapping()}
    _write_json(os.path.join(out, "index.json"), index)
    return index


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="supou", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON config or manifest")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="random seed (overrides config)")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--paths", type=int, help="number of paths (overrides n_paths)")

    common(sub.add_parser("tau", help="exact scaling functions and regime label"))
    p = sub.add_parser("simulate", help="simulate an ensemble and write its moment table")
    common(p)
    p.add_argument("--dump-paths", action="store_true", help="also write every path")
    p = sub.add_parser("estimate", help="fit tau from a moment table and compare with theory")
    common(p)
    p.add_argument("--moments", help="moments file (default OUT/moments.tsv)")
    p = sub.add_parser("figure", help="plot data for the six regime panels")
    common(p, config_required=False)
    p.add_argument("--empirical", action="store_true",
                   help="also simulate each panel and add tau_hat columns")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "figure":
            doc = None
            if args.config:
                with open(args.config) as fh:
                    doc = json.load(fh)
            configs = panel_configs(doc)
            out = args.out or "figure"
            cmd_figure(configs, out, args.empirical, overrides=args)
            print(f"wrote {len(configs)} panels to {out}")
            return EXIT_OK
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "tau":
            print(cmd_tau(cfg))
        elif args.command == "simulate":
            table = cmd_simulate(cfg, args.dump_paths)
            print(f"simulated {table.n_paths} paths into {cfg.output_dir}")
        else:
            print(cmd_estimate(cfg, args.moments)[2], end="")
    except (ModelError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
