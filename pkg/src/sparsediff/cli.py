"""Command line entry point: ``sparsediff <subcommand> [--config FILE] ...``.

Configuration is TOML with one table per subcommand plus the shared tables
``[graph]`` and ``[marks]``.  Every key is validated before any work starts
and unknown keys are rejected.  A manifest written by a previous run is also
accepted as ``--config``; it reproduces that run's outputs bitwise.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import fields
from importlib import metadata

import numpy as np

from .diffusion import (DriftSpec, NoiseSource, brownian, free_drift, kuramoto,
                        kuramoto_unnormalized, simulate, simulate_truncated)
from .errors import ConfigError
from .graph_models import (Binomial, Deterministic, Empirical, Poisson, complete_graph, path_graph,
                           sample_cycle, sample_erdos_renyi, sample_gw_tree, sample_random_regular)
from .hydrodynamics import GraphModel, convergence_study
from .kuramoto_experiments import SyncConfig, all_regimes, phase_diagram
from .locality import locality_experiment
from .network import MarkLaw, MarkLaws, MarkedNetwork, attach_iid_marks
from . import persist
from .seeding import derive_seed

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SEED_ENV = "SPARSEDIFF_SEED"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
SUBCOMMANDS = ("sample-graph", "simulate", "locality", "converge", "phase-diagram")

_GRAPH_KEYS = {"model", "n", "p", "mean_degree", "d", "depth", "offspring", "root_offspring", "max_tries"}
_MARK_KEYS = {"weight", "media", "initial"}
_DRIFT_KEYS = {"drift", "K", "noise_scale"}
_SECTION_KEYS = {
    "sample-graph": set(),
    "simulate": {"network", "T", "dt", "record_every", "substeps", "root", "radius"} | _DRIFT_KEYS,
    "locality": {"root", "s", "radii", "reference_radius", "T", "dt"} | _DRIFT_KEYS,
    "converge": {"family", "mean_degree", "sizes", "replications", "limit", "limit_size",
                 "depth", "offspring", "root_offspring", "T", "dt", "n_time_points",
                 "compute_floor"} | _DRIFT_KEYS,
    "phase-diagram": {f.name for f in fields(SyncConfig)} | {"regimes"},
}
_TOP_KEYS = {"seed", "workers", "graph", "marks", "sample-graph", "simulate", "locality",
             "converge", "phase-diagram"}


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# ---------------------------------------------------------------------------
# Config parsing


def load_config(path: str | None) -> tuple[dict, bytes]:
    if path is None:
        return {}, b""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    if path.endswith(".json"):
        try:
            cfg = json.loads(raw)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from None
        cfg = cfg.get("config", cfg)
    else:
        try:
            cfg = tomllib.loads(raw.decode())
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"{path}: {err}") from None
    validate_config(cfg)
    return cfg, raw


def validate_config(cfg: dict) -> None:
    bad = set(cfg) - _TOP_KEYS
    if bad:
        raise ConfigError(f"unknown top-level keys: {sorted(bad)}")
    for name, allowed in [("graph", _GRAPH_KEYS), ("marks", _MARK_KEYS)] + list(_SECTION_KEYS.items()):
        sec = cfg.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a table")
        bad = set(sec) - allowed
        if bad:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")


def _req(sec: dict, key: str, where: str):
    if key not in sec:
        raise ConfigError(f"[{where}] needs '{key}'")
    return sec[key]


def parse_offspring(spec, where="graph"):
    """``{kind = "binomial", n = 3, p = 0.667}`` and friends."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"[{where}] offspring must be a table with a 'kind'")
    k = spec["kind"]
    try:
        if k == "poisson":
            return Poisson(spec["c"])
        if k == "binomial":
            return Binomial(spec["n"], spec["p"])
        if k == "deterministic":
            return Deterministic(spec["d"])
        if k == "empirical":
            return Empirical(spec["pmf"])
    except KeyError as err:
        raise ConfigError(f"[{where}] offspring '{k}' needs {err}") from None
    raise ConfigError(f"[{where}] unknown offspring kind {k!r}")


def parse_marks(sec: dict) -> MarkLaws:
    try:
        return MarkLaws(MarkLaw.parse(sec.get("weight", 1.0)), MarkLaw.parse(sec.get("media", 0.0)),
                        MarkLaw.parse(sec.get("initial", 0.0)))
    except (ValueError, TypeError, KeyError) as err:
        raise ConfigError(f"[marks] {err}") from None


def parse_drift(sec: dict, where: str) -> DriftSpec:
    name = sec.get("drift", "kuramoto")
    eps = float(sec.get("noise_scale", 1.0))
    if name == "kuramoto":
        return kuramoto(eps)
    if name == "kuramoto_unnormalized":
        return kuramoto_unnormalized(float(sec.get("K", 1.0)), eps)
    if name == "free":
        return free_drift(eps)
    if name == "brownian":
        return brownian(eps)
    raise ConfigError(f"[{where}] unknown drift {name!r}")


def build_graph(sec: dict, seed: int):
    """Returns (graph, tree or None)."""
    model = _req(sec, "model", "graph")
    try:
        if model == "erdos_renyi":
            n = int(_req(sec, "n", "graph"))
            p = sec["p"] if "p" in sec else float(_req(sec, "mean_degree", "graph")) / n
            return sample_erdos_renyi(n, float(p), derive_seed(seed, "graph")), None
        if model == "random_regular":
            return sample_random_regular(int(_req(sec, "n", "graph")), int(_req(sec, "d", "graph")),
                                         derive_seed(seed, "graph"), int(sec.get("max_tries", 10000))), None
        if model == "cycle":
            return sample_cycle(int(_req(sec, "n", "graph"))), None
        if model == "path":
            return path_graph(int(_req(sec, "n", "graph"))), None
        if model == "complete":
            return complete_graph(int(_req(sec, "n", "graph"))), None
        if model == "gw":
            law = parse_offspring(_req(sec, "offspring", "graph"))
            root = parse_offspring(sec["root_offspring"]) if "root_offspring" in sec else law
            t = sample_gw_tree(law, root, int(_req(sec, "depth", "graph")), derive_seed(seed, "graph"))
            return t.graph, t
    except (ValueError, TypeError) as err:
        raise ConfigError(f"[graph] {err}") from None
    raise ConfigError(f"[graph] unknown model {model!r}")


def resolve_seed(cli_seed, cfg: dict) -> tuple[int, str]:
    if cli_seed is not None:
        return cli_seed, "cli"
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env, 0), "env"
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if "seed" in cfg:
        return int(cfg["seed"]), "config"
    return 0, "default"


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


# ---------------------------------------------------------------------------
# Subcommands.  Each returns (outputs {filename: text}, extra manifest fields).


def _network_for(cfg: dict, sec: dict, seed: int) -> MarkedNetwork:
    path = sec.get("network")
    if path is not None:
        try:
            with open(path) as fh:
                return MarkedNetwork.from_json_dict(json.load(fh))
        except FileNotFoundError:
            raise FileNotFoundError(f"network file not found: {path}") from None
    g, _ = build_graph(_req(cfg, "graph", "graph"), seed)
    return attach_iid_marks(g, parse_marks(cfg.get("marks", {})), derive_seed(seed, "marks"))


def cmd_sample_graph(cfg, seed, workers, form):
    g, tree = build_graph(_req(cfg, "graph", "graph"), seed)
    extra = {"graph_hash": g.content_hash(), "vertices": g.n, "edges": g.edge_count}
    if "marks" in cfg:
        doc = attach_iid_marks(g, parse_marks(cfg["marks"]), derive_seed(seed, "marks")).to_json_dict()
    else:
        doc = tree.to_json_dict() if tree is not None else g.to_json_dict()
    if tree is not None:
        sizes = tree.generation_sizes()
        extra["generation_sizes"] = sizes.tolist()
        extra["survival_depth"] = int(np.max(np.flatnonzero(sizes > 0)))
        if "marks" in cfg:
            doc["root"], doc["depth"] = int(tree.root), tree.depth_of.tolist()
    return {"graph.json": persist.json_text(doc)}, extra


def cmd_simulate(cfg, seed, workers, form):
    sec = cfg.get("simulate", {})
    net = _network_for(cfg, sec, seed)
    drift = parse_drift(sec, "simulate")
    T, dt = float(_req(sec, "T", "simulate")), float(sec.get("dt", 0.01))
    noise = NoiseSource(derive_seed(seed, "noise"), int(sec.get("substeps", 1)))
    kw = {"record_every": int(sec.get("record_every", 1))}
    if "radius" in sec:
        ens = simulate_truncated(net, int(sec.get("root", 0)), int(sec["radius"]), drift, T, dt, noise, **kw)
    else:
        ens = simulate(net, drift, T, dt, noise, **kw)
    extra = {"network_hash": net.content_hash(), "noise_seed": noise.master_seed}
    if form == "json":
        doc = {"t": ens.times, "ids": ens.ids, "paths": ens.paths.T, "meta": ens.meta}
        return {"trajectory.json": persist.json_text(doc)}, extra
    return {"trajectory.csv": persist.csv_text(*persist.trajectory_rows(ens))}, extra


def cmd_locality(cfg, seed, workers, form):
    sec = cfg.get("locality", {})
    net = _network_for(cfg, sec, seed)
    drift = parse_drift(sec, "locality")
    radii = [int(r) for r in _req(sec, "radii", "locality")]
    rep = locality_experiment(net, int(sec.get("root", 0)), int(sec.get("s", 0)), radii, drift,
                              float(sec.get("T", 1.0)), float(sec.get("dt", 1e-3)),
                              derive_seed(seed, "noise"), sec.get("reference_radius"))
    extra = {"network_hash": net.content_hash(), "fitted_C": rep.fitted_C,
             "strictly_decreasing": rep.strictly_decreasing, "decay_onset": rep.decay_onset,
             "noise_seed": rep.meta["seed"], "reference_radius": rep.meta["reference_radius"]}
    header = ["r", "boundary_size", "gap", "envelope", "fitted_C"]
    if form == "json":
        return {"locality.json": persist.json_text([dict(zip(header, r)) for r in rep.rows()])}, extra
    return {"locality.csv": persist.csv_text(header, rep.rows())}, extra


def _graph_model(sec: dict, family: str, marks: MarkLaws, drift: DriftSpec) -> GraphModel:
    kw = {"family": family, "marks": marks, "drift": drift,
          "T": float(sec.get("T", 1.0)), "dt": float(sec.get("dt", 0.01)),
          "n_time_points": int(sec.get("n_time_points", 4)),
          "mean_degree": float(sec.get("mean_degree", 2.0)), "depth": int(sec.get("depth", 12))}
    if "offspring" in sec:
        kw["law"] = parse_offspring(sec["offspring"], "converge")
    else:
        kw["law"] = Poisson(kw["mean_degree"])
    if "root_offspring" in sec:
        kw["root_law"] = parse_offspring(sec["root_offspring"], "converge")
    return GraphModel(**kw)


def cmd_converge(cfg, seed, workers, form):
    sec = cfg.get("converge", {})
    marks = parse_marks(cfg["marks"]) if "marks" in cfg else GraphModel().marks
    drift = parse_drift(sec, "converge")
    try:
        model = _graph_model(sec, sec.get("family", "erdos_renyi"), marks, drift)
        limit = _graph_model(sec, sec.get("limit", "gw"), marks, drift)
        model.record_every()
    except ValueError as err:
        raise ConfigError(f"[converge] {err}") from None
    sizes = [int(n) for n in sec.get("sizes", [200, 800, 3200])]
    table = convergence_study(model, sizes, limit, int(sec.get("replications", 5)), seed,
                              int(sec.get("limit_size", 2000)), bool(sec.get("compute_floor", False)),
                              workers)
    rows = [(r.n, r.statistic, r.estimate, r.stderr) for r in table.rows]
    extra = {"model_hash": model.config_hash(), "task_seeds": table.seeds,
             "limit_size": table.limit_size}
    header = ["n", "statistic", "estimate", "stderr"]
    if form == "json":
        return {"convergence.json": persist.json_text([dict(zip(header, r)) for r in rows])}, extra
    return {"convergence.csv": persist.csv_text(header, rows)}, extra


def cmd_phase_diagram(cfg, seed, workers, form):
    sec = dict(cfg.get("phase-diagram", {}))
    regimes = sec.pop("regimes", "single")
    try:
        base = SyncConfig(**sec)
    except (ValueError, TypeError) as err:
        raise ConfigError(f"[phase-diagram] {err}") from None
    if regimes == "all":
        configs = all_regimes(base)
    elif regimes == "single":
        configs = [base]
    else:
        raise ConfigError("[phase-diagram] regimes must be 'all' or 'single'")
    outs, extra = {}, {"surfaces": []}
    for c in configs:
        surf = phase_diagram(c, seed, workers)
        tag = f"{c.model}_{c.theta0_mode}_{c.omega_mode}"
        man = surf.manifest()
        man["files"] = []
        if form == "json":
            name = f"sync_{tag}.json"
            outs[name] = persist.json_text({"h": surf.h_values, "K": surf.K_values,
                                            "mean": _nan_none(surf.mean), "stderr": _nan_none(surf.stderr)})
            man["files"].append(name)
        else:
            for name, tab in ((f"sync_{tag}.csv", surf.mean), (f"sync_{tag}_stderr.csv", surf.stderr)):
                outs[name] = persist.csv_text(*persist.surface_rows(surf.h_values, surf.K_values, tab))
                man["files"].append(name)
        extra["surfaces"].append(man)
    return outs, extra


def _nan_none(a):
    return [[None if math.isnan(x) else float(x) for x in row] for row in a]


COMMANDS = {"sample-graph": cmd_sample_graph, "simulate": cmd_simulate, "locality": cmd_locality,
            "converge": cmd_converge, "phase-diagram": cmd_phase_diagram}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML config, or a manifest.json to rerun")
    common.add_argument("--seed", type=_u64, metavar="U64",
                        help=f"master seed (overrides ${SEED_ENV} and the config)")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory")
    common.add_argument("--workers", type=int, metavar="N", help="worker processes")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    p = argparse.ArgumentParser(prog="sparsediff", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=_version())
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=COMMANDS[name].__name__[4:].replace("_", " "))
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as err:
        return EXIT_OK if err.code == 0 else EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        cfg, raw = load_config(args.config)
        seed, source = resolve_seed(args.seed, cfg)
        workers = args.workers if args.workers is not None else int(cfg.get("workers", 1))
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        outs, extra = COMMANDS[args.command](cfg, seed, workers, args.format)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as err:
        print(f"io error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # noqa: BLE001 - every other failure is a runtime error
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    for name, text in outs.items():
        persist.atomic_write(os.path.join(args.out, name), text)
    canon = json.dumps(cfg, sort_keys=True, default=str).encode()
    manifest = {
        "command": args.command, "tool_version": _version(),
        "config": {**cfg, "seed": seed}, "config_hash": hashlib.blake2b(canon, digest_size=8).hexdigest(),
        "input_hash": hashlib.blake2b(raw + _input_bytes(cfg, args.command), digest_size=16).hexdigest(),
        "master_seed": seed, "seed_source": source, "seed_env": os.environ.get(SEED_ENV),
        "workers": workers, "format": args.format, "wall_clock_s": time.perf_counter() - t0,
        "outputs": {n: hashlib.blake2b(t.encode(), digest_size=16).hexdigest() for n, t in outs.items()},
        **extra,
    }
    persist.write_json(os.path.join(args.out, "manifest.json"), manifest)
    return EXIT_OK


def _input_bytes(cfg, command) -> bytes:
    path = cfg.get(command, {}).get("network")
    if path and os.path.exists(path):
        with open(path, "rb") as fh:
            return fh.read()
    return b""


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
