"""Command-line entry point.

Precedence for run parameters: built-in defaults < ``--config`` file < flags.
Every command prints the resolved configuration as ``key = value`` lines.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import fields
from pathlib import Path

from . import __version__
from .diffusion import AccompliceCluster, validate_tabc
from .graph import (
    apply_owner_penalty,
    build_graph,
    format_graph_tsv,
    format_owners_tsv,
    read_graph_tsv,
)
from .ingest import FULL_WINDOW, IngestError, parse_events
from .pipeline import (
    RunConfig,
    flake_odf,
    internal_density,
    parse_config_text,
    run_pipeline,
)
from .sampler import sample_subgraph
from .synth import (
    PlantedSpec,
    SpamCampaignSpec,
    overlap_preset,
    generate_campaign_log,
    generate_planted_graph,
    spec_json,
)

log = logging.getLogger("leas")

LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


class InputError(Exception):
    """Bad user input; maps to exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(message)


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


RUN_FLAGS = {
    "k": ("--k", int),
    "l": ("--l", int),
    "n_min": ("--n-min", int),
    "cap_n": ("--cap-n", int),
    "d_max": ("--d-max", int),
    "m": ("--m", float),
    "delta_t": ("--delta-t", float),
    "rho_min": ("--rho-min", float),
    "worker_count": ("--workers", int),
    "rng_seed": ("--rng-seed", int),
    "hot_target_cap": ("--hot-target-cap", int),
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    defaults = RunConfig()
    g = p.add_argument_group("run parameters")
    for name, (flag, typ) in RUN_FLAGS.items():
        g.add_argument(flag, dest=name, type=typ, default=None,
                       help=f"(default {getattr(defaults, name)})")
    g.add_argument("--krylov-order", dest="krylov_order", choices=("l", "l+1"), default=None,
                   help=f"initial Krylov space order (default {defaults.krylov_order})")
    g.add_argument("--binary-adjacency", dest="binary_adjacency", action="store_true",
                   default=None, help="ignore edge weights in the diffusion and sweep")
    g.add_argument("--config", type=Path, help="key = value config file")


def _resolve_config(args) -> RunConfig:
    values: dict = {}
    if args.config is not None:
        try:
            values.update(parse_config_text(args.config.read_text(encoding="utf-8")))
        except OSError as exc:
            raise InputError(f"cannot read config: {exc}") from exc
    for f in fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            values[f.name] = val
    try:
        return RunConfig.from_mapping(values)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _echo(cfg: RunConfig, extra: dict | None = None) -> None:
    sys.stdout.write("# resolved config\n" + cfg.to_text())
    for k, v in (extra or {}).items():
        sys.stdout.write(f"{k} = {v}\n")


def _require(path: Path | None, what: str) -> Path:
    if path is None:
        raise InputError(f"missing required --{what}")
    if not path.exists():
        raise InputError(f"{what} file not found: {path}")
    return path


def _load_graph(args):
    path = _require(args.graph, "graph")
    owners = args.owners
    if owners is not None and not owners.exists():
        raise InputError(f"owners file not found: {owners}")
    try:
        return read_graph_tsv(path, owners)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _load_bipartite(path: Path | None, window=FULL_WINDOW):
    if path is None:
        return None
    try:
        return parse_events(path, window)
    except IngestError as exc:
        raise InputError(str(exc)) from exc


def _load_seeds(args) -> list[int]:
    seeds: list[int] = list(getattr(args, "seed", None) or [])
    if args.seeds is not None:
        path = _require(args.seeds, "seeds")
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                seeds.append(int(line))
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: bad seed id {line!r}") from exc
    if not seeds:
        raise InputError("missing required --seeds (or --seed)")
    return seeds


def _out_dir(args) -> Path:
    if args.out_dir is None:
        raise InputError("missing required --out-dir")
    return args.out_dir


def _jsonl(records) -> str:
    return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in records)


def _timing_csv(timings) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed_id", "n_sampled", "lp_iters", "wall_ms"])
    for t in timings:
        w.writerow([t.seed_id, t.n_sampled, t.lp_iters, f"{t.wall_ms:.3f}"])
    return buf.getvalue()


# --- commands --------------------------------------------------------------


def cmd_build_graph(args) -> int:
    bpath = _require(args.bipartite, "bipartite")
    out = _out_dir(args)
    window = (args.window_start or 0, args.window_end if args.window_end is not None else FULL_WINDOW[1])
    if window[0] > window[1]:
        raise InputError("window start after window end")
    cfg = _resolve_config(args)
    _echo(cfg, {"window": f"{window[0]}..{window[1]}",
                "coherence_filter": args.coherence_filter,
                "owner_penalty": not args.no_owner_penalty})
    b = _load_bipartite(bpath, window)
    g = build_graph(b, cfg.delta_t if args.coherence_filter else None, cfg.hot_target_cap)
    if not args.no_owner_penalty:
        g = apply_owner_penalty(g)
    atomic_write(out / "graph.tsv", format_graph_tsv(g))
    atomic_write(out / "owners.tsv", format_owners_tsv(g.owner_index))
    atomic_write(out / "rejects.txt", b.report.to_text())
    log.info("graph: %d nodes, %d edges", g.n_nodes, g.n_edges)
    return 0


def _write_run_outputs(out: Path, cfg: RunConfig, result, with_tiers: bool) -> None:
    atomic_write(out / "clusters.jsonl", _jsonl(c.to_record() for c in result.clusters))
    atomic_write(out / "timing.csv", _timing_csv(result.timings))
    skips = [
        f"{o.seed}\t{'skip' if o.skip else 'error'}\t{o.skip or o.error}\n"
        for o in result.skips
    ]
    warns = [
        f"{c.seed}\twarning\t{w}\n" for c in result.clusters for w in c.warnings
    ]
    atomic_write(out / "skips.log", "".join(skips + warns))
    atomic_write(out / "resolved_config.txt", cfg.to_text())
    if with_tiers:
        atomic_write(out / "tiers.json", json.dumps(result.tiers.to_record(), indent=1) + "\n")


def cmd_expand(args) -> int:
    cfg = _resolve_config(args)
    _echo(cfg)
    out = _out_dir(args)
    g = _load_graph(args)
    seeds = _load_seeds(args)
    b = _load_bipartite(args.bipartite)
    result = run_pipeline(g, b, seeds, cfg)
    _write_run_outputs(out, cfg, result, with_tiers=False)
    log.info(result.summary)
    return 0


def cmd_pipeline(args) -> int:
    cfg = _resolve_config(args)
    _echo(cfg, {"review_density": args.review_density})
    out = _out_dir(args)
    g = _load_graph(args)
    seeds = _load_seeds(args)
    b = _load_bipartite(args.bipartite)
    result = run_pipeline(g, b, seeds, cfg, review_density=args.review_density)
    _write_run_outputs(out, cfg, result, with_tiers=True)
    sys.stdout.write(f"# {result.summary}\n")
    return 0


def _read_clusters(path: Path) -> list[dict]:
    path = _require(path, "clusters")
    out = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out.append({"seed": int(rec["seed"]), "members": [int(v) for v in rec["members"]]})
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"{path}:{lineno}: bad cluster record ({exc})") from exc
    return out


def cmd_metrics(args) -> int:
    cfg = _resolve_config(args)
    _echo(cfg)
    out = _out_dir(args)
    g = _load_graph(args)
    rows = []
    for rec in _read_clusters(args.clusters):
        members = rec["members"]
        try:
            dens = internal_density(members, g) if len(members) > 1 else None
            odf = flake_odf(members, g)
        except KeyError as exc:
            raise InputError(f"cluster of seed {rec['seed']}: {exc}") from exc
        rows.append({
            "seed": rec["seed"],
            "size": len(members),
            "density": float(dens) if dens is not None else None,
            "flake_odf": float(odf),
        })
    atomic_write(out / "metrics.jsonl", _jsonl(rows))
    return 0


def cmd_validate(args) -> int:
    cfg = _resolve_config(args)
    _echo(cfg)
    out = _out_dir(args)
    g = _load_graph(args)
    b = _load_bipartite(args.bipartite)
    rows = []
    for rec in _read_clusters(args.clusters):
        seed = rec["seed"]
        if seed not in g.index:
            raise InputError(f"seed {seed} not in graph")
        sg = sample_subgraph(g, seed, cfg.d_max, cfg.cap_n, cfg.m)
        members = tuple(sorted(rec["members"]))
        if any(v not in sg.index for v in members):
            rows.append({"seed": seed, "verdict": False, "failures": ["members outside sample"]})
            continue
        cluster = AccompliceCluster(seed, members, float("nan"), 0.0, 0)
        rep = validate_tabc(cluster, sg, b, cfg.n_min, cfg.m, cfg.rho_min, cfg.delta_t)
        rows.append({"seed": seed, **rep.to_record()})
    atomic_write(out / "validation.jsonl", _jsonl(rows))
    return 0


def cmd_synth(args) -> int:
    out = _out_dir(args)
    if args.kind == "planted":
        if args.spec is not None:
            raw = json.loads(_require(args.spec, "spec").read_text(encoding="utf-8"))
            raw = raw.get("spec", raw)
            spec = PlantedSpec(
                groups=tuple(tuple(x) for x in raw["groups"]),
                overlaps=tuple(tuple(x) for x in raw.get("overlaps", ())),
                background_p=raw.get("background_p", 0.0),
                background_nodes=raw.get("background_nodes", 0),
                rng_seed=args.rng_seed if args.rng_seed is not None else raw.get("rng_seed", 0),
            )
        else:
            spec = overlap_preset(args.rng_seed or 0)
        sys.stdout.write(spec_json(spec))
        pg = generate_planted_graph(spec)
        atomic_write(out / "graph.tsv", format_graph_tsv(pg.graph))
        atomic_write(out / "truth.tsv", "".join(l + "\n" for l in pg.truth_lines()))
        atomic_write(out / "spec.json", spec_json(spec))
        return 0
    kwargs = {}
    for f in fields(SpamCampaignSpec):
        v = getattr(args, f.name, None)
        if v is not None:
            kwargs[f.name] = v
    try:
        spec = SpamCampaignSpec(**kwargs)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    sys.stdout.write(spec_json(spec))
    camp = generate_campaign_log(spec)
    atomic_write(out / "events.jsonl", "".join(l + "\n" for l in camp.lines()))
    atomic_write(out / "truth.tsv", "".join(l + "\n" for l in camp.truth_lines()))
    atomic_write(out / "seeds.txt", "".join(f"{v}\n" for v in camp.spammers[: args.n_seeds]))
    atomic_write(out / "spec.json", spec_json(spec))
    return 0


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="leas", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def io_flags(sp, graph=True, bipartite=True, seeds=False, clusters=False):
        if graph:
            sp.add_argument("--graph", type=Path, help="graph TSV (node_a, node_b, weight)")
            sp.add_argument("--owners", type=Path, help="owners TSV (page_id, owner_id)")
        if bipartite:
            sp.add_argument("--bipartite", type=Path, help="events JSONL")
        if seeds:
            sp.add_argument("--seeds", type=Path, help="seed ids, one per line")
        if clusters:
            sp.add_argument("--clusters", type=Path, help="clusters JSONL")
        sp.add_argument("--out-dir", dest="out_dir", type=Path, help="output directory")

    bg = sub.add_parser("build-graph", help="project an events log into a graph TSV")
    io_flags(bg, graph=False)
    bg.add_argument("--window-start", type=int)
    bg.add_argument("--window-end", type=int)
    bg.add_argument("--coherence-filter", action="store_true",
                    help="count a shared target only if timestamps fit 2*delta_t")
    bg.add_argument("--no-owner-penalty", action="store_true")
    _add_run_flags(bg)
    bg.set_defaults(func=cmd_build_graph)

    ex = sub.add_parser("expand", help="expand seeds into accomplice clusters")
    io_flags(ex, seeds=True)
    ex.add_argument("--seed", type=int, action="append", help="seed id (repeatable)")
    _add_run_flags(ex)
    ex.set_defaults(func=cmd_expand)

    pl = sub.add_parser("pipeline", help="expand seeds and write tier report and timings")
    io_flags(pl, seeds=True)
    pl.add_argument("--review-density", type=float, default=None,
                    help="list Tier II accounts in clusters denser than this")
    _add_run_flags(pl)
    pl.set_defaults(func=cmd_pipeline)

    me = sub.add_parser("metrics", help="internal density and Flake-ODF of clusters")
    io_flags(me, bipartite=False, clusters=True)
    _add_run_flags(me)
    me.set_defaults(func=cmd_metrics)

    va = sub.add_parser("validate", help="check clusters against T-ABC conditions")
    io_flags(va, clusters=True)
    _add_run_flags(va)
    va.set_defaults(func=cmd_validate)

    sy = sub.add_parser("synth", help="generate synthetic fixtures")
    sy.add_argument("kind", choices=("planted", "campaign"))
    sy.add_argument("--out-dir", dest="out_dir", type=Path)
    sy.add_argument("--rng-seed", dest="rng_seed", type=int)
    sy.add_argument("--spec", type=Path, help="planted spec JSON (default: two-group preset)")
    sy.add_argument("--spammers", dest="spammer_count", type=int)
    sy.add_argument("--targets", dest="target_pool_size", type=int)
    sy.add_argument("--actions", dest="actions_per_spammer", type=int)
    sy.add_argument("--burst-window", dest="burst_window", type=int)
    sy.add_argument("--organic", dest="organic_actor_count", type=int)
    sy.add_argument("--organic-rate", dest="organic_rate", type=float)
    sy.add_argument("--owner-fanout", dest="owner_fanout", type=int)
    sy.add_argument("--n-seeds", type=int, default=1, help="spammers written to seeds.txt")
    sy.set_defaults(func=cmd_synth)
    return p


def _setup_logging() -> None:
    level = os.environ.get("LEAS_LOG_LEVEL", "warn").lower()
    logging.basicConfig(
        level=LOG_LEVELS.get(level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def dispatch(argv: list[str] | None = None) -> int:
    """Run one command; returns 0 on success, 1 on input error, 2 on internal error."""
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except InputError as exc:
        sys.stderr.write(f"leas: error: {exc}\n")
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        sys.stderr.write(f"leas: internal error: {exc}\n")
        return 2


def main() -> None:
    sys.exit(dispatch())
