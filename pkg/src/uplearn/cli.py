"""``uplearn`` command line: generate, run, sweep, report.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

from .config import ExperimentConfig, load_config
from .datagen import ConfigError, GeneratorConfig, channel_names, generate_fleet, write_phase_csv
from .evaluate import (
    CellError,
    aggregate,
    make_cells,
    map_cells,
    parse_grid,
    render_csv,
    render_series,
    render_text,
    run_cell,
    sweep_grid,
)
from .ingest import IngestError
from .simulate import run_from_json

log = logging.getLogger("uplearn")

OK, CONFIG_ERROR, RUNTIME_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_json(path: Path, doc: dict) -> None:
    write_atomic(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _split(raw: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in raw.split(",") if p.strip())


def resolve(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    changes = {}
    if getattr(args, "seeds", None):
        try:
            changes["seeds"] = tuple(int(s) for s in _split(args.seeds))
        except ValueError:
            raise ConfigError("--seeds", f"expected comma-separated integers, got {args.seeds!r}") from None
    if getattr(args, "strategies", None):
        changes["strategies"] = _split(args.strategies)
    if getattr(args, "archs", None):
        changes["archs"] = _split(args.archs)
    if getattr(args, "pi_p", None) is not None:
        changes["pi_p"] = args.pi_p
    if getattr(args, "first_phase", None) is not None:
        changes["first_phase"] = args.first_phase
    if getattr(args, "grid", None) is not None:
        changes["grid"] = args.grid
    if args.out:
        changes["output_dir"] = args.out
    try:
        return dataclasses.replace(cfg, **changes)
    except ConfigError as exc:
        flag = {"experiment.seeds": "--seeds", "experiment.strategies": "--strategies", "experiment.archs": "--archs",
                "experiment.pi_p": "--pi-p", "experiment.grid": "--grid"}.get(exc.field, exc.field)
        raise ConfigError(flag, str(exc).split(": ", 1)[-1]) from None


def _prepare(out: Path, owned: tuple[str, ...], force: bool) -> None:
    """Create ``out``; refuse to touch existing outputs unless forced."""
    existing = [name for name in owned if (out / name).exists()]
    if existing and not force:
        raise UsageError(f"{out} already holds {', '.join(existing)}; pass --force to overwrite")
    for name in existing:
        target = out / name
        if target.is_dir():
            shutil.rmtree(target)
        else:
            target.unlink()
    out.mkdir(parents=True, exist_ok=True)


def cmd_generate(cfg: ExperimentConfig, force: bool) -> int:
    if not isinstance(cfg.source, GeneratorConfig):
        raise ConfigError("data.source", "generate needs data.source = generate")
    gen = dataclasses.replace(cfg.source, seed=cfg.seeds[0])
    out = Path(cfg.output_dir)
    names = tuple(f"phase_{k}.csv" for k in range(1, gen.phases + 1)) + ("manifest.json",)
    _prepare(out, names, force)
    phases = generate_fleet(gen)
    cols = channel_names(gen)
    counts = {}
    for ds in phases:
        path = out / f"phase_{ds.phase}.csv"
        fd, tmp = tempfile.mkstemp(dir=out, prefix=f".{path.name}.", suffix=".tmp")
        os.close(fd)
        write_phase_csv(tmp, ds, cols)
        os.replace(tmp, path)
        counts[str(ds.phase)] = {"records": len(ds), "positives": ds.positive_count, "negatives": ds.negative_count}
    write_json(out / "manifest.json", {
        "seed": gen.seed,
        "config_hash": cfg.config_hash(),
        "phases": counts,
        "columns": cols,
    })
    print(f"wrote {len(phases)} phase files to {out}")
    return OK


def _write_reports(out: Path, docs: list[dict], config_hash: str, first_phase: int) -> str:
    agg = aggregate(docs, first_phase=first_phase)
    text = render_text(agg)
    tag = f"# config_hash={config_hash}\n"
    write_atomic(out / "reports" / "summary.txt", tag + text)
    write_atomic(out / "reports" / "table.csv", tag + render_csv(agg))
    for strategy in agg.series:
        write_atomic(out / "reports" / f"series_{strategy.replace(':', '-')}.csv", tag + render_series(agg, strategy))
    return text


def cmd_run(cfg: ExperimentConfig, force: bool, threads: int | None) -> int:
    out = Path(cfg.output_dir)
    _prepare(out, ("runs", "timings", "reports", "manifest.json"), force)
    h = cfg.config_hash()
    write_json(out / "manifest.json", {"config_hash": h, "config": cfg.to_json(), "command": "run"})
    cells = make_cells(cfg.source, cfg.train, cfg.seeds, cfg.archs, cfg.strategies, cfg.pi_p)
    docs = []
    try:
        for result in map_cells(run_cell, cells, threads):
            for doc, timing in result:
                key = f"{timing['strategy']}__{timing['arch']}__seed{timing['seed']}".replace(":", "-")
                write_json(out / "runs" / f"{key}.json", {"config_hash": h, **doc})
                write_json(out / "timings" / f"{key}.json", {"config_hash": h, **timing})
                docs.append(doc)
    except CellError as exc:
        print(f"error: run failed in cell {exc}", file=sys.stderr)
        print(f"partial results ({len(docs)} runs) kept in {out / 'runs'}", file=sys.stderr)
        return RUNTIME_ERROR
    print(_write_reports(out, docs, h, cfg.first_phase), end="")
    return OK


def cmd_sweep(cfg: ExperimentConfig, force: bool, threads: int | None) -> int:
    try:
        grid = parse_grid(cfg.grid)
    except ValueError as exc:
        raise ConfigError("--grid", str(exc)) from None
    out = Path(cfg.output_dir)
    _prepare(out, ("sweep",), force)
    uptakes = [s for s in cfg.strategies if s.startswith("uptake")] or ["uptake"]
    h = cfg.config_hash()
    try:
        res = sweep_grid(cfg.source, cfg.train, grid, seeds=cfg.seeds, archs=cfg.archs, strategy=uptakes[0],
                         first_phase=cfg.first_phase, workers=threads)
    except CellError as exc:
        print(f"error: sweep failed in cell {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    lines = [f"# config_hash={h}", "pi_p,mean_f1"]
    lines += [f"{v!r},{'' if f is None else repr(f)}" for v, f in zip(res.grid, res.f1)]
    write_atomic(out / "sweep" / "sweep.csv", "\n".join(lines) + "\n")
    write_atomic(out / "sweep" / "auto_pi_p.txt", f"{res.auto_pi_p!r} config_hash={h}\n")
    write_json(out / "sweep" / "sweep.json", {"config_hash": h, **res.to_json()})
    best_pi, best_f1 = res.best
    for v, f in zip(res.grid, res.f1):
        print(f"pi_p={v:.2f}  mean F1={'undef' if f is None else f'{100 * f:.2f}'}")
    auto_f1 = "undef" if res.auto_f1 is None else f"{100 * res.auto_f1:.2f}"
    print(f"auto pi_p={res.auto_pi_p:.4f}  mean F1={auto_f1}  (best grid pi_p={best_pi:.2f}, F1={100 * best_f1:.2f})")
    return OK


def cmd_report(args: argparse.Namespace) -> int:
    if not args.out:
        raise ConfigError("--out", "report needs the output directory of a previous run")
    out = Path(args.out)
    files = sorted((out / "runs").glob("*.json"))
    if not files:
        raise UsageError(f"no run files under {out / 'runs'}")
    docs = [json.loads(p.read_text(encoding="utf-8")) for p in files]
    hashes = {d.get("config_hash") for d in docs}
    if len(hashes) != 1:
        raise UsageError(f"run files come from different configs: {sorted(map(str, hashes))}")
    for d in docs:
        run_from_json(d)
    first = args.first_phase if args.first_phase is not None else 2
    print(_write_reports(out, docs, hashes.pop(), first), end="")
    return OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uplearn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, grid_flags: bool = True):
        sp.add_argument("--config", help="experiment config file (INI)")
        sp.add_argument("--out", help="output directory (overrides experiment.output_dir)")
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if grid_flags:
            sp.add_argument("--seeds", help="comma-separated seeds")
            sp.add_argument("--strategies", help="comma-separated strategies")
            sp.add_argument("--archs", help="comma-separated architectures, e.g. linear,mlp:16")
            sp.add_argument("--pi-p", type=float, dest="pi_p", help="fixed class prior for uptake")
            sp.add_argument("--threads", type=int, help="worker processes (default: UPLEARN_THREADS or core count)")
            sp.add_argument("--first-phase", type=int, dest="first_phase", help="first phase of the average column")

    g = sub.add_parser("generate", help="write a synthetic fleet as CSV plus a manifest")
    common(g, grid_flags=False)
    g.add_argument("--seeds", help="seed of the fleet (first value is used)")
    common(sub.add_parser("run", help="run the strategy x arch x seed grid"))
    s = sub.add_parser("sweep", help="uptake F1 over a grid of fixed class priors")
    common(s)
    s.add_argument("--grid", help="start:stop:step or comma list (default 0:1:0.1)")
    r = sub.add_parser("report", help="re-render tables from runs/")
    r.add_argument("--out", required=True)
    r.add_argument("--first-phase", type=int, dest="first_phase")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return cmd_report(args)
        cfg = resolve(args)
        if args.command == "generate":
            return cmd_generate(cfg, args.force)
        threads = args.threads
        if threads is not None and threads < 1:
            raise ConfigError("--threads", "must be >= 1")
        if args.command == "run":
            return cmd_run(cfg, args.force, threads)
        return cmd_sweep(cfg, args.force, threads)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except (IngestError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
