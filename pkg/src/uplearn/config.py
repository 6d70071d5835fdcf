"""Experiment configuration files.

Grammar (read with :mod:`configparser`)::

    # comment
    [section]
    key = value

Sections: ``data``, ``generator``, ``ingest``, ``train``, ``experiment``.
Lists are comma separated, booleans are ``true``/``false``, and an empty value
means "use the default".  Unknown sections or keys are errors.  ``data.source``
selects ``generate`` (synthetic fleet, one per seed) or ``csv`` (the ``ingest``
section).

Example::

    [data]
    source = generate

    [generator]
    records_per_phase = 4000
    drift_per_phase = 0, -0.2, -0.2, 0.2, 0.2, 0

    [experiment]
    seeds = 0, 1, 2
    strategies = offline, certain, naive, uptake
    archs = linear, mlp:16
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import typing
from pathlib import Path

from .datagen import ConfigError, GeneratorConfig
from .evaluate import BENCHMARK_ARCHS, BENCHMARK_SEEDS, BENCHMARK_STRATEGIES, BENCHMARK_TRAIN, default_strategy, parse_grid
from .ingest import IngestConfig, IngestError
from .model import Arch, TrainConfig

SOURCES = ("generate", "csv")


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    source: GeneratorConfig | IngestConfig = GeneratorConfig()
    strategies: tuple[str, ...] = BENCHMARK_STRATEGIES
    archs: tuple[str, ...] = BENCHMARK_ARCHS
    train: TrainConfig = BENCHMARK_TRAIN
    seeds: tuple[int, ...] = BENCHMARK_SEEDS
    output_dir: str = "out"
    pi_p: float | None = None
    first_phase: int = 2
    grid: str = "0:1:0.1"

    def __post_init__(self) -> None:
        if not self.strategies:
            raise ConfigError("experiment.strategies", "need at least one strategy")
        if not self.archs:
            raise ConfigError("experiment.archs", "need at least one architecture")
        if not self.seeds:
            raise ConfigError("experiment.seeds", "need at least one seed")
        for s in self.strategies:
            try:
                default_strategy(s)
            except ValueError as exc:
                raise ConfigError("experiment.strategies", str(exc)) from None
        for a in self.archs:
            try:
                Arch.parse(a)
            except ValueError as exc:
                raise ConfigError("experiment.archs", str(exc)) from None
        if self.pi_p is not None and not 0.0 <= self.pi_p <= 1.0:
            raise ConfigError("experiment.pi_p", "must lie in [0, 1]")
        if self.first_phase < 2:
            raise ConfigError("experiment.first_phase", "must be >= 2")
        try:
            parse_grid(self.grid)
        except ValueError as exc:
            raise ConfigError("experiment.grid", str(exc)) from None

    @property
    def source_kind(self) -> str:
        return "generate" if isinstance(self.source, GeneratorConfig) else "csv"

    def to_json(self) -> dict:
        """Everything except ``output_dir``, which does not affect results."""
        doc = dataclasses.asdict(self)
        doc.pop("output_dir")
        doc["source"] = {"kind": self.source_kind, **dataclasses.asdict(self.source)}
        return doc

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _split(raw: str) -> list[str]:
    return [p.strip() for p in raw.split(",") if p.strip()]


def _convert(field: str, raw: str, tp):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or type(tp).__name__ == "UnionType":
        inner = [a for a in args if a is not type(None)]
        if not raw.strip():
            return None
        if any(typing.get_origin(a) is tuple for a in inner):
            tp = next(a for a in inner if typing.get_origin(a) is tuple)
        elif str in inner and len(inner) > 1:
            tp = next(a for a in inner if a is not str)
        else:
            tp = inner[0]
        return _convert(field, raw, tp)
    try:
        if typing.get_origin(tp) is tuple:
            elem = typing.get_args(tp)[0]
            return tuple(_convert(field, p, elem) for p in _split(raw))
        if tp is bool:
            v = raw.strip().lower()
            if v not in ("true", "false"):
                raise ValueError("expected true or false")
            return v == "true"
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(field, f"cannot parse {raw!r}: {exc}") from None


def _fields(cls, section: str, values: dict[str, str], skip: tuple[str, ...] = ()) -> dict:
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)} - set(skip)
    out = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"{section}.{key}", f"unknown key; expected one of {sorted(known)}")
        if raw.strip() == "":
            continue
        out[key] = _convert(f"{section}.{key}", raw, hints[key])
    return out


def _build(cls, section: str, kwargs: dict):
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        if exc.field.startswith(section + "."):
            raise
        raise ConfigError(f"{section}.{exc.field}", str(exc).split(": ", 1)[-1]) from None
    except (ValueError, IngestError) as exc:
        msg = str(exc)
        names = sorted((f.name for f in dataclasses.fields(cls)), key=len, reverse=True)
        key = next((n for n in names if msg.startswith(n)), "?")
        raise ConfigError(f"{section}.{key}", msg) from None


def parse_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc).splitlines()[0]) from None
    allowed = {"data", "generator", "ingest", "train", "experiment"}
    for s in cp.sections():
        if s not in allowed:
            raise ConfigError(s, f"unknown section; expected one of {sorted(allowed)}")

    source_kind = cp.get("data", "source", fallback="generate").strip() or "generate"
    extra = set(cp["data"]) - {"source"} if cp.has_section("data") else set()
    if extra:
        raise ConfigError(f"data.{sorted(extra)[0]}", "unknown key; expected 'source'")
    if source_kind not in SOURCES:
        raise ConfigError("data.source", f"must be one of {SOURCES}")

    gen_kw = _fields(GeneratorConfig, "generator", dict(cp["generator"]) if cp.has_section("generator") else {})
    if source_kind == "generate":
        if "d" in gen_kw and gen_kw["d"] != GeneratorConfig.d:
            for name in ("drift_per_phase", "positive_shift", "channel_tags"):
                if name not in gen_kw:
                    raise ConfigError(f"generator.{name}", f"must be given when d != {GeneratorConfig.d}")
        source = _build(GeneratorConfig, "generator", gen_kw)
    else:
        if not cp.has_section("ingest"):
            raise ConfigError("ingest", "section required when data.source = csv")
        raw = dict(cp["ingest"])
        paths = _split(raw.pop("path", ""))
        if not paths:
            raise ConfigError("ingest.path", "required")
        ing_kw = _fields(IngestConfig, "ingest", raw)
        if "feature_columns" not in ing_kw:
            raise ConfigError("ingest.feature_columns", "required")
        base = base_dir or Path(".")
        ing_kw["path"] = tuple(p if Path(p).is_absolute() else str(base / p) for p in paths)
        source = _build(IngestConfig, "ingest", ing_kw)

    train_kw = dataclasses.asdict(BENCHMARK_TRAIN)
    train_kw.update(_fields(TrainConfig, "train", dict(cp["train"]) if cp.has_section("train") else {}, skip=("seed",)))
    train = _build(TrainConfig, "train", train_kw)

    exp_kw = _fields(ExperimentConfig, "experiment", dict(cp["experiment"]) if cp.has_section("experiment") else {},
                     skip=("source", "train"))
    return ExperimentConfig(source=source, train=train, **exp_kw)


def load_config(path: "str | Path | None") -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError("--config", f"no such file: {p}")
    return parse_config(p.read_text(encoding="utf-8"), base_dir=p.parent)

