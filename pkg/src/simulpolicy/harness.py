"""Corpus ingestion, sweep configuration, experiment runs and CSV reports."""

from __future__ import annotations

import configparser
import csv
import functools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .core import Sentence, make_sentence
from .ensemble import ConfigurationError, EnsembleScorer, EvalMatrix, Model, evaluate_matrix, select_bundles
from .metrics import average_lagging, corpus_bleu, timing_summary
from .policies import (
    RHO_SWEEP,
    BaselineConfig,
    ModelBank,
    ThresholdSchedule,
    adaptive_decode,
    fixed_policy_decode,
    full_sentence_decode,
    threshold_schedule,
    wait_if_diff_decode,
    wait_if_worse_decode,
)
from .scorers import DictionaryScorer, Scorer, ScriptedScorer, load_scripted

logger = logging.getLogger(__name__)

METHODS = (
    "wait_k",
    "test_time_wait_k",
    "adaptive_single",
    "adaptive_ensemble_top3",
    "adaptive_ensemble_all",
    "wait_if_diff",
    "wait_if_worse",
    "full_sentence_greedy",
)
SINGLE_SCORER_METHODS = {"test_time_wait_k", "wait_if_diff", "wait_if_worse", "full_sentence_greedy"}
REPORT_HEADER = ["method", "params", "bleu", "al", "sentences", "sec_per_token"]


class ConfigError(ConfigurationError):
    """Bad configuration or usage; the CLI exits with status 1."""


class DataError(ValueError):
    """Malformed corpus or scorer data; the CLI exits with status 2."""


# --------------------------------------------------------------------------
# corpus


@dataclass(frozen=True)
class Corpus:
    sources: Tuple[Sentence, ...]
    reference_sets: Tuple[Tuple[Sentence, ...], ...]

    def __post_init__(self):
        if len(self.sources) != len(self.reference_sets):
            raise DataError(f"{len(self.sources)} sources but {len(self.reference_sets)} reference sets")
        if len({len(refs) for refs in self.reference_sets}) > 1:
            raise DataError("reference sets differ in size")

    def __len__(self):
        return len(self.sources)


def _read_lines(path) -> List[str]:
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [line.rstrip("\r") for line in lines]


def read_sentences(path) -> List[Sentence]:
    try:
        return [make_sentence(line) for line in _read_lines(path)]
    except OSError as exc:
        raise DataError(str(exc)) from None
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def load_corpus(source_path, reference_paths: Sequence) -> Corpus:
    """One whitespace-tokenized sentence per line; no markers are added."""
    if not reference_paths:
        raise ConfigError("at least one reference file is required")
    try:
        src_lines = _read_lines(source_path)
        ref_lines = [_read_lines(p) for p in reference_paths]
    except OSError as exc:
        raise DataError(str(exc)) from None
    for path, lines in zip(reference_paths, ref_lines):
        if len(lines) != len(src_lines):
            raise DataError(
                f"line count mismatch: {source_path} has {len(src_lines)} lines, {path} has {len(lines)}"
            )
    try:
        sources = tuple(make_sentence(line) for line in src_lines)
        refs = tuple(tuple(make_sentence(lines[i]) for lines in ref_lines) for i in range(len(src_lines)))
    except ValueError as exc:
        raise DataError(str(exc)) from None
    return Corpus(sources, refs)


# --------------------------------------------------------------------------
# configuration


def parse_int_list(text: str) -> List[int]:
    """``"1-3,7"`` -> ``[1, 2, 3, 7]``."""
    out: List[int] = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            out.extend(range(int(lo), int(hi) + 1) if sep else [int(lo)])
        except ValueError:
            raise ConfigError(f"bad integer list {text!r}") from None
    if not out:
        raise ConfigError(f"empty integer list {text!r}")
    return out


def parse_rho_pairs(text: str) -> List[Tuple[float, float]]:
    """``"0.9/0.0, 1.0/0.5"``; the item ``sweep`` expands to the 18 standard endpoint pairs."""
    pairs = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if part.lower() == "sweep":
            pairs.extend(RHO_SWEEP)
            continue
        try:
            a, b = part.split("/")
            pairs.append((float(a), float(b)))
        except ValueError:
            raise ConfigError(f"bad threshold pair {part!r}, expected first/last") from None
    if not pairs:
        raise ConfigError("empty threshold grid")
    return pairs


@dataclass(frozen=True)
class ScorerSpec:
    """``scripted:PATH`` or ``dictionary:PATH[:GAMMA]``."""

    kind: str
    path: Path
    gamma: float = 0.5

    @classmethod
    def parse(cls, text: str, base: Path) -> "ScorerSpec":
        kind, _, rest = text.strip().partition(":")
        if kind == "scripted" and rest:
            spec = cls(kind, base / rest)
        elif kind == "dictionary" and rest:
            path, _, gamma = rest.partition(":")
            try:
                spec = cls(kind, base / path, float(gamma) if gamma else 0.5)
            except ValueError:
                raise ConfigError(f"bad gamma in scorer spec {text!r}") from None
        else:
            raise ConfigError(f"bad scorer spec {text!r}, expected scripted:PATH or dictionary:PATH[:GAMMA]")
        if not spec.path.is_file():
            raise ConfigError(f"scorer file not found: {spec.path}")
        return spec

    def load(self) -> Scorer:
        if self.kind == "scripted":
            return load_scripted(self.path)
        return DictionaryScorer.from_file(self.path, self.gamma)


@dataclass
class SweepConfig:
    method: str
    ks: List[int] = field(default_factory=lambda: [1])
    rho_pairs: List[Tuple[float, float]] = field(default_factory=lambda: list(RHO_SWEEP))
    s0s: List[int] = field(default_factory=lambda: [4])
    deltas: List[int] = field(default_factory=lambda: [2])
    catchup_every: Optional[int] = None
    seed: int = 0
    max_len_cap: Optional[int] = None
    timing: bool = True
    scorer: Optional[ScorerSpec] = None
    bank: Dict[str, ScorerSpec] = field(default_factory=dict)
    models: Dict[str, Tuple[int, ScorerSpec]] = field(default_factory=dict)
    ensemble: Dict[int, List[str]] = field(default_factory=dict)
    matrix: Optional[Path] = None
    source: Optional[Path] = None
    refs: List[Path] = field(default_factory=list)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.method in SINGLE_SCORER_METHODS and self.scorer is None:
            raise ConfigError(f"method {self.method} needs [sweep] scorer")
        if self.method in ("wait_k", "adaptive_single"):
            lags = self.ks if self.method == "wait_k" else range(self.k_min, self.k_max + 1)
            for k in lags:
                if f"k{k}" not in self.bank and "default" not in self.bank:
                    raise ConfigError(f"[bank] has no scorer for k={k} and no default")
        if self.method.startswith("adaptive_ensemble") and not self.models:
            raise ConfigError(f"method {self.method} needs [model NAME] sections")
        if self.catchup_every is not None and self.catchup_every < 1:
            raise ConfigError("catchup_every must be >= 1")

    @property
    def k_min(self) -> int:
        return min(self.ks)

    @property
    def k_max(self) -> int:
        return max(self.ks)

    @classmethod
    def from_file(cls, path) -> "SweepConfig":
        path = Path(path)
        return cls.from_parser(_read_config(path), path.parent)

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser, base: Path) -> "SweepConfig":
        if not parser.has_section("sweep"):
            raise ConfigError("config needs a [sweep] section")
        sw = parser["sweep"]
        kwargs = {"method": sw.get("method", "").strip()}
        if sw.get("k"):
            kwargs["ks"] = parse_int_list(sw["k"])
        if sw.get("rho"):
            kwargs["rho_pairs"] = parse_rho_pairs(sw["rho"])
        if sw.get("s0"):
            kwargs["s0s"] = parse_int_list(sw["s0"])
        if sw.get("delta"):
            kwargs["deltas"] = parse_int_list(sw["delta"])
        try:
            if sw.get("catchup_every"):
                kwargs["catchup_every"] = int(sw["catchup_every"])
            if sw.get("max_len_cap"):
                kwargs["max_len_cap"] = int(sw["max_len_cap"])
            kwargs["seed"] = sw.getint("seed", 0)
            kwargs["timing"] = sw.getboolean("timing", True)
        except ValueError as exc:
            raise ConfigError(f"[sweep]: {exc}") from None
        if sw.get("scorer"):
            kwargs["scorer"] = ScorerSpec.parse(sw["scorer"], base)
        if sw.get("matrix"):
            kwargs["matrix"] = base / sw["matrix"].strip()
        if parser.has_section("bank"):
            kwargs["bank"] = {key: ScorerSpec.parse(val, base) for key, val in parser["bank"].items()}
        kwargs["models"] = _parse_models(parser, base)
        ensemble = {}
        if sw.get("ensemble"):
            ensemble.update(read_ensemble_file(base / sw["ensemble"].strip()))
        if parser.has_section("ensemble"):
            ensemble.update(_parse_ensemble_section(parser["ensemble"]))
        kwargs["ensemble"] = ensemble
        if parser.has_section("corpus"):
            cs = parser["corpus"]
            if cs.get("source"):
                kwargs["source"] = base / cs["source"].strip()
            if cs.get("refs"):
                kwargs["refs"] = [base / p.strip() for p in cs["refs"].split(",") if p.strip()]
        return cls(**kwargs)


def _read_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parser


def _parse_models(parser: configparser.ConfigParser, base: Path) -> Dict[str, Tuple[int, ScorerSpec]]:
    models = {}
    for name in parser.sections():
        if name.startswith("model "):
            sec = parser[name]
            if "trained_k" not in sec or "scorer" not in sec:
                raise ConfigError(f"[{name}] needs trained_k and scorer")
            try:
                trained_k = sec.getint("trained_k")
            except ValueError:
                raise ConfigError(f"[{name}] trained_k must be an integer") from None
            models[name[len("model "):].strip()] = (trained_k, ScorerSpec.parse(sec["scorer"], base))
    return models


def load_model_specs(path) -> Dict[str, Tuple[int, ScorerSpec]]:
    """``[model NAME]`` sections of a config file, in file order."""
    path = Path(path)
    models = _parse_models(_read_config(path), path.parent)
    if not models:
        raise ConfigError(f"{path} declares no [model NAME] sections")
    return models


def _parse_ensemble_section(section) -> Dict[int, List[str]]:
    out = {}
    for key, val in section.items():
        if not (key.startswith("k") and key[1:].isdigit()):
            raise ConfigError(f"[ensemble] keys look like k3, got {key!r}")
        out[int(key[1:])] = [m.strip() for m in val.split(",") if m.strip()]
    return out


def read_ensemble_file(path) -> Dict[int, List[str]]:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read ensemble file {path}: {exc}") from None
    if not parser.has_section("ensemble"):
        raise ConfigError(f"{path} has no [ensemble] section")
    return _parse_ensemble_section(parser["ensemble"])


def write_ensemble_file(bundles: Dict[int, List[str]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("[ensemble]\n")
        for k in sorted(bundles):
            fh.write(f"k{k} = {','.join(bundles[k])}\n")


class ScorerCache:
    """Loads each scorer file once and widens scripted scorers to a shared vocabulary."""

    def __init__(self, specs: Sequence[ScorerSpec]):
        loaded = {}
        for spec in specs:
            if spec not in loaded:
                try:
                    loaded[spec] = spec.load()
                except (OSError, ValueError, KeyError) as exc:
                    raise DataError(f"{spec.path}: {exc}") from None
        scripted = [s for s in loaded.values() if isinstance(s, ScriptedScorer)]
        if scripted:
            vocab = frozenset().union(*(s.vocab for s in scripted))
            for spec, s in loaded.items():
                if isinstance(s, ScriptedScorer) and s.vocab != vocab:
                    loaded[spec] = s.with_vocab(vocab)
        self._loaded = loaded

    def __getitem__(self, spec: ScorerSpec) -> Scorer:
        return self._loaded[spec]


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class RunRecord:
    method: str
    params: str
    bleu: float
    al: float
    sentences: int
    sec_per_token: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.bleu) and math.isfinite(self.al)):
            raise ValueError(f"non-finite metric in {self}")
        if not 0.0 <= self.bleu <= 100.0:
            raise ValueError(f"BLEU out of range in {self}")

    def row(self) -> List[str]:
        sec = "" if self.sec_per_token is None else f"{self.sec_per_token:.4f}"
        return [self.method, self.params, f"{self.bleu:.2f}", f"{self.al:.3f}", str(self.sentences), sec]


def _no_clock() -> float:
    return 0.0


def _rho_label(a: float, b: float) -> str:
    return f"rho_first={a:g} rho_last={b:g}"


def build_grid(cfg: SweepConfig) -> List[Tuple[str, Callable]]:
    """(params label, picklable single-sentence decoder) per grid point, in declaration order."""
    specs = list(cfg.bank.values()) + [spec for _, spec in cfg.models.values()]
    if cfg.scorer is not None:
        specs.append(cfg.scorer)
    cache = ScorerCache(specs)
    common = {"max_len_cap": cfg.max_len_cap}
    if not cfg.timing:
        common["clock"] = _no_clock

    def bank_scorer(k):
        return cache[cfg.bank.get(f"k{k}", cfg.bank.get("default"))]

    grid = []
    m = cfg.method
    if m == "wait_k":
        for k in cfg.ks:
            dec = functools.partial(fixed_policy_decode, bank_scorer(k), k, catchup_every=cfg.catchup_every, **common)
            grid.append((f"k={k}", dec))
    elif m == "test_time_wait_k":
        scorer = cache[cfg.scorer]
        for k in cfg.ks:
            dec = functools.partial(fixed_policy_decode, scorer, k, catchup_every=cfg.catchup_every, **common)
            grid.append((f"k={k}", dec))
    elif m == "full_sentence_greedy":
        grid.append(("greedy", functools.partial(full_sentence_decode, cache[cfg.scorer], **common)))
    elif m in ("wait_if_diff", "wait_if_worse"):
        decode = wait_if_diff_decode if m == "wait_if_diff" else wait_if_worse_decode
        scorer = cache[cfg.scorer]
        for delta in cfg.deltas:
            for s0 in cfg.s0s:
                dec = functools.partial(decode, scorer, BaselineConfig(s0, delta), **common)
                grid.append((f"s0={s0} delta={delta}", dec))
    else:
        lags = range(cfg.k_min, cfg.k_max + 1)
        if m == "adaptive_single":
            bundles = {k: bank_scorer(k) for k in lags}
        else:
            bundles = {k: EnsembleScorer([cache[cfg.models[name][1]] for name in members])
                       for k, members in _ensemble_members(cfg, lags).items()}
        for a, b in cfg.rho_pairs:
            try:
                schedule = ThresholdSchedule(a, b, cfg.k_min, cfg.k_max)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            bank = ModelBank(cfg.k_min, cfg.k_max, bundles, threshold_schedule(schedule))
            grid.append((_rho_label(a, b), functools.partial(adaptive_decode, bank, **common)))
    return grid


def _ensemble_members(cfg: SweepConfig, lags) -> Dict[int, List[str]]:
    names = list(cfg.models)
    if cfg.method == "adaptive_ensemble_all":
        return {k: names for k in lags}
    if cfg.ensemble:
        members = cfg.ensemble
    elif cfg.matrix is not None:
        matrix = EvalMatrix.from_csv(cfg.matrix, {n: tk for n, (tk, _) in cfg.models.items()})
        members = select_bundles(matrix, lags, min(3, len(names)))
    else:
        raise ConfigError("adaptive_ensemble_top3 needs an [ensemble] section, an ensemble file or a matrix")
    missing = [k for k in lags if k not in members]
    if missing:
        raise ConfigError(f"no ensemble members for lag(s) {missing}")
    unknown = sorted({n for k in lags for n in members[k]} - set(names))
    if unknown:
        raise ConfigError(f"ensemble refers to unknown model(s) {unknown}")
    return {k: members[k] for k in lags}


def decode_all(decoder: Callable, sources: Sequence, pool: Optional[ProcessPoolExecutor] = None,
               jobs: int = 1) -> list:
    """Decode every source, in input order, optionally across a process pool."""
    if pool is None:
        return [decoder(src) for src in sources]
    chunk = max(1, len(sources) // (4 * jobs))
    return list(pool.map(decoder, sources, chunksize=chunk))


def summarize(method: str, params: str, outcomes: Sequence, corpus: Corpus, timing: bool = True) -> RunRecord:
    hyps = [o.tokens for o in outcomes]
    bleu = corpus_bleu(hyps, corpus.reference_sets).bleu
    lags = []
    for src, out in zip(corpus.sources, outcomes):
        hyp_len = len(out.tokens)
        if src and hyp_len:
            lags.append(average_lagging(out.trace, len(src), hyp_len).al)
    skipped = len(outcomes) - len(lags)
    if skipped:
        logger.warning("%s %s: %d sentence(s) with empty source or hypothesis left out of AL", method, params, skipped)
    al = sum(lags) / len(lags) if lags else 0.0
    sec = None
    if timing and any(o.elapsed_per_write for o in outcomes):
        sec = timing_summary(outcomes)
    return RunRecord(method, params, bleu, al, len(outcomes), sec)


def run_sweep(cfg: SweepConfig, corpus: Corpus, jobs: int = 1) -> List[RunRecord]:
    """Decode the corpus at every grid point; records follow grid declaration order."""
    if not len(corpus):
        raise DataError("corpus is empty")
    grid = build_grid(cfg)
    records = []
    pool = ProcessPoolExecutor(jobs) if jobs > 1 else None
    try:
        for params, decoder in grid:
            try:
                outcomes = decode_all(decoder, corpus.sources, pool, jobs)
            except Exception:
                logger.error("grid point %s %s failed", cfg.method, params)
                raise
            truncated = sum(o.truncated for o in outcomes)
            if truncated:
                logger.warning("%s %s: %d decode(s) hit the length cap", cfg.method, params, truncated)
            rec = summarize(cfg.method, params, outcomes, corpus, cfg.timing)
            logger.info("%s %s: BLEU %.2f AL %.3f", cfg.method, params, rec.bleu, rec.al)
            records.append(rec)
    finally:
        if pool is not None:
            pool.shutdown()
    return records


# --------------------------------------------------------------------------
# reports


def emit_report(records: Sequence[RunRecord], out_path) -> None:
    if not records:
        raise ValueError("no records to report")
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for rec in records:
            w.writerow(rec.row())


def read_report(path) -> List[RunRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != REPORT_HEADER:
            raise DataError(f"{path}: expected header {','.join(REPORT_HEADER)}")
        try:
            return [
                RunRecord(
                    row["method"], row["params"], float(row["bleu"]), float(row["al"]), int(row["sentences"]),
                    float(row["sec_per_token"]) if row["sec_per_token"] else None,
                )
                for row in reader
            ]
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from None


def published_records(pair: str = "zh_en") -> List[RunRecord]:
    """Bundled grids reported for trained NMT systems (reference only, not reproducible here).

    ``pair`` is ``"zh_en"`` or ``"de_en"``; the sentence count is unknown and
    recorded as 0.
    """
    if pair not in ("zh_en", "de_en"):
        raise ValueError(f"unknown language pair {pair!r}")
    text = resources.files("simulpolicy").joinpath("data/published_grids.csv").read_text(encoding="utf-8")
    reader = csv.DictReader(text.splitlines())
    return [
        RunRecord(row["method"], row["params"], float(row[f"{pair}_bleu"]), float(row[f"{pair}_al"]), 0)
        for row in reader
    ]


# --------------------------------------------------------------------------
# model-per-policy matrix


def _bleu_of(scorer, k, corpus, pool=None, jobs=1):
    decoder = functools.partial(fixed_policy_decode, scorer, k, clock=_no_clock)
    outcomes = decode_all(decoder, corpus.sources, pool, jobs)
    return corpus_bleu([o.tokens for o in outcomes], corpus.reference_sets)


def load_models(specs: Dict[str, Tuple[int, ScorerSpec]]) -> List[Model]:
    cache = ScorerCache([spec for _, spec in specs.values()])
    return [Model(name, tk, cache[spec]) for name, (tk, spec) in specs.items()]


def run_eval_matrix(models: Sequence[Model], policies: Sequence[int], corpus: Corpus, out_path=None,
                    jobs: int = 1) -> EvalMatrix:
    if not policies:
        raise ConfigError("no policies given")
    if not models:
        raise ConfigError("no models given")
    pool = ProcessPoolExecutor(jobs) if jobs > 1 else None
    try:
        matrix = evaluate_matrix(models, policies, corpus, functools.partial(_bleu_of, pool=pool, jobs=jobs))
    finally:
        if pool is not None:
            pool.shutdown()
    if out_path is not None:
        matrix.to_csv(out_path)
    return matrix
