"""Incremental scorers standing in for prefix-to-prefix translation models.

A scorer maps a (source prefix, target prefix) pair to a next-token
distribution over a fixed target vocabulary.  Scorers here are pure: the
distribution depends only on the two prefixes, so forcing a model through an
existing target prefix reduces to a single call at the final step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Protocol, Sequence, Tuple, runtime_checkable

from .core import EOS, Distribution, NormalizationError, Sentence, VocabularyError, check_token

logger = logging.getLogger(__name__)

EMPTY_PREFIX = "|"


class ScriptFormatError(ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


@runtime_checkable
class Scorer(Protocol):
    @property
    def vocab(self) -> frozenset: ...

    def score(self, source_prefix: Sequence[str], target_prefix: Sequence[str]) -> Distribution: ...


@dataclass(frozen=True)
class ScoreResult:
    top_token: str
    top_prob: float


def score(scorer: Scorer, source_prefix: Sequence[str], target_prefix: Sequence[str]) -> Distribution:
    return scorer.score(tuple(source_prefix), tuple(target_prefix))


def wait_k_g(k: int, t: int, source_len: int) -> int:
    """Source tokens visible to a wait-k policy at target step ``t``."""
    if k < 1 or t < 1 or source_len < 1:
        raise ValueError(f"wait_k_g expects positive arguments, got k={k} t={t} |x|={source_len}")
    return min(source_len, t + k - 1)


def force_decode(scorer: Scorer, k: int, source: Sequence[str], target_prefix: Sequence[str]) -> ScoreResult:
    """Force a wait-k view of ``scorer`` through ``target_prefix`` and take its next argmax."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not source:
        raise ValueError("force_decode needs a non-empty source")
    t = len(target_prefix) + 1
    visible = wait_k_g(k, t, len(source))
    token, prob = scorer.score(tuple(source[:visible]), tuple(target_prefix)).top()
    return ScoreResult(token, prob)


def _check_target(vocab, target_prefix):
    for tok in target_prefix:
        if tok not in vocab:
            raise VocabularyError(f"target token {tok!r} is not in the scorer vocabulary")


class ScriptedScorer:
    """Table-driven scorer: exact (source prefix, target prefix) lookups.

    Keys missing from the table fall back to ``fallback`` (uniform over the
    vocabulary unless given).  Stored distributions are widened to the full
    vocabulary with zero mass on absent tokens.
    """

    def __init__(
        self,
        table: Mapping[Tuple[Sentence, Sentence], Distribution | Mapping[str, float]],
        vocab: Optional[Iterable[str]] = None,
        fallback: Optional[Distribution] = None,
    ):
        dists = {
            (tuple(src), tuple(tgt)): d if isinstance(d, Distribution) else Distribution(d)
            for (src, tgt), d in table.items()
        }
        if vocab is None:
            vocab = {EOS}
            for d in dists.values():
                vocab.update(d.probs)
            if fallback is not None:
                vocab.update(fallback.probs)
        self._vocab = frozenset(vocab)
        for d in dists.values():
            extra = d.vocab - self._vocab
            if extra:
                raise VocabularyError(f"distribution mentions tokens outside the vocabulary: {sorted(extra)}")
        self.table = {key: d.extend(self._vocab) for key, d in dists.items()}
        self.fallback = (fallback or Distribution.uniform(self._vocab)).extend(self._vocab)
        if self.fallback.vocab != self._vocab:
            raise VocabularyError("fallback distribution does not match the vocabulary")

    @property
    def vocab(self) -> frozenset:
        return self._vocab

    def score(self, source_prefix, target_prefix) -> Distribution:
        target_prefix = tuple(target_prefix)
        _check_target(self._vocab, target_prefix)
        return self.table.get((tuple(source_prefix), target_prefix), self.fallback)

    def with_vocab(self, vocab: Iterable[str]) -> "ScriptedScorer":
        """Copy of this scorer over a larger vocabulary (fallback becomes uniform over it)."""
        return ScriptedScorer(self.table, vocab=vocab)

    def __len__(self):
        return len(self.table)

    def __repr__(self):
        return f"ScriptedScorer({len(self.table)} entries, |V|={len(self._vocab)})"


@dataclass(frozen=True)
class DictionaryScorer:
    """Monotone word-for-word translator whose confidence grows with lag.

    At target step t with g unmarked source tokens visible, the token mapped
    from source position t gets probability ``1 - gamma ** (g - t + 1)``;
    the remaining mass is spread uniformly over the rest of the vocabulary.
    Once the source end marker is visible and t runs past the source, the end
    marker is predicted with probability ``1 - gamma``.  When the aligned
    source token is not yet visible the distribution is uniform.
    """

    lexicon: Mapping[str, str]
    gamma: float = 0.5
    _vocab: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        for src, tgt in self.lexicon.items():
            check_token(src)
            check_token(tgt)
        object.__setattr__(self, "_vocab", frozenset(self.lexicon.values()) | {EOS})

    @classmethod
    def identity(cls, tokens: Iterable[str], gamma: float = 0.5) -> "DictionaryScorer":
        return cls({t: t for t in tokens}, gamma)

    @classmethod
    def from_file(cls, path, gamma: float = 0.5) -> "DictionaryScorer":
        return cls(load_lexicon(path), gamma)

    @property
    def vocab(self) -> frozenset:
        return self._vocab

    def _peaked(self, token: str, prob: float) -> Distribution:
        rest = self._vocab - {token}
        if not rest:
            return Distribution({token: 1.0})
        share = (1.0 - prob) / len(rest)
        probs = dict.fromkeys(rest, share)
        probs[token] = prob
        return Distribution(probs)

    def score(self, source_prefix, target_prefix) -> Distribution:
        _check_target(self._vocab, target_prefix)
        eos_read = bool(source_prefix) and source_prefix[-1] == EOS
        words = source_prefix[:-1] if eos_read else source_prefix
        for tok in words:
            if tok not in self.lexicon:
                raise VocabularyError(f"source token {tok!r} is not in the lexicon")
        t = len(target_prefix) + 1
        visible = len(words)
        if t <= visible:
            return self._peaked(self.lexicon[words[t - 1]], 1.0 - self.gamma ** (visible - t + 1))
        if eos_read:
            return self._peaked(EOS, 1.0 - self.gamma)
        return Distribution.uniform(self._vocab)


def _parse_prefix(field_text: str) -> Sentence:
    field_text = field_text.strip()
    if field_text == EMPTY_PREFIX or not field_text:
        return ()
    return tuple(field_text.split())


def _parse_probs(field_text: str) -> Dict[str, float]:
    probs: Dict[str, float] = {}
    for item in field_text.split():
        tok, sep, value = item.rpartition(":")
        if not sep or not tok:
            raise ValueError(f"expected tok:prob, got {item!r}")
        if tok in probs:
            raise ValueError(f"token {tok!r} listed twice")
        probs[tok] = float(value)
    if not probs:
        raise ValueError("no probabilities given")
    return probs


def load_scripted(path, vocab: Optional[Iterable[str]] = None) -> ScriptedScorer:
    """Read a scripted scorer from a ``src<TAB>tgt<TAB>tok:prob ...`` file."""
    path = Path(path)
    table = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ScriptFormatError(path, lineno, f"expected 3 tab-separated fields, got {len(cols)}")
            try:
                key = (_parse_prefix(cols[0]), _parse_prefix(cols[1]))
                dist = Distribution(_parse_probs(cols[2]))
            except NormalizationError as exc:
                raise NormalizationError(f"{path}:{lineno}: {exc}") from None
            except ValueError as exc:
                raise ScriptFormatError(path, lineno, str(exc)) from None
            if key in table:
                raise ScriptFormatError(path, lineno, "duplicate prefix pair")
            table[key] = dist
    logger.debug("loaded %d scripted entries from %s", len(table), path)
    return ScriptedScorer(table, vocab=vocab)


def save_scripted(scorer: ScriptedScorer, path) -> None:
    def prefix(p):
        return " ".join(p) if p else EMPTY_PREFIX

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for (src, tgt), dist in scorer.table.items():
            probs = " ".join(f"{tok}:{p!r}" for tok, p in sorted(dist.probs.items()) if p > 0.0)
            fh.write(f"{prefix(src)}\t{prefix(tgt)}\t{probs}\n")


def load_lexicon(path) -> Dict[str, str]:
    """Read ``src_token<TAB>tgt_token`` lines."""
    path = Path(path)
    lexicon = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise ScriptFormatError(path, lineno, f"expected 2 tab-separated fields, got {len(cols)}")
            src, tgt = cols[0].strip(), cols[1].strip()
            try:
                lexicon[check_token(src)] = check_token(tgt)
            except ValueError as exc:
                raise ScriptFormatError(path, lineno, str(exc)) from None
    return lexicon
