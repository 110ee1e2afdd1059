"""Shared value types: tokens, sentences, distributions and READ/WRITE traces."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Sequence, Tuple

BOS = "<s>"
EOS = "</s>"

NORMALIZATION_TOL = 1e-6

Sentence = Tuple[str, ...]


class VocabularyError(KeyError):
    """A token outside the scorer's vocabulary was supplied."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class NormalizationError(ValueError):
    """A probability table does not describe a valid distribution."""


def check_token(token: str) -> str:
    if not isinstance(token, str) or not token:
        raise ValueError(f"token must be a non-empty string, got {token!r}")
    if any(ch.isspace() for ch in token):
        raise ValueError(f"token contains whitespace: {token!r}")
    return token


def make_sentence(tokens: Iterable[str] | str) -> Sentence:
    """Build a validated sentence from a token iterable or a whitespace-split string."""
    if isinstance(tokens, str):
        tokens = tokens.split()
    sent = tuple(check_token(t) for t in tokens)
    if EOS in sent[:-1]:
        raise ValueError(f"end marker may only appear last: {' '.join(sent)}")
    return sent


def strip_markers(sent: Sequence[str]) -> Sentence:
    """Drop start/end markers; metrics never count them."""
    return tuple(t for t in sent if t != EOS and t != BOS)


@dataclass(frozen=True)
class Distribution:
    """Probability vector over a target vocabulary.

    ``probs`` is frozen into a read-only mapping at construction.  Entries
    must be non-negative and sum to one within ``NORMALIZATION_TOL``.
    """

    probs: Mapping[str, float]

    def __post_init__(self):
        probs = dict(self.probs)
        if not probs:
            raise NormalizationError("empty distribution")
        for tok, p in probs.items():
            if not p >= 0.0:
                raise NormalizationError(f"negative or NaN probability for {tok!r}: {p}")
        total = sum(probs.values())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise NormalizationError(f"probabilities sum to {total:.6f}, expected 1")
        object.__setattr__(self, "probs", MappingProxyType(probs))

    def __reduce__(self):
        # mappingproxy is not picklable; worker processes receive a plain dict
        return (Distribution, (dict(self.probs),))

    @classmethod
    def uniform(cls, vocab: Iterable[str]) -> "Distribution":
        vocab = sorted(set(vocab))
        p = 1.0 / len(vocab)
        return cls({tok: p for tok in vocab})

    @property
    def vocab(self) -> frozenset:
        return frozenset(self.probs)

    def __getitem__(self, token: str) -> float:
        return self.probs[token]

    def get(self, token: str, default: float = 0.0) -> float:
        return self.probs.get(token, default)

    def top(self) -> Tuple[str, float]:
        """Most likely token; ties go to the lexicographically smallest surface."""
        return min(self.probs.items(), key=lambda kv: (-kv[1], kv[0]))

    def extend(self, vocab: Iterable[str]) -> "Distribution":
        """Same distribution with zero mass on any token of ``vocab`` not yet present."""
        probs = dict(self.probs)
        for tok in vocab:
            probs.setdefault(tok, 0.0)
        return Distribution(probs)


class Action(str, enum.Enum):
    READ = "R"
    WRITE = "W"

    def __str__(self):
        return self.value


ActionTrace = Tuple[Action, ...]

READ = Action.READ
WRITE = Action.WRITE


def parse_trace(text: str) -> ActionTrace:
    """``"R W R"`` or ``"RWR"`` -> trace."""
    return tuple(Action(ch) for ch in text.replace(" ", ""))


def format_trace(trace: Iterable[Action]) -> str:
    return " ".join(a.value for a in trace)


def g_from_trace(trace: Sequence[Action], t: int) -> int:
    """Number of READs before the ``t``-th WRITE (1-based)."""
    if t < 1:
        raise IndexError(f"step must be >= 1, got {t}")
    reads = writes = 0
    for action in trace:
        if action is Action.READ:
            reads += 1
        else:
            writes += 1
            if writes == t:
                return reads
    raise IndexError(f"trace has {writes} WRITE actions, step {t} requested")


def g_sequence(trace: Sequence[Action]) -> list:
    """``[g(1), ..., g(n)]`` for all n WRITEs of the trace in one pass."""
    out = []
    reads = 0
    for action in trace:
        if action is Action.READ:
            reads += 1
        else:
            out.append(reads)
    return out


def lag_after(trace: Sequence[Action]) -> int:
    reads = sum(1 for a in trace if a is Action.READ)
    return reads - (len(trace) - reads)


def validate_trace(trace: Sequence[Action]) -> Optional[str]:
    """Return ``None`` for a well-formed trace, otherwise the first violation."""
    # g is a running READ count, so monotonicity holds for any sequence of actions
    for i, action in enumerate(trace):
        if not isinstance(action, Action):
            return f"position {i}: {action!r} is neither READ nor WRITE"
    return None


@dataclass(frozen=True)
class DecodeOutcome:
    """Result of decoding one sentence.

    ``hypothesis`` includes the end marker when it was written; ``source``
    is the consumed source, including the end marker once it was read.
    """

    hypothesis: Sentence
    trace: ActionTrace
    confidences: Tuple[float, ...]
    elapsed_per_write: Tuple[float, ...]
    source: Sentence = ()
    truncated: bool = False

    def __post_init__(self):
        writes = sum(1 for a in self.trace if a is Action.WRITE)
        if not (len(self.hypothesis) == len(self.confidences) == len(self.elapsed_per_write) == writes):
            raise ValueError(
                f"inconsistent outcome: {writes} writes, {len(self.hypothesis)} tokens, "
                f"{len(self.confidences)} confidences, {len(self.elapsed_per_write)} timings"
            )
        reads = len(self.trace) - writes
        if self.source and len(self.source) != reads:
            raise ValueError(f"{reads} reads but {len(self.source)} consumed source tokens")

    @property
    def tokens(self) -> Sentence:
        """Hypothesis without markers."""
        return strip_markers(self.hypothesis)

    @property
    def finished(self) -> bool:
        return bool(self.hypothesis) and self.hypothesis[-1] == EOS


@dataclass
class TraceRecorder:
    """Mutable accumulator the decoders fill in; frozen into a DecodeOutcome at the end."""

    source: list = field(default_factory=list)
    hypothesis: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    confidences: list = field(default_factory=list)
    elapsed: list = field(default_factory=list)

    def read(self, token: str):
        self.source.append(token)
        self.trace.append(Action.READ)

    def write(self, token: str, prob: float, seconds: float):
        self.hypothesis.append(token)
        self.trace.append(Action.WRITE)
        self.confidences.append(prob)
        self.elapsed.append(seconds)

    @property
    def lag(self) -> int:
        return len(self.source) - len(self.hypothesis)

    def freeze(self, truncated: bool = False) -> DecodeOutcome:
        return DecodeOutcome(
            hypothesis=tuple(self.hypothesis),
            trace=tuple(self.trace),
            confidences=tuple(self.confidences),
            elapsed_per_write=tuple(self.elapsed),
            source=tuple(self.source),
            truncated=truncated,
        )
