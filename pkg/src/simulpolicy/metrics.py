"""Latency (Average Lagging), BLEU and per-token timing."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

from .core import Action, strip_markers

MAX_ORDER = 4


@dataclass(frozen=True)
class LatencyReport:
    al: float
    tau: int
    r: float


def average_lagging(trace: Sequence[Action], source_len: int, hyp_len: int) -> LatencyReport:
    """Average Lagging in source tokens.

    ``AL = 1/tau * sum_{t<=tau} (g(t) - (t - 1) / r)`` with ``r = hyp_len / source_len``
    and ``tau`` the first step at which the whole source has been read.
    Lengths exclude markers; a READ of the end marker counts as having read
    the full source, so g is clamped to ``source_len``.  Only the first
    ``hyp_len`` WRITEs are used, which drops a trailing end-marker WRITE.
    """
    if source_len < 1 or hyp_len < 1:
        raise ValueError(f"average lagging needs non-empty source and hypothesis, got {source_len}, {hyp_len}")
    r = hyp_len / source_len
    total = 0.0
    tau = 0
    reads = 0
    for action in trace:
        if action is Action.READ:
            reads += 1
            continue
        tau += 1
        g = min(reads, source_len)
        total += g - (tau - 1) / r
        if g == source_len or tau == hyp_len:
            break
    else:
        raise ValueError(f"trace holds {tau} WRITEs, fewer than hyp_len={hyp_len}")
    return LatencyReport(al=total / tau, tau=tau, r=r)


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class BleuStats:
    """Sufficient statistics of one or more segments; ``+`` aggregates them."""

    hyp_len: int = 0
    ref_len: int = 0
    matches: Tuple[int, ...] = (0,) * MAX_ORDER
    totals: Tuple[int, ...] = (0,) * MAX_ORDER

    def __add__(self, other: "BleuStats") -> "BleuStats":
        return BleuStats(
            self.hyp_len + other.hyp_len,
            self.ref_len + other.ref_len,
            tuple(a + b for a, b in zip(self.matches, other.matches)),
            tuple(a + b for a, b in zip(self.totals, other.totals)),
        )


@dataclass(frozen=True)
class BleuReport:
    bleu: float
    ngram_precisions: Tuple[float, ...]
    brevity_penalty: float
    hyp_len: int
    eff_ref_len: int
    stats: BleuStats = field(default=BleuStats(), repr=False, compare=False)

    def __str__(self):
        precs = "/".join(f"{100 * p:.1f}" for p in self.ngram_precisions)
        return (f"BLEU = {self.bleu:.2f} {precs} (BP = {self.brevity_penalty:.3f} "
                f"hyp_len = {self.hyp_len} ref_len = {self.eff_ref_len})")


def _tokens(sent) -> Tuple[str, ...]:
    if isinstance(sent, str):
        sent = sent.split()
    return strip_markers(sent)


def segment_stats(hypothesis, references: Sequence) -> BleuStats:
    hyp = _tokens(hypothesis)
    refs = [_tokens(r) for r in references]
    if not refs:
        raise ValueError("each hypothesis needs at least one reference")
    eff_ref = min((len(r) for r in refs), key=lambda n: (abs(n - len(hyp)), n))
    matches, totals = [], []
    for n in range(1, MAX_ORDER + 1):
        hyp_counts = ngrams(hyp, n)
        max_ref = Counter()
        for ref in refs:
            max_ref |= ngrams(ref, n)
        matches.append(sum(min(c, max_ref[g]) for g, c in hyp_counts.items()))
        totals.append(max(len(hyp) - n + 1, 0))
    return BleuStats(len(hyp), eff_ref, tuple(matches), tuple(totals))


def bleu_from_stats(stats: BleuStats, smooth: bool = False) -> BleuReport:
    """Unsmoothed corpus BLEU, or add-one smoothing on orders >= 2 when ``smooth``."""
    precisions: List[float] = []
    for n, (m, t) in enumerate(zip(stats.matches, stats.totals), start=1):
        if smooth and n > 1:
            precisions.append((m + 1) / (t + 1))
        else:
            precisions.append(m / t if t else 0.0)
    if stats.hyp_len == 0:
        bp = 0.0
    else:
        bp = min(1.0, math.exp(1.0 - stats.ref_len / stats.hyp_len))
    if min(precisions) <= 0.0:
        bleu = 0.0
    else:
        bleu = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / MAX_ORDER)
    return BleuReport(bleu, tuple(precisions), bp, stats.hyp_len, stats.ref_len, stats)


def corpus_bleu(hypotheses: Sequence, references: Sequence[Sequence]) -> BleuReport:
    """Corpus BLEU-4 against one reference set per hypothesis.

    Clipping uses the per-segment maximum count over references and the
    effective reference length is the closest one (shorter on ties).
    """
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses but {len(references)} reference sets")
    stats = BleuStats()
    for hyp, refs in zip(hypotheses, references):
        stats = stats + segment_stats(hyp, refs)
    return bleu_from_stats(stats)


def sentence_bleu(hypothesis, references: Sequence) -> BleuReport:
    return bleu_from_stats(segment_stats(hypothesis, references), smooth=True)


def timing_summary(outcomes: Iterable) -> float:
    """Mean wall-clock seconds per written token across decode outcomes."""
    durations = [d for o in outcomes for d in o.elapsed_per_write]
    if not durations:
        raise ValueError("no WRITE timings to summarize")
    return sum(durations) / len(durations)


def format_seconds(seconds: float) -> str:
    return f"{seconds:.4f} s"
