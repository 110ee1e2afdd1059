"""READ/WRITE decoders: fixed wait-k, threshold-composed adaptive, and wait-if-* baselines."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Tuple

from .core import EOS, DecodeOutcome, TraceRecorder, check_token
from .scorers import Scorer, force_decode

Clock = Callable[[], float]

# Endpoint pairs (threshold at the smallest lag, threshold at the largest lag)
# of the 18-setting sweep: first relax the aggressive end with the
# conservative end at 0, then raise the conservative end with the aggressive
# end pinned at 1.
RHO_SWEEP: Tuple[Tuple[float, float], ...] = tuple(
    [(r, 0.0) for r in (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)]
    + [(1.0, r) for r in (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)]
)


class StreamSource:
    """Feeds source tokens one at a time, then the end marker exactly once."""

    def __init__(self, tokens: Iterable[str]):
        self._tokens = tuple(check_token(t) for t in tokens if t != EOS)
        self._pos = 0
        self._done = False

    def __len__(self):
        return len(self._tokens)

    @property
    def exhausted(self) -> bool:
        return self._done

    def read(self) -> str:
        if self._done:
            raise EOFError("source stream already returned the end marker")
        if self._pos < len(self._tokens):
            tok = self._tokens[self._pos]
            self._pos += 1
            return tok
        self._done = True
        return EOS


def as_stream(source) -> StreamSource:
    return source if isinstance(source, StreamSource) else StreamSource(source)


def default_cap(source_len: int) -> int:
    return 2 * source_len + 50


@dataclass(frozen=True)
class ThresholdSchedule:
    rho_first: float
    rho_last: float
    k_min: int = 1
    k_max: int = 10

    def __post_init__(self):
        for rho in (self.rho_first, self.rho_last):
            if not 0.0 <= rho <= 1.0:
                raise ValueError(f"threshold {rho} outside [0, 1]")
        if not 1 <= self.k_min <= self.k_max:
            raise ValueError(f"need 1 <= k_min <= k_max, got {self.k_min}, {self.k_max}")

    @property
    def step(self) -> float:
        if self.k_max == self.k_min:
            return 0.0
        return (self.rho_first - self.rho_last) / (self.k_max - self.k_min)


def threshold_schedule(s: ThresholdSchedule) -> Dict[int, float]:
    """Linearly interpolated thresholds, largest at ``k_min`` when ``rho_first > rho_last``."""
    lo, hi = sorted((s.rho_first, s.rho_last))
    d = s.step
    return {
        s.k_min + j: min(hi, max(lo, s.rho_first - d * j))
        for j in range(s.k_max - s.k_min + 1)
    }


def sweep_schedules(k_min: int = 1, k_max: int = 10, endpoints=RHO_SWEEP) -> List[ThresholdSchedule]:
    return [ThresholdSchedule(a, b, k_min, k_max) for a, b in endpoints]


class ModelBank:
    """Scorer bundle and write threshold for every lag in ``[k_min, k_max]``."""

    def __init__(self, k_min: int, k_max: int, scorers: Mapping[int, Scorer], thresholds: Mapping[int, float]):
        if not 1 <= k_min <= k_max:
            raise ValueError(f"need 1 <= k_min <= k_max, got {k_min}, {k_max}")
        missing = [k for k in range(k_min, k_max + 1) if k not in scorers or k not in thresholds]
        if missing:
            raise ValueError(f"no scorer or threshold for lag(s) {missing}")
        vocabs = {scorers[k].vocab for k in range(k_min, k_max + 1)}
        if len(vocabs) != 1:
            raise ValueError("scorer bundles in a bank must share one target vocabulary")
        for k in range(k_min, k_max + 1):
            if not 0.0 <= thresholds[k] <= 1.0:
                raise ValueError(f"threshold for k={k} outside [0, 1]: {thresholds[k]}")
        self.k_min = k_min
        self.k_max = k_max
        self.scorers = {k: scorers[k] for k in range(k_min, k_max + 1)}
        self.thresholds = {k: float(thresholds[k]) for k in range(k_min, k_max + 1)}

    @classmethod
    def from_schedule(cls, scorers: Mapping[int, Scorer] | Scorer, schedule: ThresholdSchedule) -> "ModelBank":
        if not isinstance(scorers, Mapping):
            scorers = {k: scorers for k in range(schedule.k_min, schedule.k_max + 1)}
        return cls(schedule.k_min, schedule.k_max, scorers, threshold_schedule(schedule))

    @property
    def vocab(self) -> frozenset:
        return self.scorers[self.k_min].vocab

    def __repr__(self):
        return f"ModelBank(k={self.k_min}..{self.k_max}, thresholds={self.thresholds})"


@dataclass(frozen=True)
class BaselineConfig:
    s0: int
    delta: int

    def __post_init__(self):
        if self.s0 < 0 or self.delta < 1:
            raise ValueError(f"need s0 >= 0 and delta >= 1, got s0={self.s0} delta={self.delta}")


class _Run:
    """Bookkeeping shared by all decoders: recorder, cap and per-WRITE timing."""

    def __init__(self, source, max_len_cap: Optional[int], clock: Clock):
        self.src = as_stream(source)
        self.rec = TraceRecorder()
        self.cap = default_cap(len(self.src)) if max_len_cap is None else max_len_cap
        self.clock = clock
        self._mark = clock()
        self.truncated = False

    @property
    def done(self) -> bool:
        return bool(self.rec.hypothesis) and self.rec.hypothesis[-1] == EOS

    def capped(self) -> bool:
        if len(self.rec.hypothesis) >= self.cap:
            self.truncated = True
        return self.truncated

    def read(self):
        self.rec.read(self.src.read())

    def write(self, token: str, prob: float):
        now = self.clock()
        self.rec.write(token, prob, now - self._mark)
        self._mark = now

    def outcome(self) -> DecodeOutcome:
        return self.rec.freeze(truncated=self.truncated)


def _fixed(scorer: Scorer, reads_needed: Callable[[int], float], source, max_len_cap, clock) -> DecodeOutcome:
    run = _Run(source, max_len_cap, clock)
    rec = run.rec
    while not run.done and not run.capped():
        need = reads_needed(len(rec.hypothesis) + 1)
        while len(rec.source) < need and not run.src.exhausted:
            run.read()
        token, prob = scorer.score(tuple(rec.source), tuple(rec.hypothesis)).top()
        run.write(token, prob)
    return run.outcome()


def fixed_policy_decode(
    scorer: Scorer,
    k: int,
    source,
    catchup_every: Optional[int] = None,
    max_len_cap: Optional[int] = None,
    clock: Clock = time.perf_counter,
) -> DecodeOutcome:
    """Wait-k decoding: target step t is written after ``t + k - 1`` reads.

    With ``catchup_every = c`` one extra source token is read after every c
    WRITEs.  Once the source is exhausted the decoder keeps writing until the
    end marker or the length cap.  Passing a scorer that was not built for
    lag ``k`` gives test-time wait-k.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if catchup_every is not None and catchup_every < 1:
        raise ValueError(f"catchup_every must be >= 1, got {catchup_every}")

    def reads_needed(t):
        extra = (t - 1) // catchup_every if catchup_every else 0
        return t + k - 1 + extra

    return _fixed(scorer, reads_needed, source, max_len_cap, clock)


def full_sentence_decode(scorer: Scorer, source, max_len_cap=None, clock: Clock = time.perf_counter) -> DecodeOutcome:
    """Greedy decoding after the whole source, end marker included, has been read."""
    return _fixed(scorer, lambda t: float("inf"), source, max_len_cap, clock)


def adaptive_decode(
    bank: ModelBank,
    source,
    max_len_cap: Optional[int] = None,
    clock: Clock = time.perf_counter,
) -> DecodeOutcome:
    """Compose the bank's wait-k policies through per-lag confidence thresholds.

    At lag k (source tokens read minus target tokens written, markers
    included) the lag-k bundle is forced through the current prefixes; its top
    token is written when ``k >= k_max`` or its probability reaches the lag-k
    threshold, otherwise one more source token is read.  Lags below ``k_min``
    read without scoring.  After the source end marker is read, the k_max
    bundle finishes the hypothesis.
    """
    run = _Run(source, max_len_cap, clock)
    rec = run.rec
    k_min, k_max = bank.k_min, bank.k_max

    while not run.src.exhausted and not run.done:
        k = rec.lag
        if k < k_min:
            run.read()
            continue
        if run.capped():
            return run.outcome()
        lag = min(k, k_max)
        res = force_decode(bank.scorers[lag], lag, rec.source, rec.hypothesis)
        if k >= k_max or res.top_prob >= bank.thresholds[lag]:
            run.write(res.top_token, res.top_prob)
        else:
            run.read()

    while not run.done and not run.capped():
        res = force_decode(bank.scorers[k_max], k_max, rec.source, rec.hypothesis)
        run.write(res.top_token, res.top_prob)
    return run.outcome()


def _wait_if(scorer, cfg: BaselineConfig, source, max_len_cap, clock, should_read) -> DecodeOutcome:
    run = _Run(source, max_len_cap, clock)
    rec = run.rec
    while len(rec.source) < cfg.s0 and not run.src.exhausted:
        run.read()
    history: List[Tuple[str, float]] = []
    while not run.done and not run.capped():
        top = scorer.score(tuple(rec.source), tuple(rec.hypothesis)).top()
        step = len(history)
        history.append(top)
        if not run.src.exhausted and step >= cfg.delta and should_read(top, history[step - cfg.delta]):
            run.read()
        else:
            run.write(*top)
    return run.outcome()


def wait_if_diff_decode(
    scorer: Scorer,
    cfg: BaselineConfig,
    source,
    max_len_cap: Optional[int] = None,
    clock: Clock = time.perf_counter,
) -> DecodeOutcome:
    """Read when the current top token differs from the one ``delta`` decisions ago."""
    return _wait_if(scorer, cfg, source, max_len_cap, clock, lambda now, then: now[0] != then[0])


def wait_if_worse_decode(
    scorer: Scorer,
    cfg: BaselineConfig,
    source,
    max_len_cap: Optional[int] = None,
    clock: Clock = time.perf_counter,
) -> DecodeOutcome:
    """Read when the current top probability is strictly below the one ``delta`` decisions ago."""
    return _wait_if(scorer, cfg, source, max_len_cap, clock, lambda now, then: now[1] < then[1])
