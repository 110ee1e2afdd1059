"""Probability-space ensembles and per-policy model selection from a dev matrix."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

from .core import Distribution
from .metrics import corpus_bleu
from .policies import fixed_policy_decode
from .scorers import Scorer

logger = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    pass


class EnsembleScorer:
    """Equal-weight arithmetic mean of member distributions.

    Satisfies the scorer contract, so an ensemble can stand wherever a single
    scorer is expected.
    """

    def __init__(self, members: Sequence[Scorer]):
        members = tuple(members)
        if not members:
            raise ConfigurationError("an ensemble needs at least one member")
        vocab = members[0].vocab
        for m in members[1:]:
            if m.vocab != vocab:
                raise ConfigurationError("ensemble members do not share a target vocabulary")
        self.members = members
        self._vocab = vocab

    @property
    def vocab(self) -> frozenset:
        return self._vocab

    def score(self, source_prefix, target_prefix) -> Distribution:
        if len(self.members) == 1:
            return self.members[0].score(source_prefix, target_prefix)
        dists = [m.score(source_prefix, target_prefix) for m in self.members]
        n = len(dists)
        return Distribution({tok: sum(d.probs[tok] for d in dists) / n for tok in self._vocab})

    def __len__(self):
        return len(self.members)

    def __repr__(self):
        return f"EnsembleScorer({len(self.members)} members)"


def ensemble_score(bundle: EnsembleScorer, source_prefix, target_prefix) -> Distribution:
    return bundle.score(tuple(source_prefix), tuple(target_prefix))


@dataclass(frozen=True)
class Model:
    """A named scorer together with the wait-k lag it was built for."""

    name: str
    trained_k: int
    scorer: Scorer = field(compare=False, repr=False)


@dataclass
class EvalMatrix:
    """Dev BLEU of every model under every applied wait-k policy."""

    scores: Dict[Tuple[str, int], float]
    trained_k: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        models, policies = self.models, self.policies
        missing = [(m, k) for m in models for k in policies if (m, k) not in self.scores]
        if missing:
            raise ValueError(f"evaluation matrix incomplete, missing cells {missing[:5]}")

    @property
    def models(self) -> List[str]:
        return list(dict.fromkeys(m for m, _ in self.scores))

    @property
    def policies(self) -> List[int]:
        return sorted({k for _, k in self.scores})

    def column(self, k: int) -> Dict[str, float]:
        if k not in self.policies:
            raise KeyError(f"no policy column k={k} in the evaluation matrix")
        return {m: self.scores[(m, k)] for m in self.models}

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "policy_k", "bleu"])
            for (m, k), bleu in self.scores.items():
                w.writerow([m, k, f"{bleu:.4f}"])

    @classmethod
    def from_csv(cls, path, trained_k: Mapping[str, int] | None = None) -> "EvalMatrix":
        scores = {}
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["model", "policy_k", "bleu"]:
                raise ValueError(f"{path}: expected header model,policy_k,bleu, got {reader.fieldnames}")
            for row in reader:
                scores[(row["model"], int(row["policy_k"]))] = float(row["bleu"])
        return cls(scores, dict(trained_k or {}))


def evaluate_matrix(models: Sequence[Model], policies: Sequence[int], corpus, decode_corpus=None) -> EvalMatrix:
    """Decode the dev corpus with every model under every wait-k policy and record corpus BLEU.

    ``decode_corpus(scorer, k, corpus) -> BleuReport`` may be supplied to run
    cells in a worker pool; the default decodes sequentially.
    """
    if not models or not policies:
        raise ValueError("evaluate_matrix needs at least one model and one policy")
    if not corpus.sources:
        raise ValueError("evaluate_matrix needs a non-empty dev corpus")

    def sequential(scorer, k, corpus):
        hyps = [fixed_policy_decode(scorer, k, src).tokens for src in corpus.sources]
        return corpus_bleu(hyps, corpus.reference_sets)

    decode_corpus = decode_corpus or sequential
    scores = {}
    for model in models:
        for k in policies:
            scores[(model.name, k)] = decode_corpus(model.scorer, k, corpus).bleu
            logger.debug("matrix cell %s @ wait-%d: %.2f", model.name, k, scores[(model.name, k)])
    return EvalMatrix(scores, {m.name: m.trained_k for m in models})


def select_top_n(matrix: EvalMatrix, k: int, n: int) -> List[str]:
    """Best ``n`` models under policy ``k``; ties go to the smaller trained lag, then the smaller name."""
    if k not in matrix.policies:
        raise ValueError(f"unknown policy column k={k}")
    column = matrix.column(k)
    if not 1 <= n <= len(column):
        raise ValueError(f"n must be between 1 and {len(column)}, got {n}")
    ranked = sorted(column, key=lambda m: (-column[m], matrix.trained_k.get(m, 0), m))
    return ranked[:n]


def select_bundles(matrix: EvalMatrix, policies: Iterable[int], n: int) -> Dict[int, List[str]]:
    return {k: select_top_n(matrix, k, n) for k in policies}
