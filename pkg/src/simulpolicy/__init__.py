"""Simultaneous decoding with adaptive policies composed from fixed wait-k policies."""

from .core import (
    BOS,
    EOS,
    READ,
    WRITE,
    Action,
    DecodeOutcome,
    Distribution,
    format_trace,
    g_from_trace,
    lag_after,
    make_sentence,
    parse_trace,
    validate_trace,
)
from .ensemble import EnsembleScorer, EvalMatrix, Model, ensemble_score, evaluate_matrix, select_top_n
from .metrics import average_lagging, corpus_bleu, sentence_bleu, timing_summary
from .policies import (
    BaselineConfig,
    ModelBank,
    StreamSource,
    ThresholdSchedule,
    adaptive_decode,
    fixed_policy_decode,
    full_sentence_decode,
    sweep_schedules,
    threshold_schedule,
    wait_if_diff_decode,
    wait_if_worse_decode,
)
from .scorers import (
    DictionaryScorer,
    ScoreResult,
    Scorer,
    ScriptedScorer,
    force_decode,
    load_lexicon,
    load_scripted,
    score,
    wait_k_g,
)

__version__ = "0.1.0"
