"""Self-collaborative denoising for distantly supervised sequence labeling."""

from .corpus import (
    AnnotatedSentence,
    Gazetteer,
    Span,
    TagVocabulary,
    distant_annotate,
    inject_noise,
    parse_conll,
    spans_from_bio,
    write_conll,
)
from .denoise import TeacherStudentPair, ema_closed_form, ema_update, token_selection
from .metrics import SpanScore, emit_curve, refinery_report, span_prf1
from .tagger import TaggerConfig, TaggerParams, forward, predict_labels
from .training import ScdlConfig, TrainResult, train

__all__ = [
    "AnnotatedSentence",
    "Gazetteer",
    "ScdlConfig",
    "Span",
    "SpanScore",
    "TagVocabulary",
    "TaggerConfig",
    "TaggerParams",
    "TeacherStudentPair",
    "TrainResult",
    "distant_annotate",
    "ema_closed_form",
    "ema_update",
    "emit_curve",
    "forward",
    "inject_noise",
    "parse_conll",
    "predict_labels",
    "refinery_report",
    "span_prf1",
    "spans_from_bio",
    "token_selection",
    "train",
    "write_conll",
]
