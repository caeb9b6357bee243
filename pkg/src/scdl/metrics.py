"""Span-level scoring and learning-curve emission."""

from __future__ import annotations

import io
from dataclasses import dataclass

from .corpus import TagVocabulary, spans_from_bio


@dataclass(frozen=True)
class SpanScore:
    true_positives: int
    predicted: int
    gold: int

    @property
    def precision(self) -> float:
        return self.true_positives / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return self.true_positives / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


def span_prf1(predicted, gold, vocab: TagVocabulary) -> SpanScore:
    """Exact-match micro-averaged span score.

    A predicted span is correct only when start, end and type all match
    a gold span of the same sentence.
    """
    if len(predicted) != len(gold):
        raise ValueError("predicted and gold corpora differ in length")
    tp = n_pred = n_gold = 0
    for pred_tags, gold_tags in zip(predicted, gold):
        if len(pred_tags) != len(gold_tags):
            raise ValueError("sentence length mismatch")
        pred_spans = set(spans_from_bio(pred_tags, vocab))
        gold_spans = set(spans_from_bio(gold_tags, vocab))
        tp += len(pred_spans & gold_spans)
        n_pred += len(pred_spans)
        n_gold += len(gold_spans)
    return SpanScore(tp, n_pred, n_gold)


def refinery_report(sentences, vocab: TagVocabulary, track: str = "noisy_i") -> SpanScore:
    """How close a rewritten noisy track has come to the gold labels."""
    for s in sentences:
        if s.gold is None:
            raise ValueError("refinery report requires the gold track")
    return span_prf1(
        [s.track(track) for s in sentences],
        [s.track("gold") for s in sentences],
        vocab,
    )


@dataclass(frozen=True)
class CurvePoint:
    step: int
    model: str
    split: str
    precision: float
    recall: float
    f1: float


def emit_curve(history) -> str:
    """CSV learning curve, rows sorted by step then model then split."""
    points = list(history)
    if not points:
        raise ValueError("empty metric history")
    points.sort(key=lambda p: (p.step, p.model, p.split))
    out = io.StringIO()
    out.write("step,model,split,precision,recall,f1\n")
    for p in points:
        out.write(
            f"{p.step},{p.model},{p.split},{p.precision:.6f},{p.recall:.6f},{p.f1:.6f}\n"
        )
    return out.getvalue()
