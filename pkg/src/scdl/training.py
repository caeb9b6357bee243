"""Training orchestration: pre-training, self denoising, collaborative label rewriting.

Two structurally distinct teacher-student networks train on the same batch
stream. Each network selects trustworthy tokens against its own noisy
track; every `update_cycle` steps the teachers rewrite each other's track.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .corpus import AnnotatedSentence, TagVocabulary
from .denoise import TeacherStudentPair, ema_update, select_confident, select_consistent
from .metrics import CurvePoint, SpanScore, refinery_report, span_prf1
from .tagger import (
    PAD_TOKEN,
    TaggerConfig,
    TaggerParams,
    _one_hot,
    forward,
    init_params,
    labels_from_dists,
    loss_hard,
    loss_soft,
    predict_labels,
    sgd_step,
)

ABLATIONS = ("no_consistency", "no_confidence", "single_network", "no_teachers", "hard_labels")

MODEL_ORDER = ("teacher1", "student1", "teacher2", "student2")


class TrainingDiverged(RuntimeError):
    """A loss or parameter went non-finite; message carries diagnostics."""


@dataclass(frozen=True)
class ScdlConfig:
    batch_size: int = 16
    max_epochs: int = 7
    gamma: float = 2.0
    alpha: float = 0.995
    delta: float = 0.9
    update_cycle: int = 0  # 0 means "about seven epochs of the loaded corpus"
    pretrain_epochs: int = 6
    seed: int = 0
    net1_seed: int = 11
    net2_seed: int = 23
    hash_buckets: int = 4096
    net1_embed_dim: int = 24
    net1_window: int = 1
    net1_hidden_dim: int = 32
    net2_embed_dim: int = 20
    net2_window: int = 1
    net2_hidden_dim: int = 20
    init_scale: float = 0.1
    denoise_gamma: float = 0.0  # 0 means "use gamma"
    student_word_dropout: float = 0.0
    normalize_by_selected: bool = False
    cycle_counts_pretrain: bool = False
    warmup_steps: int = 0
    parallel: bool = False
    ablations: frozenset = frozenset()

    def __post_init__(self):
        if self.update_cycle < 0:
            raise ValueError("update_cycle must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 0 or self.pretrain_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if not 0.0 <= self.student_word_dropout < 1.0:
            raise ValueError("student_word_dropout must be in [0, 1)")
        unknown = set(self.ablations) - set(ABLATIONS)
        if unknown:
            raise ValueError(f"unknown ablations: {sorted(unknown)}")

    def tagger_configs(self, num_tags: int) -> tuple[TaggerConfig, TaggerConfig]:
        c1 = TaggerConfig(
            num_tags=num_tags,
            vocab_hash_buckets=self.hash_buckets,
            embed_dim=self.net1_embed_dim,
            window=self.net1_window,
            hidden_dim=self.net1_hidden_dim,
            init_seed=self.net1_seed,
            init_scale=self.init_scale,
        )
        c2 = TaggerConfig(
            num_tags=num_tags,
            vocab_hash_buckets=self.hash_buckets,
            embed_dim=self.net2_embed_dim,
            window=self.net2_window,
            hidden_dim=self.net2_hidden_dim,
            init_seed=self.net2_seed,
            init_scale=self.init_scale,
        )
        return c1, c2

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "ablations":
                value = ",".join(sorted(value))
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ScdlConfig":
        typed = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or key not in typed:
                raise ValueError(f"config line {lineno}: unknown entry {line!r}")
            if key == "ablations":
                kwargs[key] = frozenset(v for v in value.split(",") if v)
            elif typed[key] == "bool":
                if value not in ("True", "False", "true", "false", "1", "0"):
                    raise ValueError(f"config line {lineno}: bad boolean {value!r}")
                kwargs[key] = value in ("True", "true", "1")
            elif typed[key] == "int":
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        return cls(**kwargs)


@dataclass
class MaskStats:
    selected: int
    total: int
    loss: float


@dataclass
class TrainState:
    pair1: TeacherStudentPair
    pair2: TeacherStudentPair
    sentences: list[AnnotatedSentence]
    step: int = 0


@dataclass
class TrainResult:
    best_model: str
    best_params: TaggerParams
    best_f1: float
    history: list[CurvePoint]
    refinery: list[tuple[int, str, SpanScore]]  # (step, track, score)
    state: TrainState = None
    selection_trace: list[tuple[int, str, int, int]] = field(default_factory=list)


def _check_finite(loss: float, where: str) -> None:
    if not math.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss {loss!r} during {where}")


def _copy_corpus(sentences) -> list[AnnotatedSentence]:
    return [
        AnnotatedSentence(
            list(s.tokens),
            gold=None if s.gold is None else list(s.gold),
            noisy_i=None if s.noisy_i is None else list(s.noisy_i),
            noisy_ii=None if s.noisy_ii is None else list(s.noisy_ii),
        )
        for s in sentences
    ]


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        yield order[start : start + batch_size].tolist()


def pretrain(
    config: ScdlConfig,
    corpus,
    vocab: TagVocabulary,
    rng: np.random.Generator | None = None,
) -> tuple[TaggerParams, TaggerParams]:
    """Warm up both taggers with hard cross entropy on the distant labels."""
    if not corpus:
        raise ValueError("empty corpus")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    cfg1, cfg2 = config.tagger_configs(vocab.size)
    p1, p2 = init_params(cfg1), init_params(cfg2)
    for epoch in range(config.pretrain_epochs):
        order = rng.permutation(len(corpus))
        for batch_idx in _batches(order, config.batch_size):
            batch = [corpus[i] for i in batch_idx]
            loss1, g1 = loss_hard(p1, batch, "noisy_i")
            _check_finite(loss1, f"pretrain epoch {epoch} (network 1)")
            p1 = sgd_step(p1, g1, config.gamma)
            loss2, g2 = loss_hard(p2, batch, "noisy_ii")
            _check_finite(loss2, f"pretrain epoch {epoch} (network 2)")
            p2 = sgd_step(p2, g2, config.gamma)
    return p1, p2


def self_denoise_step(
    pair: TeacherStudentPair,
    batch,
    track: str,
    config: ScdlConfig,
    vocab: TagVocabulary,
    lr: float | None = None,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[TeacherStudentPair, MaskStats]:
    """One inner-loop step: select tokens, update student, EMA the teacher.

    The teacher predicts on clean input; with student_word_dropout > 0 the
    student is trained on a copy with random tokens blanked out, which
    keeps student and teacher predictions apart (a deterministic forward
    would otherwise sit at a zero-gradient fixed point once they agree).
    When nothing is selected, both models are left untouched.
    """
    if not batch:
        raise ValueError("empty batch")
    if lr is None:
        lr = config.denoise_gamma or config.gamma
    abl = config.ablations
    dists = [forward(pair.teacher, s.tokens) for s in batch]
    masks = []
    targets = []
    total = 0
    for sentence, d in zip(batch, dists):
        noisy = sentence.track(track)
        n = len(sentence)
        total += n
        everything = set(range(n))
        cp = (
            everything
            if "no_consistency" in abl
            else select_consistent(noisy, labels_from_dists(d, vocab))
        )
        hcp = (
            everything
            if "no_confidence" in abl
            else select_confident(d, config.delta)
        )
        masks.append(cp & hcp)
        if "hard_labels" in abl:
            targets.append(_one_hot(noisy, vocab.size))
        else:
            targets.append(d)
    selected = sum(len(m) for m in masks)
    if selected == 0:
        return pair, MaskStats(0, total, 0.0)
    student_batch = batch
    if config.student_word_dropout > 0.0 and dropout_rng is not None:
        student_batch = []
        for sentence in batch:
            drop = dropout_rng.random(len(sentence)) < config.student_word_dropout
            student_batch.append(
                AnnotatedSentence(
                    [PAD_TOKEN if d else t for t, d in zip(sentence.tokens, drop)]
                )
            )
    loss, grad = loss_soft(
        pair.student, student_batch, targets, masks, config.normalize_by_selected
    )
    _check_finite(loss, "self denoising")
    new_student = sgd_step(pair.student, grad, lr)
    pair = ema_update(TeacherStudentPair(pair.teacher, new_student, pair.alpha))
    return pair, MaskStats(selected, total, loss)


def collaborative_update(state: TrainState, vocab: TagVocabulary) -> None:
    """Teachers rewrite each other's noisy track over the whole training set."""
    for sentence in state.sentences:
        sentence.set_track("noisy_i", predict_labels(state.pair2.teacher, sentence.tokens, vocab))
        sentence.set_track("noisy_ii", predict_labels(state.pair1.teacher, sentence.tokens, vocab))


def select_best(candidates) -> tuple[str, TaggerParams, float]:
    """First maximal dev score in the fixed model order."""
    best = None
    for name, params, score in candidates:
        if not math.isfinite(score):
            raise ValueError(f"non-finite dev score for {name}")
        if best is None or score > best[2]:
            best = (name, params, score)
    return best


def evaluate_models(state: TrainState, dev, vocab: TagVocabulary) -> dict[str, SpanScore]:
    gold = [s.track("gold") for s in dev]
    models = {
        "teacher1": state.pair1.teacher,
        "student1": state.pair1.student,
        "teacher2": state.pair2.teacher,
        "student2": state.pair2.student,
    }
    return {
        name: span_prf1([predict_labels(p, s.tokens, vocab) for s in dev], gold, vocab)
        for name, p in models.items()
    }


def _warmup_lr(config: ScdlConfig, step: int) -> float:
    base = config.denoise_gamma or config.gamma
    if config.warmup_steps <= 0:
        return base
    return base * min(1.0, step / config.warmup_steps)


def train(
    config: ScdlConfig,
    train_corpus,
    dev_corpus,
    vocab: TagVocabulary,
    epoch_callback=None,
) -> TrainResult:
    """Full pipeline; returns the best of the four models on dev span F1.

    The caller's corpora are not mutated; the live noisy tracks end up on
    `result.state.sentences`.
    """
    if not dev_corpus or any(s.gold is None for s in dev_corpus):
        raise ValueError("dev corpus with gold track required")
    rng = np.random.default_rng(config.seed)
    corpus = _copy_corpus(train_corpus)
    p1, p2 = pretrain(config, corpus, vocab, rng)
    alpha = 0.0 if "no_teachers" in config.ablations else config.alpha
    state = TrainState(
        pair1=TeacherStudentPair.from_params(p1, alpha),
        pair2=TeacherStudentPair.from_params(p2, alpha),
        sentences=corpus,
    )
    single = "single_network" in config.ablations
    per_epoch = math.ceil(len(corpus) / config.batch_size)
    cycle = config.update_cycle or 7 * per_epoch
    pretrain_steps = config.pretrain_epochs * per_epoch if config.cycle_counts_pretrain else 0

    history: list[CurvePoint] = []
    refinery: list[tuple[int, str, SpanScore]] = []
    selection_trace: list[tuple[int, str, int, int]] = []
    best = None

    def record(step: int):
        nonlocal best
        scores = evaluate_models(state, dev_corpus, vocab)
        for name in MODEL_ORDER:
            s = scores[name]
            history.append(CurvePoint(step, name, "dev", s.precision, s.recall, s.f1))
        for track in ("noisy_i", "noisy_ii"):
            refinery.append((step, track, refinery_report(corpus, vocab, track)))
        candidates = [
            (
                name,
                getattr(state, "pair1" if name.endswith("1") else "pair2"),
                scores[name].f1,
            )
            for name in MODEL_ORDER
        ]
        resolved = [
            (name, (pair.teacher if name.startswith("teacher") else pair.student), f1)
            for name, pair, f1 in candidates
        ]
        name, params, f1 = select_best(resolved)
        if best is None or f1 > best[2]:
            best = (name, params.copy(), f1)

    record(step=0)
    if epoch_callback is not None:
        epoch_callback(0, state)
    drop_rng1 = np.random.default_rng([config.seed, 1])
    drop_rng2 = np.random.default_rng([config.seed, 2])
    executor = ThreadPoolExecutor(max_workers=2) if config.parallel else None
    try:
        for epoch in range(1, config.max_epochs + 1):
            order = rng.permutation(len(corpus))
            for batch_idx in _batches(order, config.batch_size):
                batch = [corpus[i] for i in batch_idx]
                state.step += 1
                lr = _warmup_lr(config, state.step)

                def step1():
                    return self_denoise_step(
                        state.pair1, batch, "noisy_i", config, vocab, lr, drop_rng1
                    )

                def step2():
                    return self_denoise_step(
                        state.pair2, batch, "noisy_ii", config, vocab, lr, drop_rng2
                    )

                if single:
                    state.pair1, stats1 = step1()
                    selection_trace.append((state.step, "net1", stats1.selected, stats1.total))
                elif executor is not None:
                    f1_, f2_ = executor.submit(step1), executor.submit(step2)
                    state.pair1, stats1 = f1_.result()
                    state.pair2, stats2 = f2_.result()
                    selection_trace.append((state.step, "net1", stats1.selected, stats1.total))
                    selection_trace.append((state.step, "net2", stats2.selected, stats2.total))
                else:
                    state.pair1, stats1 = step1()
                    state.pair2, stats2 = step2()
                    selection_trace.append((state.step, "net1", stats1.selected, stats1.total))
                    selection_trace.append((state.step, "net2", stats2.selected, stats2.total))

                if not single and (state.step + pretrain_steps) % cycle == 0:
                    collaborative_update(state, vocab)
            record(state.step)
            if epoch_callback is not None:
                epoch_callback(epoch, state)
    finally:
        if executor is not None:
            executor.shutdown()

    name, params, f1 = best
    return TrainResult(
        best_model=name,
        best_params=params,
        best_f1=f1,
        history=history,
        refinery=refinery,
        state=state,
        selection_trace=selection_trace,
    )
