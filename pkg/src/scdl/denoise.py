"""Teacher maintenance and clean-token selection.

The teacher is an exponential moving average of the student; tokens are
trusted when the noisy label agrees with the teacher's pseudo label and
the teacher is confident about it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import TagVocabulary
from .tagger import TaggerParams, labels_from_dists


@dataclass
class TeacherStudentPair:
    teacher: TaggerParams
    student: TaggerParams
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha out of [0, 1]: {self.alpha}")
        for t, s in zip(self.teacher.blocks(), self.student.blocks()):
            if t.shape != s.shape:
                raise ValueError("teacher/student shape mismatch")

    @classmethod
    def from_params(cls, params: TaggerParams, alpha: float) -> "TeacherStudentPair":
        return cls(teacher=params.copy(), student=params.copy(), alpha=alpha)


def select_consistent(noisy_tags, pseudo_tags) -> set[int]:
    """Indices where the noisy label equals the pseudo label (O included)."""
    if len(noisy_tags) != len(pseudo_tags):
        raise ValueError("tag sequences differ in length")
    return {j for j, (y, p) in enumerate(zip(noisy_tags, pseudo_tags)) if y == p}


def select_confident(teacher_dists: np.ndarray, delta: float) -> set[int]:
    """Indices whose max teacher probability is >= delta (inclusive)."""
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta out of (0, 1]: {delta}")
    if len(teacher_dists) == 0:
        return set()
    return set(np.flatnonzero(teacher_dists.max(axis=1) >= delta).tolist())


def token_selection(
    noisy_tags, teacher_dists: np.ndarray, delta: float, vocab: TagVocabulary
) -> set[int]:
    """Intersection of consistency and confidence selection."""
    pseudo = labels_from_dists(teacher_dists, vocab)
    return select_consistent(noisy_tags, pseudo) & select_confident(teacher_dists, delta)


def ema_update(pair: TeacherStudentPair) -> TeacherStudentPair:
    """teacher <- alpha * teacher + (1 - alpha) * student; student untouched."""
    a = pair.alpha
    new_teacher = TaggerParams(
        pair.teacher.config,
        *[a * t + (1.0 - a) * s for t, s in zip(pair.teacher.blocks(), pair.student.blocks())],
    )
    return TeacherStudentPair(new_teacher, pair.student, a)


def ema_closed_form(
    theta0: TaggerParams, grads, gamma: float, alpha: float
) -> TaggerParams:
    """Teacher after len(grads) plain-SGD student steps plus EMA, in one shot.

    With teacher and student both starting at theta0, the teacher after i
    steps equals theta0 - gamma * sum_j (1 - alpha^(i-j)) * g_j.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha out of [0, 1]: {alpha}")
    i = len(grads)
    if i == 0:
        return theta0.copy()
    acc = [np.zeros_like(b) for b in theta0.blocks()]
    for j, g in enumerate(grads):
        w = 1.0 - alpha ** (i - j)
        for a, block in zip(acc, g.blocks()):
            a += w * block
    return TaggerParams(
        theta0.config,
        *[b - gamma * a for b, a in zip(theta0.blocks(), acc)],
    )
