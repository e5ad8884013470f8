"""Per-phoneme practice feedback derived from a word classifier.

Given a trained word model and the feature vector extracted from one
attempt, each phoneme is scored by how much the predicted intelligibility
would improve if that phoneme's scores moved a small step toward their
ideal values.  The phoneme whose nudge helps most is the best candidate
for focused practice.

Perturbations are applied per phoneme, holding everything else fixed:

* the rank scores (substitution, insertion/deletion, neighbor) move up by
  ``delta``, clamped to [0, 1];
* the acoustic score moves up by ``delta`` standard deviations, where the
  standard deviation is the one the model learned for that coordinate;
* the duration is tried at ``(1 - duration_step)`` and
  ``(1 + duration_step)`` times its value, and the better direction is
  reported.

Gains come in two flavours: ``gain_sum`` is the probability difference
``p(v') - p(v)`` and ``gain_product`` is the ratio ``p(v') / p(v)`` (with
the denominator floored at 1e-9).  Rankings are 1-based: ranking ``[2, 3,
1]`` means phoneme 2 has the highest gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import DomainError
from .features import PER_PHONEME, WordFeatureVector

__all__ = [
    "DEFAULT_DELTA",
    "DEFAULT_DURATION_STEP",
    "PROB_EPSILON",
    "PhonemeGain",
    "FeedbackReport",
    "phoneme_gains",
    "rank_phonemes",
    "worst_words",
    "build_report",
    "report_to_text",
]

DEFAULT_DELTA = 0.05
DEFAULT_DURATION_STEP = 0.2
PROB_EPSILON = 1e-9

_RANK_MODES = ("sum", "product")


@dataclass(frozen=True)
class PhonemeGain:
    """Improvement estimates for one phoneme position (0-based ``index``)."""

    index: int
    phoneme: str
    gain_sum: float
    gain_product: float
    duration_direction: str  # "longer", "shorter", or "neutral"
    duration_gain: float


@dataclass(frozen=True)
class FeedbackReport:
    """Feedback for one word attempt.

    ``ranking_sum`` and ``ranking_product`` list 1-based phoneme positions
    from most to least promising under the respective gain flavour.
    """

    word: str
    probability: float
    gains: Tuple[PhonemeGain, ...]
    ranking_sum: Tuple[int, ...]
    ranking_product: Tuple[int, ...]

    def to_dict(self) -> Dict[str, object]:
        return {
            "word": self.word,
            "probability": self.probability,
            "ranking": list(self.ranking_sum),
            "gains_sum": [g.gain_sum for g in self.gains],
            "gains_product": [g.gain_product for g in self.gains],
            "duration_direction": [g.duration_direction for g in self.gains],
        }


def _probability(model, values: np.ndarray) -> float:
    return float(model.predict_prob(values[np.newaxis, :])[0])


def phoneme_gains(
    model,
    vector: WordFeatureVector,
    delta: float = DEFAULT_DELTA,
    duration_step: float = DEFAULT_DURATION_STEP,
) -> List[PhonemeGain]:
    """Score every phoneme position of ``vector`` under ``model``.

    ``model`` is any word model exposing ``num_phonemes``, ``std`` (the
    per-coordinate scale used during standardization) and
    ``predict_prob``.  Raises :class:`DomainError` when the vector shape
    does not match the model.
    """
    if delta < 0 or duration_step < 0:
        raise DomainError("delta and duration_step must be non-negative")
    n = vector.num_phonemes
    if model.num_phonemes != n:
        raise DomainError(
            f"model for {model.num_phonemes} phonemes cannot score a "
            f"{n}-phoneme vector"
        )
    base_values = np.asarray(vector.values(), dtype=np.float64)
    if base_values.shape[0] != model.mean.shape[0]:
        raise DomainError(
            f"vector has {base_values.shape[0]} features, model expects "
            f"{model.mean.shape[0]}"
        )
    base_prob = _probability(model, base_values)
    phonemes = vector.phonemes if vector.phonemes else tuple("" for _ in range(n))

    gains: List[PhonemeGain] = []
    for i in range(n):
        off = PER_PHONEME * i
        perturbed = base_values.copy()
        # Duration (off + 0) is handled separately below.
        perturbed[off + 1] += delta * float(model.std[off + 1])
        for rel in (2, 3, 8):  # substitution, ins/del, neighbor ranks
            perturbed[off + rel] = min(1.0, perturbed[off + rel] + delta)
        prob = _probability(model, perturbed)
        gain_sum = prob - base_prob
        gain_product = prob / max(base_prob, PROB_EPSILON)

        longer = base_values.copy()
        longer[off] = base_values[off] * (1.0 + duration_step)
        shorter = base_values.copy()
        shorter[off] = base_values[off] * (1.0 - duration_step)
        p_longer = _probability(model, longer)
        p_shorter = _probability(model, shorter)
        if duration_step == 0 or p_longer == p_shorter:
            direction, dur_gain = "neutral", p_longer - base_prob
        elif p_longer > p_shorter:
            direction, dur_gain = "longer", p_longer - base_prob
        else:
            direction, dur_gain = "shorter", p_shorter - base_prob

        gains.append(
            PhonemeGain(
                index=i,
                phoneme=phonemes[i],
                gain_sum=gain_sum,
                gain_product=gain_product,
                duration_direction=direction,
                duration_gain=dur_gain,
            )
        )
    return gains


def rank_phonemes(gains: Sequence[float], mode: str = "sum") -> List[int]:
    """Order phoneme positions by descending gain; 1-based positions.

    Ties break toward the lower position, so equal gains yield the
    identity ranking.  ``mode`` is accepted for symmetry with
    :func:`phoneme_gains` output fields but does not change the sort —
    callers pass the matching gain sequence.
    """
    if mode not in _RANK_MODES:
        raise DomainError(f"unknown ranking mode {mode!r}")
    values = [float(g) for g in gains]
    for v in values:
        if math.isnan(v):
            raise DomainError("gains must not contain NaN")
    order = sorted(range(len(values)), key=lambda i: (-values[i], i))
    return [i + 1 for i in order]


def worst_words(
    probabilities: Sequence[float],
    threshold: float,
    k: int = 1,
) -> List[int]:
    """1-based indices of up to ``k`` words scoring below ``threshold``.

    Results are ordered worst first.  ``[0.9, 0.3, 0.8]`` at threshold
    0.5 yields ``[2]``.
    """
    if k < 0:
        raise DomainError("k must be non-negative")
    below = [
        (float(p), i)
        for i, p in enumerate(probabilities)
        if float(p) < threshold
    ]
    below.sort(key=lambda item: (item[0], item[1]))
    return [i + 1 for _, i in below[:k]]


def build_report(
    model,
    vector: WordFeatureVector,
    delta: float = DEFAULT_DELTA,
    duration_step: float = DEFAULT_DURATION_STEP,
) -> FeedbackReport:
    """Compute gains for ``vector`` and package them with both rankings."""
    base_values = np.asarray(vector.values(), dtype=np.float64)
    gains = phoneme_gains(model, vector, delta=delta, duration_step=duration_step)
    return FeedbackReport(
        word=vector.word,
        probability=_probability(model, base_values),
        gains=tuple(gains),
        ranking_sum=tuple(rank_phonemes([g.gain_sum for g in gains], "sum")),
        ranking_product=tuple(
            rank_phonemes([g.gain_product for g in gains], "product")
        ),
    )


def report_to_text(report: FeedbackReport) -> str:
    """Render a report as a small, stable text record (one field per line)."""
    lines = [
        f"word\t{report.word}",
        f"probability\t{report.probability!r}",
        "ranking\t" + " ".join(str(r) for r in report.ranking_sum),
    ]
    for g in report.gains:
        label = g.phoneme if g.phoneme else str(g.index + 1)
        lines.append(
            "phoneme\t{}\t{}\t{}\t{}\t{}".format(
                label,
                repr(float(g.gain_sum)),
                repr(float(g.gain_product)),
                g.duration_direction,
                repr(float(g.duration_gain)),
            )
        )
    return "\n".join(lines) + "\n"
