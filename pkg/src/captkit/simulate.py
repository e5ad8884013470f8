"""Synthetic benchmark corpus: distorted recordings plus listener labels.

Real learner recordings with crowd transcripts are not shippable, so the
benchmark fabricates both halves under one seed:

* each recording of a word is synthesized either clean or with one
  sampled distortion (neighbor substitution, arbitrary substitution,
  deletion, insertion, or a duration anomaly in either direction);
* each simulated listener independently transcribes the prompt
  correctly with a probability tied to the distortion's severity —
  clean recordings are always heard correctly, and a wrong "hearing"
  is recorded as some other word from the lexicon.

The severity table is deliberately non-linear in the raw features: a
neighbor substitution is far milder than an arbitrary one, and duration
anomalies hurt in both directions, which a linear model reading raw
durations cannot represent.

``build_corpus`` writes the full training layout (acoustic model,
feature files, transcript table, ground-truth manifest) and
``crossval_benchmark`` runs the word-wise cross-validated comparison
between the full-feature SVM and the reduced-feature logistic baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import acoustic, features
from .corpus import (
    TranscriptRecord,
    TranscriptSet,
    TrainingCorpus,
    accuracy_parts,
    write_transcripts,
)
from .classifier import (
    DEFAULT_C,
    LogisticModel,
    SvmModel,
    train_logistic,
    train_svm,
)
from .decoder import DecoderConfig
from .errors import DataFormatError, DomainError
from .features import PER_PHONEME, FeatexConfig, vectors_to_text
from .frontend import DistortionSpec, PhonemeGenerators, frames_to_text, synthesize
from .phoneset import SIL, Lexicon, PhonemeInventory

__all__ = [
    "SEVERITIES",
    "QUALITY_SCALE",
    "DURATION_SHORT_SCALE",
    "DURATION_LONG_SCALE",
    "SimulationConfig",
    "RecordingTruth",
    "BenchmarkResult",
    "choose_words",
    "sample_distortion",
    "correctness_probability",
    "wrap_with_silence",
    "train_reference_model",
    "build_corpus",
    "write_manifest",
    "read_manifest",
    "logistic_subset",
    "crossval_predictions",
    "crossval_benchmark",
]

# How badly each distortion hurts a listener's chance of recognizing the
# word.  Clean audio is always understood; a substitution by an
# articulatory neighbor is mild; an arbitrary substitution is severe.
SEVERITIES: Dict[str, float] = {
    "clean": 0.0,
    "neighbor_substitution": 0.6,
    "substitution": 2.2,
    "deletion": 1.8,
    "insertion": 1.1,
    "duration": 1.4,
}

# P(correct | distorted) = sigmoid(QUALITY_SCALE * (QUALITY_BASE - severity))
QUALITY_BASE = 1.1
QUALITY_SCALE = 1.6

DURATION_SHORT_SCALE = 0.45
DURATION_LONG_SCALE = 2.2

_KINDS = (
    "neighbor_substitution",
    "substitution",
    "deletion",
    "insertion",
    "duration",
)
_KIND_WEIGHTS = (0.24, 0.18, 0.14, 0.14, 0.30)

MANIFEST_NAME = "manifest.tsv"
TRANSCRIPTS_NAME = "transcripts.csv"
ACOUSTIC_NAME = "acoustic.am"
FEATURES_DIR = "feats"
FRAMES_DIR = "frames"


@dataclass(frozen=True)
class SimulationConfig:
    """Knobs for corpus generation; one seed drives everything."""

    num_words: int = 20
    recordings_per_word: int = 30
    num_transcribers: int = 4
    seed: int = 0
    noise_level: float = 0.8
    clean_rate: float = 0.45
    min_phonemes: int = 3
    max_phonemes: int = 6
    write_frames: bool = False

    def __post_init__(self):
        if self.num_words < 1 or self.recordings_per_word < 1:
            raise DomainError("need at least one word and one recording")
        if self.num_transcribers < 1:
            raise DomainError("need at least one transcriber")
        if not 0.0 <= self.clean_rate <= 1.0:
            raise DomainError("clean_rate must lie in [0, 1]")
        if self.noise_level < 0:
            raise DomainError("noise_level must be >= 0")


@dataclass(frozen=True)
class RecordingTruth:
    """Ground truth for one synthesized recording."""

    utterance_id: str
    word: str
    kind: str
    position: int  # 0-based phoneme position within the word; -1 for clean
    detail: str  # substituted/inserted phoneme, or "shorter"/"longer"
    severity: float
    p_correct: float


@dataclass(frozen=True)
class BenchmarkResult:
    svm_raw: float
    svm_adjusted: float
    logistic_raw: float
    logistic_adjusted: float
    max_achievable: float

    @property
    def margin(self) -> float:
        return self.svm_adjusted - self.logistic_adjusted


def choose_words(lexicon: Lexicon, config: SimulationConfig) -> List[str]:
    """Deterministic word sample: shortest-first, alphabetical within ties."""
    eligible = [
        w
        for w in sorted(lexicon.words())
        if config.min_phonemes <= len(lexicon.pronunciation(w)) <= config.max_phonemes
    ]
    if len(eligible) < config.num_words:
        raise DomainError(
            f"lexicon has {len(eligible)} words with "
            f"{config.min_phonemes}-{config.max_phonemes} phonemes, "
            f"need {config.num_words}"
        )
    eligible.sort(key=lambda w: (len(lexicon.pronunciation(w)), w))
    return sorted(eligible[: config.num_words])


def sample_distortion(
    pron: Sequence[str],
    inventory: PhonemeInventory,
    rng: np.random.Generator,
    clean_rate: float,
) -> Tuple[str, int, str]:
    """Draw (kind, position, detail) for one recording of ``pron``."""
    if rng.random() < clean_rate:
        return "clean", -1, ""
    kind = _KINDS[rng.choice(len(_KINDS), p=_KIND_WEIGHTS)]
    pos = int(rng.integers(len(pron)))
    if kind == "neighbor_substitution":
        neighbors = sorted(
            n for n in inventory.neighbors(pron[pos]) if n != pron[pos]
        )
        if not neighbors:
            kind = "substitution"
        else:
            return kind, pos, neighbors[int(rng.integers(len(neighbors)))]
    if kind == "substitution":
        neighbors = set(inventory.neighbors(pron[pos]))
        others = [
            p
            for p in inventory.non_silence()
            if p != pron[pos] and p not in neighbors
        ]
        return kind, pos, others[int(rng.integers(len(others)))]
    if kind == "deletion":
        return kind, pos, ""
    if kind == "insertion":
        slot = int(rng.integers(len(pron) + 1))
        ph = inventory.non_silence()[int(rng.integers(len(inventory.non_silence())))]
        return kind, slot, ph
    # duration anomaly: too short or too long, both disruptive
    return "duration", pos, "shorter" if rng.random() < 0.5 else "longer"


def _distortion_spec(
    kind: str, pos: int, detail: str, noise_level: float, offset: int
) -> DistortionSpec:
    """Spec for a sequence wrapped with ``offset`` leading silences."""
    spec = DistortionSpec(noise_level=noise_level)
    if kind == "clean":
        return spec
    if kind in ("substitution", "neighbor_substitution"):
        return replace(spec, substitutions=[(pos + offset, detail)])
    if kind == "deletion":
        return replace(spec, deletions=[pos + offset])
    if kind == "insertion":
        return replace(spec, insertions=[(pos + offset, detail)])
    if kind == "duration":
        scale = DURATION_SHORT_SCALE if detail == "shorter" else DURATION_LONG_SCALE
        return replace(spec, duration_scale={pos + offset: scale})
    raise DomainError(f"unknown distortion kind {kind!r}")


def correctness_probability(kind: str) -> float:
    """Chance a simulated listener hears the word despite the distortion."""
    if kind == "clean":
        return 1.0
    severity = SEVERITIES[kind]
    return 1.0 / (1.0 + math.exp(-QUALITY_SCALE * (QUALITY_BASE - severity)))


def wrap_with_silence(pron: Sequence[str]) -> List[str]:
    """A recording carries leading and trailing silence around the word."""
    return [SIL, *pron, SIL]


def _recording_seed(seed: int, word_index: int, rec_index: int) -> int:
    return ((seed * 1000003 + word_index + 1) * 1000003 + rec_index + 1) % (2**63)


def train_reference_model(
    inventory: PhonemeInventory,
    generators: PhonemeGenerators,
    noise_level: float,
    seed: int,
    reps: int = 8,
) -> acoustic.AcousticModel:
    """Acoustic model matched to the corpus noise level.

    Every inventory phoneme is synthesized in isolation ``reps`` times
    and the labeled frames train the model, so later recognition passes
    can hypothesize any phoneme.
    """
    labeled: List[Tuple[str, np.ndarray]] = []
    spec = DistortionSpec(noise_level=noise_level)
    for ordinal, sym in enumerate(inventory.symbols):
        for r in range(reps):
            frames, segs = synthesize(
                [sym], spec, _recording_seed(seed, 10_000 + ordinal, r), generators
            )
            for ph, start, end in segs:
                for t in range(start, end):
                    labeled.append((ph, frames.frames[t]))
    return acoustic.train(labeled, inventory)


def _wrong_word(
    prompt: str,
    words: Sequence[str],
    rng: np.random.Generator,
    homophones: Optional[Mapping[str, frozenset]] = None,
) -> str:
    """A plausible mis-hearing: any other word, never a homophone."""
    group = homophones.get(prompt, frozenset()) if homophones else frozenset()
    candidates = [w for w in words if w != prompt and w not in group]
    if not candidates:
        raise DomainError(f"no alternative words to mis-hear {prompt!r}")
    return candidates[int(rng.integers(len(candidates)))]


def build_corpus(
    out_dir,
    inventory: PhonemeInventory,
    lexicon: Lexicon,
    config: SimulationConfig,
    generators: Optional[PhonemeGenerators] = None,
    model: Optional[acoustic.AcousticModel] = None,
    homophones: Optional[Mapping[str, frozenset]] = None,
) -> List[RecordingTruth]:
    """Generate the full corpus under ``out_dir``; returns the ground truth.

    Layout: ``acoustic.am`` (binary model), ``feats/<utt>.feat``,
    ``transcripts.csv``, ``manifest.tsv`` and optionally
    ``frames/<utt>.frames``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / FEATURES_DIR).mkdir(exist_ok=True)
    if config.write_frames:
        (out / FRAMES_DIR).mkdir(exist_ok=True)

    if generators is None:
        generators = PhonemeGenerators(inventory)
    if model is None:
        model = train_reference_model(
            inventory, generators, config.noise_level, config.seed
        )
    (out / ACOUSTIC_NAME).write_bytes(acoustic.save(model))

    words = choose_words(lexicon, config)
    featex_cfg = FeatexConfig(
        align_cfg=DecoderConfig(beam=math.inf),
        pass_cfg=DecoderConfig(beam=math.inf),
    )
    truths: List[RecordingTruth] = []
    records: List[TranscriptRecord] = []
    all_words = sorted(lexicon.words())

    for wi, word in enumerate(words):
        pron = list(lexicon.pronunciation(word))
        draw_rng = np.random.default_rng([config.seed, 101, wi])
        listen_rng = np.random.default_rng([config.seed, 202, wi])
        for ri in range(config.recordings_per_word):
            utt = f"{word}_{ri:03d}"
            kind, pos, detail = sample_distortion(
                pron, inventory, draw_rng, config.clean_rate
            )
            spec = _distortion_spec(kind, pos, detail, config.noise_level, offset=1)
            frames, segments = synthesize(
                wrap_with_silence(pron),
                spec,
                _recording_seed(config.seed, wi, ri),
                generators,
            )
            vectors = features.extract(
                frames, [(word, pron)], model, inventory, featex_cfg
            )
            (out / FEATURES_DIR / f"{utt}.feat").write_text(
                vectors_to_text(vectors)
            )
            if config.write_frames:
                (out / FRAMES_DIR / f"{utt}.frames").write_text(
                    frames_to_text(frames)
                )
                (out / FRAMES_DIR / f"{utt}.seg").write_text(
                    "".join(f"{ph}\t{start}\t{end}\n"
                            for ph, start, end in segments)
                )

            p_correct = correctness_probability(kind)
            truths.append(
                RecordingTruth(utt, word, kind, pos, detail,
                               SEVERITIES[kind], p_correct)
            )
            for tid in range(config.num_transcribers):
                heard = (
                    word
                    if listen_rng.random() < p_correct
                    else _wrong_word(word, all_words, listen_rng, homophones)
                )
                records.append(TranscriptRecord(utt, word, tid, heard))

    (out / TRANSCRIPTS_NAME).write_text(
        write_transcripts(TranscriptSet(records))
    )
    (out / MANIFEST_NAME).write_text(write_manifest(truths, config))
    return truths


# ---------------------------------------------------------------------------
# Manifest serialization


def write_manifest(truths: Sequence[RecordingTruth],
                   config: SimulationConfig) -> str:
    lines = [
        f"# seed={config.seed} num_words={config.num_words} "
        f"recordings_per_word={config.recordings_per_word} "
        f"num_transcribers={config.num_transcribers} "
        f"noise_level={config.noise_level!r} clean_rate={config.clean_rate!r}",
        "utterance_id\tword\tkind\tposition\tdetail\tseverity\tp_correct",
    ]
    for t in truths:
        lines.append(
            f"{t.utterance_id}\t{t.word}\t{t.kind}\t{t.position}\t{t.detail}"
            f"\t{float(t.severity)!r}\t{float(t.p_correct)!r}"
        )
    return "\n".join(lines) + "\n"


def read_manifest(text: str) -> List[RecordingTruth]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines or lines[0].split("\t")[0] != "utterance_id":
        raise DataFormatError("manifest missing header row")
    truths = []
    for ln in lines[1:]:
        parts = ln.split("\t")
        if len(parts) != 7:
            raise DataFormatError(f"manifest row has {len(parts)} fields: {ln!r}")
        truths.append(
            RecordingTruth(parts[0], parts[1], parts[2], int(parts[3]),
                           parts[4], float(parts[5]), float(parts[6]))
        )
    return truths


# ---------------------------------------------------------------------------
# Cross-validated model comparison


def logistic_subset(values: np.ndarray, num_phonemes: int) -> np.ndarray:
    """Reduced design: duration, acoustic, substitution and ins/del scores
    per phoneme plus the trailing ins/del score."""
    values = np.asarray(values, dtype=np.float64)
    cols = []
    for i in range(num_phonemes):
        cols.extend(range(PER_PHONEME * i, PER_PHONEME * i + 4))
    cols.append(PER_PHONEME * num_phonemes)
    return values[..., cols]


def _fold_of(units: Sequence, folds: int, rng: np.random.Generator) -> Dict[object, int]:
    order = list(range(len(units)))
    rng.shuffle(order)
    return {units[idx]: rank % folds for rank, idx in enumerate(order)}


def _majority_prob(y: np.ndarray) -> float:
    return float(np.mean(y > 0))


def crossval_predictions(
    corpus: TrainingCorpus,
    folds: int = 5,
    seed: int = 0,
    threshold: float = 0.5,
    svm_c: float = DEFAULT_C,
) -> Tuple[Dict[object, int], Dict[object, int], Dict[object, List[int]]]:
    """Held-out 0/1 predictions per recording for both model families.

    Folds split whole recordings (never transcripts of one recording)
    within each word.  Returns ``(svm, logistic, labels)`` keyed by
    recording unit id.
    """
    if folds < 2:
        raise DomainError("need at least 2 folds")
    svm_preds: Dict[object, int] = {}
    log_preds: Dict[object, int] = {}
    label_map: Dict[object, List[int]] = {}

    for wi, word in enumerate(sorted(corpus.words)):
        entries = corpus.words[word]
        units = [e.unit_id for e in entries]
        fold_rng = np.random.default_rng([seed, 303, wi])
        assign = _fold_of(units, folds, fold_rng)
        num_ph = entries[0].vector.num_phonemes
        for e in entries:
            label_map[e.unit_id] = list(e.labels)

        for fold in range(folds):
            train_X, train_y = [], []
            test_entries = []
            for e in entries:
                if assign[e.unit_id] == fold:
                    test_entries.append(e)
                else:
                    vals = np.asarray(e.vector.values())
                    for lab in e.labels:
                        train_X.append(vals)
                        train_y.append(1 if lab else -1)
            if not test_entries:
                continue
            X = np.array(train_X)
            y = np.array(train_y)
            test_X = np.array([np.asarray(e.vector.values()) for e in test_entries])

            if len(set(y.tolist())) < 2 or len(y) < 4:
                const = _majority_prob(y) if len(y) else 1.0
                svm_p = np.full(len(test_entries), const)
                log_p = np.full(len(test_entries), const)
            else:
                svm_model = train_svm(
                    X, y, C=svm_c, word=word, num_phonemes=num_ph,
                    seed=seed + fold,
                )
                svm_p = np.atleast_1d(svm_model.predict_prob(test_X))
                X4 = logistic_subset(X, num_ph)
                log_model = train_logistic(
                    X4, y, word=word, num_phonemes=num_ph
                )
                log_p = np.atleast_1d(
                    log_model.predict_prob(logistic_subset(test_X, num_ph))
                )
            for e, sp, lp in zip(test_entries, svm_p, log_p):
                svm_preds[e.unit_id] = int(sp >= threshold)
                log_preds[e.unit_id] = int(lp >= threshold)
    return svm_preds, log_preds, label_map


def crossval_benchmark(
    corpus: TrainingCorpus,
    folds: int = 5,
    seed: int = 0,
    threshold: float = 0.5,
    svm_c: float = DEFAULT_C,
) -> BenchmarkResult:
    """Cross-validated comparison of the SVM against the logistic baseline."""
    svm_preds, log_preds, label_map = crossval_predictions(
        corpus, folds=folds, seed=seed, threshold=threshold, svm_c=svm_c
    )
    svm_raw, max_ach = accuracy_parts(svm_preds, label_map)
    log_raw, _ = accuracy_parts(log_preds, label_map)
    return BenchmarkResult(
        svm_raw=svm_raw,
        svm_adjusted=svm_raw / max_ach,
        logistic_raw=log_raw,
        logistic_adjusted=log_raw / max_ach,
        max_achievable=max_ach,
    )
