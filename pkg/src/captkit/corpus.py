"""Transcript ingestion, intelligibility labels, and the adjusted metric.

A recording's intelligibility label comes from human (or simulated)
transcripts: a transcript is correct when it matches the prompt after
normalization.  Because transcribers disagree, a predictor is scored
against every transcript separately, and the raw accuracy is reported
as a fraction of the best achievable agreement (the adjusted accuracy):
with labels [1,1,1,0] the ceiling is 0.75, so raw 0.50 adjusts to 0.667.

Transcript files are CSV with header
``utterance_id,prompt,transcriber_id,transcript``; features live in one
``<utterance_id>.feat`` text file per utterance.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataFormatError, DomainError, ReconciliationError
from .features import WordFeatureVector, vectors_from_text

_PUNCT_RE = re.compile(r"[^\w\s']+", re.UNICODE)

TRANSCRIPT_HEADER = ["utterance_id", "prompt", "transcriber_id", "transcript"]


def normalize(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    return " ".join(_PUNCT_RE.sub(" ", text.lower()).split())


def _tokens_match(a: str, b: str, homophones: dict[str, frozenset[str]] | None) -> bool:
    if a == b:
        return True
    if homophones is not None:
        group = homophones.get(a)
        if group is not None and b in group:
            return True
    return False


def label(prompt: str, transcript: str,
          homophones: dict[str, frozenset[str]] | None = None) -> int:
    """1 iff the transcript matches the prompt after normalization.

    With a homophone table, tokens are compared up to homophony
    ("two" ~ "too"); off by default.
    """
    pt = normalize(prompt).split()
    tt = normalize(transcript).split()
    if len(pt) != len(tt):
        return 0
    return int(all(_tokens_match(a, b, homophones) for a, b in zip(pt, tt)))


def label_words(prompt: str, transcript: str,
                homophones: dict[str, frozenset[str]] | None = None) -> list[int]:
    """Per-prompt-token labels, aligning tokens by position."""
    pt = normalize(prompt).split()
    tt = normalize(transcript).split()
    out = []
    for i, a in enumerate(pt):
        ok = i < len(tt) and _tokens_match(a, tt[i], homophones)
        out.append(int(ok))
    return out


def intelligibility_rate(labels) -> float:
    labels = list(labels)
    if not labels:
        raise DomainError("intelligibility rate needs at least one label")
    if any(v not in (0, 1) for v in labels):
        raise DomainError("labels must be 0 or 1")
    return sum(labels) / len(labels)


def accuracy_parts(predictions, labels) -> tuple[float, float]:
    """(raw, max achievable] over per-unit transcript label lists.

    ``predictions`` maps unit id -> 0/1; ``labels`` maps the same ids to
    the per-transcript 0/1 lists.
    """
    if set(predictions) != set(labels):
        missing = set(predictions) ^ set(labels)
        raise DomainError(f"predictions and labels cover different units: "
                          f"{sorted(missing)[:5]}")
    if not predictions:
        raise DomainError("no units to score")
    total = hits = best = 0
    for uid, pred in predictions.items():
        ls = list(labels[uid])
        if not ls:
            raise DomainError(f"unit {uid!r} has no labels")
        if pred not in (0, 1):
            raise DomainError("predictions must be 0 or 1")
        k = sum(ls)
        total += len(ls)
        hits += sum(1 for v in ls if v == pred)
        best += max(k, len(ls) - k)
    return hits / total, best / total


def adjusted_accuracy(predictions, labels) -> float:
    """Raw transcript-level accuracy as a fraction of the achievable max."""
    raw, best = accuracy_parts(predictions, labels)
    return raw / best


# ---------------------------------------------------------------------------
# Transcript files


@dataclass
class TranscriptRecord:
    utterance_id: str
    prompt: str
    transcriber_id: str
    transcript: str


@dataclass
class TranscriptSet:
    records: list[TranscriptRecord]

    def __post_init__(self):
        seen = set()
        prompts: dict[str, str] = {}
        for r in self.records:
            key = (r.utterance_id, r.transcriber_id)
            if key in seen:
                raise DataFormatError(
                    f"duplicate transcript for utterance {r.utterance_id!r} "
                    f"by transcriber {r.transcriber_id!r}")
            seen.add(key)
            if prompts.setdefault(r.utterance_id, r.prompt) != r.prompt:
                raise DataFormatError(
                    f"utterance {r.utterance_id!r} has conflicting prompts")

    def utterances(self) -> list[str]:
        return sorted({r.utterance_id for r in self.records})

    def prompt(self, utterance_id: str) -> str:
        for r in self.records:
            if r.utterance_id == utterance_id:
                return r.prompt
        raise DomainError(f"unknown utterance {utterance_id!r}")

    def by_utterance(self) -> dict[str, list[TranscriptRecord]]:
        out: dict[str, list[TranscriptRecord]] = {}
        for r in self.records:
            out.setdefault(r.utterance_id, []).append(r)
        for rs in out.values():
            rs.sort(key=lambda r: r.transcriber_id)
        return out


def read_transcripts(text: str) -> TranscriptSet:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError("empty transcript file") from None
    if header != TRANSCRIPT_HEADER:
        raise DataFormatError(
            f"transcript header must be {','.join(TRANSCRIPT_HEADER)}")
    records = []
    for i, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise DataFormatError(f"line {i}: expected 4 fields, got {len(row)}")
        records.append(TranscriptRecord(*row))
    return TranscriptSet(records=records)


def write_transcripts(ts: TranscriptSet) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TRANSCRIPT_HEADER)
    for r in ts.records:
        w.writerow([r.utterance_id, r.prompt, r.transcriber_id, r.transcript])
    return out.getvalue()


# ---------------------------------------------------------------------------
# Training corpus


@dataclass
class CorpusEntry:
    utterance_id: str
    word_index: int  # position of the word in its utterance
    vector: WordFeatureVector
    labels: list[int]  # one per transcript, transcriber-ordered

    @property
    def unit_id(self) -> tuple[str, int]:
        return (self.utterance_id, self.word_index)


@dataclass
class TrainingCorpus:
    words: dict[str, list[CorpusEntry]] = field(default_factory=dict)

    def __post_init__(self):
        for word, entries in self.words.items():
            if not entries:
                raise DomainError(f"word {word!r} has no entries")
            lengths = {len(e.vector.values()) for e in entries}
            if len(lengths) != 1:
                raise DomainError(f"word {word!r} mixes vector lengths {sorted(lengths)}")
            for e in entries:
                if not e.labels:
                    raise DomainError(f"entry {e.unit_id} has no labels")
                if any(v not in (0, 1) for v in e.labels):
                    raise DomainError(f"entry {e.unit_id} has non-binary labels")

    def rows(self, word: str) -> tuple[list[WordFeatureVector], list[int]]:
        """Flat training rows: each (vector, label) once per transcript."""
        vectors, labels = [], []
        for e in self.words[word]:
            for lab in e.labels:
                vectors.append(e.vector)
                labels.append(lab)
        return vectors, labels

    def total_entries(self) -> int:
        return sum(len(v) for v in self.words.values())


def build_training_set(
    features_dir: str | Path,
    transcripts: TranscriptSet | str,
    homophones: dict[str, frozenset[str]] | None = None,
) -> TrainingCorpus:
    """Join per-utterance feature files with their transcripts.

    Features and transcripts must cover exactly the same utterances; any
    orphan on either side is an error listing the ids.
    """
    if isinstance(transcripts, str):
        transcripts = read_transcripts(transcripts)
    features_dir = Path(features_dir)
    feat_ids = {p.stem for p in features_dir.glob("*.feat")}
    trans_ids = set(transcripts.utterances())
    only_feats = sorted(feat_ids - trans_ids)
    only_trans = sorted(trans_ids - feat_ids)
    if only_feats or only_trans:
        parts = []
        if only_feats:
            parts.append(f"features without transcripts: {', '.join(only_feats[:10])}")
        if only_trans:
            parts.append(f"transcripts without features: {', '.join(only_trans[:10])}")
        raise ReconciliationError("; ".join(parts))
    if not feat_ids:
        raise DomainError("no utterances found")

    by_utt = transcripts.by_utterance()
    words: dict[str, list[CorpusEntry]] = {}
    for uid in sorted(feat_ids):
        vectors = vectors_from_text((features_dir / f"{uid}.feat").read_text())
        records = by_utt[uid]
        prompt_tokens = normalize(records[0].prompt).split()
        vec_words = [normalize(v.word) for v in vectors]
        if vec_words != prompt_tokens:
            raise ReconciliationError(
                f"utterance {uid!r}: feature words {vec_words} do not match "
                f"prompt {prompt_tokens}")
        per_transcript = [label_words(records[0].prompt, r.transcript, homophones)
                          for r in records]
        for j, vec in enumerate(vectors):
            labels = [pt[j] for pt in per_transcript]
            words.setdefault(vec_words[j], []).append(CorpusEntry(
                utterance_id=uid, word_index=j, vector=vec, labels=labels))
    return TrainingCorpus(words=words)
