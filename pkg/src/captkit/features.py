"""Per-word feature vectors from alignment plus recognition passes.

For a phrase of words the pipeline runs one forced alignment, then for
every phoneme a three-symbol substitution pass (previous . X . next over
the whole inventory) and for every phoneme boundary a two-symbol
insertion/deletion pass.  Each word yields 9 values per phoneme —
duration (s), segment acoustic log-score, substitution rank score T,
boundary insertion/deletion score D, four articulatory attributes, and
the neighbor-likelihood N — plus one trailing boundary score, 9*P+1
values in all.

Boundary pairs are indexed so that D_i covers the pair ending at
phoneme i (with silence padding outside the phrase); the trailing score
of a word is therefore the same computed value as the leading score of
the next word, bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acoustic import AcousticModel
from .decoder import DecoderConfig, NBestList, align, nbest
from .errors import DomainError, NoPathError, ReconciliationError
from .frontend import FeatureFrames
from .grammar import (build_alignment_grammar, build_insdel_grammar,
                      build_substitution_grammar, compile)
from .phoneset import SIL, PhonemeInventory

RANK_SPAN = 40  # candidates per pass; one rank step costs 1/40

PER_PHONEME = 9


@dataclass
class FeatexConfig:
    align_cfg: DecoderConfig = field(default_factory=DecoderConfig)
    pass_cfg: DecoderConfig = field(default_factory=DecoderConfig)
    silence_policy: str = "edges_only"


@dataclass
class WordFeatureVector:
    word: str
    durations: np.ndarray  # (P,) seconds
    acoustics: np.ndarray  # (P,) nats
    substitution: np.ndarray  # (P,) in [0,1]
    insdel: np.ndarray  # (P+1,) in [0,1]; [i] ends at phoneme i, [P] trails
    place: np.ndarray
    closedness: np.ndarray
    roundedness: np.ndarray
    voicing: np.ndarray
    neighbor: np.ndarray  # (P,) in [0,1]
    phonemes: list[str] | None = None

    def __post_init__(self):
        arrays = ["durations", "acoustics", "substitution", "insdel", "place",
                  "closedness", "roundedness", "voicing", "neighbor"]
        for name in arrays:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        p = self.num_phonemes
        if p < 1:
            raise DomainError("word must have at least one phoneme")
        for name in arrays:
            want = p + 1 if name == "insdel" else p
            if getattr(self, name).shape != (want,):
                raise DomainError(f"{name} must have length {want}")
        if self.phonemes is not None and len(self.phonemes) != p:
            raise DomainError("phoneme list length mismatch")
        for name in ("substitution", "insdel", "neighbor", "place",
                     "closedness", "roundedness", "voicing"):
            a = getattr(self, name)
            if np.any(a < 0.0) or np.any(a > 1.0):
                raise DomainError(f"{name} values must lie in [0,1]")
        if np.any(self.durations <= 0.0):
            raise DomainError("durations must be positive")
        if not all(np.all(np.isfinite(getattr(self, n))) for n in arrays):
            raise DomainError("feature values must be finite")

    @property
    def num_phonemes(self) -> int:
        return self.durations.shape[0]

    def values(self) -> np.ndarray:
        """Fixed-order flat vector of length 9*P + 1."""
        p = self.num_phonemes
        out = np.empty(PER_PHONEME * p + 1)
        for i in range(p):
            out[PER_PHONEME * i:PER_PHONEME * (i + 1)] = (
                self.durations[i], self.acoustics[i], self.substitution[i],
                self.insdel[i], self.place[i], self.closedness[i],
                self.roundedness[i], self.voicing[i], self.neighbor[i])
        out[-1] = self.insdel[p]
        return out

    @classmethod
    def from_values(cls, word: str, num_phonemes: int, values,
                    phonemes: list[str] | None = None) -> "WordFeatureVector":
        values = np.asarray(values, dtype=np.float64)
        p = num_phonemes
        if values.shape != (PER_PHONEME * p + 1,):
            raise DomainError(
                f"expected {PER_PHONEME * p + 1} values for {p} phonemes, "
                f"got {values.shape}")
        cols = values[:PER_PHONEME * p].reshape(p, PER_PHONEME)
        insdel = np.append(cols[:, 3], values[-1])
        return cls(word=word, durations=cols[:, 0], acoustics=cols[:, 1],
                   substitution=cols[:, 2], insdel=insdel, place=cols[:, 4],
                   closedness=cols[:, 5], roundedness=cols[:, 6],
                   voicing=cols[:, 7], neighbor=cols[:, 8], phonemes=phonemes)


# ---------------------------------------------------------------------------
# Rank scores


def substitution_score(nb: NBestList, expected_middle: str) -> float:
    """1 - r/40 for the zero-based rank of the expected middle; 0 if absent."""
    for r, hyp in enumerate(nb):
        if len(hyp.symbols) == 3 and hyp.symbols[1] == expected_middle:
            return max(0.0, 1.0 - r / RANK_SPAN)
    return 0.0


def insdel_score(nb: NBestList, first: str, second: str) -> float:
    """1 - c/40 where c hypotheses outrank the clean pair; 0 if absent."""
    target = (first, second)
    for c, hyp in enumerate(nb):
        if hyp.symbols == target:
            return max(0.0, 1.0 - c / RANK_SPAN)
    return 0.0


def neighbor_likelihood(nb: NBestList, expected_middle: str,
                        inventory: PhonemeInventory) -> float:
    """Fraction of present articulatory neighbors ranked below the expected.

    0 when the expected middle never appears; 1 when it appears and no
    neighbor does.
    """
    if expected_middle == SIL:
        raise DomainError("neighbor likelihood is undefined for silence")
    neighbors = inventory.neighbors(expected_middle)
    expected_rank = None
    neighbor_ranks = []
    for r, hyp in enumerate(nb):
        if len(hyp.symbols) != 3:
            continue
        mid = hyp.symbols[1]
        if mid == expected_middle and expected_rank is None:
            expected_rank = r
        elif mid in neighbors:
            neighbor_ranks.append(r)
    if expected_rank is None:
        return 0.0
    if not neighbor_ranks:
        return 1.0
    below = sum(1 for r in neighbor_ranks if r > expected_rank)
    return below / len(neighbor_ranks)


# ---------------------------------------------------------------------------
# Extraction


def extract(
    frames: FeatureFrames,
    words: list[tuple[str, list[str]]],
    model: AcousticModel,
    inventory: PhonemeInventory,
    cfg: FeatexConfig | None = None,
) -> list[WordFeatureVector]:
    """Run alignment plus the per-phoneme passes for a phrase.

    ``words`` pairs each word with its pronunciation.  No-path failures
    carry the word and phoneme position (1-based) in their message.
    """
    cfg = cfg or FeatexConfig()
    if not words:
        raise DomainError("empty word list")
    prons = [list(p) for _, p in words]
    if any(not p for p in prons):
        raise DomainError("empty pronunciation")
    flat = [ph for p in prons for ph in p]
    n = len(flat)
    # word/local position of each global position, for error context
    context = []
    for w, (word, pron) in enumerate(words):
        for i in range(len(pron)):
            context.append((w, word, i))

    g = build_alignment_grammar(prons, inventory, cfg.silence_policy)
    cg = compile(g, inventory)
    try:
        alignment = align(frames, cg, model, cfg.align_cfg)
    except NoPathError as exc:
        raise NoPathError(f"phrase alignment failed: {exc}") from None
    real = [s for s in alignment.segments if s.phoneme != SIL]
    if [s.phoneme for s in real] != flat:
        raise ReconciliationError(
            "alignment phoneme sequence does not match the pronunciations")
    T = frames.num_frames

    def sub_context(i: int) -> tuple[str, str]:
        prev = flat[i - 1] if i > 0 else SIL
        nxt = flat[i + 1] if i + 1 < n else SIL
        return prev, nxt

    def sub_window(i: int) -> np.ndarray:
        lo = real[i - 1].start if i > 0 else 0
        hi = real[i + 1].end if i + 1 < n else T
        return frames.frames[lo:hi]

    sub_scores = np.empty(n)
    nbr_scores = np.empty(n)
    for i in range(n):
        prev, nxt = sub_context(i)
        scg = compile(build_substitution_grammar(prev, nxt, inventory), inventory)
        w, word, local = context[i]
        try:
            nb = nbest(sub_window(i), scg, model, cfg.pass_cfg)
        except NoPathError as exc:
            raise NoPathError(
                f"substitution pass failed at word {w + 1} ({word}), "
                f"phoneme {local + 1} ({flat[i]}): {exc}") from None
        sub_scores[i] = substitution_score(nb, flat[i])
        nbr_scores[i] = neighbor_likelihood(nb, flat[i], inventory)

    # boundary pairs: pair k = (flat[k-1], flat[k]) with SIL outside the
    # phrase; computed once and shared by adjacent words
    pair_scores = np.empty(n + 1)
    for k in range(n + 1):
        first = flat[k - 1] if k > 0 else SIL
        second = flat[k] if k < n else SIL
        lo = real[k - 1].start if k > 0 else 0
        hi = real[k].end if k < n else T
        icg = compile(build_insdel_grammar(first, second, inventory), inventory)
        try:
            nb = nbest(frames.frames[lo:hi], icg, model, cfg.pass_cfg)
        except NoPathError as exc:
            raise NoPathError(
                f"insertion/deletion pass failed at boundary {k + 1} "
                f"({first}:{second}): {exc}") from None
        pair_scores[k] = insdel_score(nb, first, second)

    out = []
    offset = 0
    for word, pron in words:
        p = len(pron)
        segs = real[offset:offset + p]
        attrs = [inventory.attributes(ph) for ph in pron]
        out.append(WordFeatureVector(
            word=word,
            durations=np.array([(s.end - s.start) / frames.frame_rate for s in segs]),
            acoustics=np.array([s.acoustic_logscore for s in segs]),
            substitution=sub_scores[offset:offset + p].copy(),
            insdel=pair_scores[offset:offset + p + 1].copy(),
            place=np.array([a.place for a in attrs]),
            closedness=np.array([a.closedness for a in attrs]),
            roundedness=np.array([a.roundedness for a in attrs]),
            voicing=np.array([a.voicing for a in attrs]),
            neighbor=nbr_scores[offset:offset + p].copy(),
            phonemes=list(pron),
        ))
        offset += p
    return out


# ---------------------------------------------------------------------------
# Serialization: `word P` header then 9*P+1 decimal values, one per line


def vectors_to_text(vectors: list[WordFeatureVector]) -> str:
    lines = []
    for v in vectors:
        lines.append(f"{v.word} {v.num_phonemes}")
        lines.extend(repr(float(x)) for x in v.values())
    return "\n".join(lines) + "\n"


def vectors_from_text(text: str) -> list[WordFeatureVector]:
    from .errors import DataFormatError
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    out = []
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) != 2:
            raise DataFormatError(f"bad vector header at line {i + 1}: {lines[i]!r}")
        word = parts[0]
        try:
            p = int(parts[1])
        except ValueError:
            raise DataFormatError(f"bad phoneme count at line {i + 1}") from None
        if p < 1:
            raise DataFormatError(f"phoneme count must be >= 1 at line {i + 1}")
        count = PER_PHONEME * p + 1
        if i + 1 + count > len(lines):
            raise DataFormatError(f"truncated vector for {word!r} at line {i + 1}")
        try:
            values = [float(lines[i + 1 + j]) for j in range(count)]
        except ValueError:
            raise DataFormatError(f"non-numeric value in vector for {word!r}") from None
        out.append(WordFeatureVector.from_values(word, p, values))
        i += 1 + count
    return out
