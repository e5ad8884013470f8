"""Phoneme inventory, articulatory attributes, neighborhoods, and lexicon.

The inventory is the 39-phoneme uppercase set plus SIL, shipped as a
tab-separated data file so alternate inventories can be loaded for tests.
Attribute values are bounded ordinal encodings: place runs front to back on
[0,1], closedness is degree of constriction (vowel closedness), roundedness
is 0/0.5/1, voicing is 0 or 1.  SIL carries all-zero attributes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

from .errors import DataFormatError, DomainError

SIL = "SIL"

EXPECTED_SIZE = 40

# Attribute-space granularity used by the neighborhood relation.
BUCKET = 0.25


@dataclass(frozen=True)
class ArticulatoryAttributes:
    place: float
    closedness: float
    roundedness: float
    voicing: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.place, self.closedness, self.roundedness, self.voicing)


def _bucket(value: float) -> int:
    # Half-up rounding; avoids platform-dependent banker's rounding.
    return int(math.floor(value / BUCKET + 0.5))


class PhonemeInventory:
    """Ordered phoneme set with attribute lookups and the neighbor relation."""

    def __init__(self, rows: list[tuple[str, ArticulatoryAttributes]]):
        symbols = [sym for sym, _ in rows]
        if len(symbols) != EXPECTED_SIZE:
            raise DataFormatError(
                f"inventory must have {EXPECTED_SIZE} symbols, got {len(symbols)}")
        if len(set(symbols)) != len(symbols):
            raise DataFormatError("duplicate phoneme symbols in inventory")
        if symbols.count(SIL) != 1:
            raise DataFormatError("inventory must contain SIL exactly once")
        for sym in symbols:
            if not sym or sym != sym.upper():
                raise DataFormatError(f"bad phoneme symbol {sym!r}")
        self.symbols: tuple[str, ...] = tuple(symbols)
        self.index: dict[str, int] = {s: i for i, s in enumerate(symbols)}
        self._attrs: dict[str, ArticulatoryAttributes] = {}
        for sym, attrs in rows:
            for name, v in (("place", attrs.place),
                            ("closedness", attrs.closedness),
                            ("roundedness", attrs.roundedness)):
                if not 0.0 <= v <= 1.0:
                    raise DataFormatError(f"{sym}: {name}={v} outside [0,1]")
            if attrs.voicing not in (0.0, 1.0):
                raise DataFormatError(f"{sym}: voicing must be 0 or 1")
            if sym == SIL and attrs.as_tuple() != (0.0, 0.0, 0.0, 0.0):
                raise DataFormatError("SIL attributes must be all zero")
            self._attrs[sym] = attrs
        self._neighbors: dict[str, frozenset[str]] | None = None

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, phoneme: str) -> bool:
        return phoneme in self.index

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, PhonemeInventory)
                and self.symbols == other.symbols
                and self._attrs == other._attrs)

    def ordinal(self, phoneme: str) -> int:
        try:
            return self.index[phoneme]
        except KeyError:
            raise DomainError(f"unknown phoneme {phoneme!r}") from None

    def attributes(self, phoneme: str) -> ArticulatoryAttributes:
        try:
            return self._attrs[phoneme]
        except KeyError:
            raise DomainError(f"unknown phoneme {phoneme!r}") from None

    def non_silence(self) -> tuple[str, ...]:
        return tuple(s for s in self.symbols if s != SIL)

    def neighbors(self, phoneme: str) -> frozenset[str]:
        """Phonemes whose bucketed attribute vector differs in at most one
        attribute.  Symmetric, irreflexive, and never includes SIL."""
        if phoneme == SIL:
            raise DomainError("SIL has no articulatory neighborhood")
        if phoneme not in self.index:
            raise DomainError(f"unknown phoneme {phoneme!r}")
        if self._neighbors is None:
            self._neighbors = self._compute_neighbors()
        return self._neighbors[phoneme]

    def _compute_neighbors(self) -> dict[str, frozenset[str]]:
        buckets = {
            sym: tuple(_bucket(v) for v in self._attrs[sym].as_tuple())
            for sym in self.symbols if sym != SIL
        }
        out: dict[str, frozenset[str]] = {}
        for p, bp in buckets.items():
            near = set()
            for q, bq in buckets.items():
                if q == p:
                    continue
                if sum(a != b for a, b in zip(bp, bq)) <= 1:
                    near.add(q)
            out[p] = frozenset(near)
        return out


def parse_attribute_table(text: str) -> PhonemeInventory:
    """Parse the tab-separated attribute table into an inventory."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataFormatError("empty attribute table")
    header = lines[0].split("\t")
    if header != ["phoneme", "place", "closedness", "roundedness", "voicing"]:
        raise DataFormatError(f"bad attribute table header: {lines[0]!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 5:
            raise DataFormatError(f"line {lineno}: expected 5 columns")
        sym = parts[0]
        try:
            values = [float(x) for x in parts[1:]]
        except ValueError:
            raise DataFormatError(f"line {lineno}: non-numeric attribute") from None
        rows.append((sym, ArticulatoryAttributes(*values)))
    return PhonemeInventory(rows)


def load_inventory(path: str | None = None) -> PhonemeInventory:
    """Load the canonical 40-symbol inventory (or one from ``path``)."""
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            return parse_attribute_table(fh.read())
    text = resources.files("captkit.data").joinpath(
        "phoneme_attributes.tsv").read_text(encoding="utf-8")
    return parse_attribute_table(text)


class Lexicon:
    """Case-normalized word -> pronunciations (non-empty phoneme tuples)."""

    def __init__(self, entries: dict[str, list[tuple[str, ...]]]):
        self.entries = entries

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.entries

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Lexicon) and self.entries == other.entries

    def words(self) -> list[str]:
        return sorted(self.entries)

    def pronunciations(self, word: str) -> list[tuple[str, ...]]:
        try:
            return self.entries[word.lower()]
        except KeyError:
            raise DomainError(f"word {word!r} not in lexicon") from None

    def pronunciation(self, word: str) -> tuple[str, ...]:
        """First (primary) pronunciation."""
        return self.pronunciations(word)[0]


def load_lexicon(text: str, inventory: PhonemeInventory) -> Lexicon:
    """Parse lexicon text: one ``WORD PH1 PH2 ...`` entry per line, ``#``
    comments, blank lines ignored."""
    entries: dict[str, list[tuple[str, ...]]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        word = parts[0].lower()
        phones = tuple(parts[1:])
        if not phones:
            raise DataFormatError(f"line {lineno}: empty pronunciation for {word!r}")
        for ph in phones:
            if ph not in inventory:
                raise DataFormatError(
                    f"line {lineno}: unknown phoneme {ph!r} in {word!r}")
            if ph == SIL:
                raise DataFormatError(
                    f"line {lineno}: SIL not allowed inside a pronunciation")
        entries.setdefault(word, [])
        if phones not in entries[word]:
            entries[word].append(phones)
    return Lexicon(entries)


def serialize_lexicon(lexicon: Lexicon) -> str:
    lines = []
    for word in lexicon.words():
        for phones in lexicon.entries[word]:
            lines.append(" ".join([word.upper(), *phones]))
    return "\n".join(lines) + "\n"


def load_bundled_lexicon(inventory: PhonemeInventory) -> Lexicon:
    text = resources.files("captkit.data").joinpath(
        "lexicon.txt").read_text(encoding="utf-8")
    return load_lexicon(text, inventory)


def load_homophones(path: str | None = None) -> dict[str, frozenset[str]]:
    """Word -> its homophone group (words as lowercase)."""
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = resources.files("captkit.data").joinpath(
            "homophones.txt").read_text(encoding="utf-8")
    groups: dict[str, frozenset[str]] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = frozenset(w.lower() for w in line.split())
        for w in words:
            groups[w] = words
    return groups
