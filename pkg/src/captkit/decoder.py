"""Viterbi alignment and exact k-best decoding over compiled grammars.

The search space is (arc, duration-class): an arc is one phoneme edge of
the compiled grammar, and the duration class counts frames spent in the
arc, saturating at the minimum duration.  A path must sit in an arc for
at least min_duration frames before advancing, so a class below the
maximum can only stay; the maximum class may stay or advance.

The path objective is the plain sum of per-frame acoustic log-densities.
Loop/exit probabilities stored with the model are deliberately not part
of the objective: the total score must equal an independent frame-logp
sum along the returned segmentation.

Determinism: score ties are broken toward earlier segment boundaries —
a merge prefers the candidate whose current segment started earlier
(higher duration class; stay over advance), then the smallest
predecessor arc id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .acoustic import AcousticModel
from .errors import DomainError, NoPathError
from .grammar import CompiledGrammar

DEFAULT_BEAM = 131.0  # nats; exp(-131) ~ 1e-57 relative pruning
DEFAULT_KBEST = 100

NEG_INF = float("-inf")


@dataclass
class DecoderConfig:
    beam: float = DEFAULT_BEAM
    kbest: int = DEFAULT_KBEST
    min_duration: int = 3
    trace: object | None = None  # file-like; per-frame surviving states

    def __post_init__(self):
        if not self.beam > 0:
            raise DomainError("beam must be > 0")
        if self.kbest < 1:
            raise DomainError("kbest must be >= 1")
        if self.min_duration < 1:
            raise DomainError("min_duration must be >= 1")


@dataclass
class Segment:
    phoneme: str
    start: int  # inclusive frame index
    end: int  # exclusive
    acoustic_logscore: float


@dataclass
class Alignment:
    segments: list[Segment]
    total_logscore: float
    min_duration_relaxed: bool = False

    def phonemes(self) -> list[str]:
        return [s.phoneme for s in self.segments]


@dataclass
class Hypothesis:
    symbols: tuple[str, ...]
    total_logscore: float


@dataclass
class NBestList:
    hypotheses: list[Hypothesis] = field(default_factory=list)

    def __len__(self):
        return len(self.hypotheses)

    def __iter__(self):
        return iter(self.hypotheses)

    def __getitem__(self, i):
        return self.hypotheses[i]

    def sequences(self) -> list[tuple[str, ...]]:
        return [h.symbols for h in self.hypotheses]


def shortest_accepted_length(cg: CompiledGrammar) -> int | None:
    """Length of the shortest non-empty accepted string, None if none."""
    best: dict[int, int] = {cg.start: 0}
    frontier = [cg.start]
    while frontier:
        nxt = []
        for u in frontier:
            for arc in cg.arcs_from.get(u, []):
                cand = best[u] + 1
                if arc.dst not in best or cand < best[arc.dst]:
                    best[arc.dst] = cand
                    nxt.append(arc.dst)
        frontier = nxt
    lengths = [best[s] for s in cg.accepting if s in best and best[s] > 0]
    return min(lengths) if lengths else None


def _as_frames(frames) -> np.ndarray:
    arr = getattr(frames, "frames", frames)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise DomainError("frames must be a T x D matrix")
    if arr.shape[0] == 0:
        raise DomainError("cannot decode zero frames")
    return arr


def _effective_min_duration(cg: CompiledGrammar, T: int, min_duration: int) -> tuple[int, bool]:
    shortest = shortest_accepted_length(cg)
    if shortest is None:
        raise NoPathError("grammar accepts no non-empty string")
    if T < shortest:
        raise NoPathError(
            f"{T} frames cannot cover the shortest accepted string of {shortest} phonemes")
    if T < min_duration * shortest:
        return max(1, T // shortest), True
    return min_duration, False


def _prepare(cg: CompiledGrammar, model: AcousticModel, frames: np.ndarray):
    symbols = cg.symbols()
    for s in symbols:
        if s not in model:
            raise DomainError(f"grammar symbol {s!r} missing from acoustic model")
    col = {s: i for i, s in enumerate(symbols)}
    lp = model.logp_matrix(frames, symbols)
    arc_col = np.array([col[a.phoneme] for a in cg.arcs], dtype=np.intp)
    preds: list[list[int]] = [[] for _ in cg.arcs]
    for a in cg.arcs:
        for b in cg.arcs_from.get(a.dst, []):
            preds[b.id].append(a.id)
    for p in preds:
        p.sort()
    initial = sorted(a.id for a in cg.arcs_from.get(cg.start, []))
    final = sorted(a.id for a in cg.arcs if a.dst in cg.accepting)
    return lp, arc_col, preds, initial, final


def align(frames, cg: CompiledGrammar, model: AcousticModel,
          cfg: DecoderConfig | None = None) -> Alignment:
    """Best segmentation of the frames under the grammar.

    Raises NoPathError when every path is beam-pruned (enlarge the beam)
    or the utterance is shorter than the shortest accepted string.
    """
    cfg = cfg or DecoderConfig(min_duration=model.min_duration)
    x = _as_frames(frames)
    T = x.shape[0]
    m, relaxed = _effective_min_duration(cg, T, cfg.min_duration)
    lp, arc_col, preds, initial, final = _prepare(cg, model, x)
    n = len(cg.arcs)
    if not initial or not final:
        raise NoPathError("grammar has no decodable arcs")

    # score[a, c] = best partial score ending at frame t inside arc a,
    # having spent (c+1) frames there, saturating at c = m-1.
    score = np.full((n, m), NEG_INF)
    bp = np.full((T, n, m), -1, dtype=np.int64)  # flattened predecessor state
    score[initial, 0] = lp[0, arc_col[initial]]

    exits_buf = np.empty(n)
    for t in range(1, T):
        new = np.full((n, m), NEG_INF)
        prev_flat = np.full((n, m), -1, dtype=np.int64)
        if m >= 2:
            # plain stays: class c-1 -> c for c < m-1 (unique predecessor)
            new[:, 1:m] = score[:, 0:m - 1]
            idx = np.arange(n)[:, None] * m + np.arange(0, m - 1)[None, :]
            prev_flat[:, 1:m] = idx
            # saturated stay: class m-1 may also come from m-1 itself;
            # ties prefer the higher class (earlier segment start)
            from_max = score[:, m - 1]
            take_max = from_max >= new[:, m - 1]
            new[:, m - 1] = np.where(take_max, from_max, new[:, m - 1])
            prev_flat[:, m - 1] = np.where(
                take_max, np.arange(n) * m + (m - 1), prev_flat[:, m - 1])
        else:
            new[:, 0] = score[:, 0]
            prev_flat[:, 0] = np.arange(n)
        # advances: predecessor must have met the minimum duration
        np.copyto(exits_buf, score[:, m - 1])
        for a in range(n):
            best_exit = NEG_INF
            best_pred = -1
            for p in preds[a]:
                if exits_buf[p] > best_exit:
                    best_exit = exits_buf[p]
                    best_pred = p
            if best_pred < 0:
                continue
            # stay beats advance on exact ties (earlier segment start)
            if best_exit > new[a, 0]:
                new[a, 0] = best_exit
                prev_flat[a, 0] = best_pred * m + (m - 1)
        new += lp[t, arc_col][:, None]
        best = new.max()
        if best == NEG_INF:
            raise NoPathError(f"all paths dead at frame {t}; increase the beam")
        if math.isfinite(cfg.beam):
            new[new < best - cfg.beam] = NEG_INF
        bp[t] = prev_flat
        score = new
        if cfg.trace is not None:
            alive = int(np.isfinite(score).sum())
            cfg.trace.write(f"t={t} alive={alive} best={best:.6f}\n")

    finals = [(score[a, m - 1], a) for a in final if score[a, m - 1] > NEG_INF]
    if not finals:
        raise NoPathError("no complete path within the beam; increase the beam")
    best_score = max(s for s, _ in finals)
    best_arc = min(a for s, a in finals if s == best_score)

    # backtrace: segment boundaries are exactly the class-0 states
    arcs_at = np.empty(T, dtype=np.int64)
    state = best_arc * m + (m - 1)
    for t in range(T - 1, -1, -1):
        arcs_at[t] = state // m
        state = bp[t, state // m, state % m]
    segments = []
    start = 0
    for t in range(1, T + 1):
        if t == T or arcs_at[t] != arcs_at[t - 1]:
            a = int(arcs_at[start])
            seg_lp = float(lp[start:t, arc_col[a]].sum())
            segments.append(Segment(phoneme=cg.arcs[a].phoneme, start=start,
                                    end=t, acoustic_logscore=seg_lp))
            start = t
    return Alignment(segments=segments, total_logscore=float(best_score),
                     min_duration_relaxed=relaxed)


def nbest(frames, cg: CompiledGrammar, model: AcousticModel,
          cfg: DecoderConfig | None = None) -> NBestList:
    """Top-k distinct symbol sequences, each scored by its best segmentation.

    Exact for beam = inf: per-state hypothesis lists merge partial paths
    by emitted sequence, and any sequence outside a state's top-k cannot
    enter the global top-k (continuations score identically from equal
    states).
    """
    cfg = cfg or DecoderConfig(min_duration=model.min_duration)
    x = _as_frames(frames)
    T = x.shape[0]
    m, _ = _effective_min_duration(cg, T, cfg.min_duration)
    lp, arc_col, preds, initial, final = _prepare(cg, model, x)
    n = len(cg.arcs)
    if not initial or not final:
        raise NoPathError("grammar has no decodable arcs")
    k = cfg.kbest

    def trim(d: dict[tuple[str, ...], float]) -> dict[tuple[str, ...], float]:
        if len(d) <= k:
            return d
        keep = sorted(d.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
        return dict(keep)

    # hyp[a][c] : dict  emitted-sequence -> best partial score
    empty: dict[tuple[str, ...], float] = {}
    hyp: list[list[dict]] = [[dict(empty) for _ in range(m)] for _ in range(n)]
    for a in initial:
        hyp[a][0] = {(cg.arcs[a].phoneme,): float(lp[0, arc_col[a]])}

    for t in range(1, T):
        new: list[list[dict]] = [[{} for _ in range(m)] for _ in range(n)]
        for a in range(n):
            add = float(lp[t, arc_col[a]])
            # stays
            for c in range(1, m):
                if hyp[a][c - 1]:
                    d = new[a][c]
                    for seq, sc in hyp[a][c - 1].items():
                        d[seq] = sc + add
            top = hyp[a][m - 1]
            if top:
                d = new[a][m - 1]
                for seq, sc in top.items():
                    cand = sc + add
                    if cand > d.get(seq, NEG_INF):
                        d[seq] = cand
            # advances
            sym = cg.arcs[a].phoneme
            d = new[a][0]
            for p in preds[a]:
                for seq, sc in hyp[p][m - 1].items():
                    cand = sc + add
                    ext = seq + (sym,)
                    if cand > d.get(ext, NEG_INF):
                        d[ext] = cand
        best = NEG_INF
        for a in range(n):
            for c in range(m):
                if new[a][c]:
                    best = max(best, max(new[a][c].values()))
        if best == NEG_INF:
            raise NoPathError(f"all paths dead at frame {t}; increase the beam")
        cut = best - cfg.beam if math.isfinite(cfg.beam) else NEG_INF
        for a in range(n):
            for c in range(m):
                d = new[a][c]
                if not d:
                    continue
                if cut > NEG_INF and max(d.values()) < cut:
                    new[a][c] = {}
                else:
                    new[a][c] = trim(d)
        hyp = new

    merged: dict[tuple[str, ...], float] = {}
    for a in final:
        for seq, sc in hyp[a][m - 1].items():
            if sc > merged.get(seq, NEG_INF):
                merged[seq] = sc
    if not merged:
        raise NoPathError("no complete path within the beam; increase the beam")
    ranked = sorted(merged.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
    return NBestList([Hypothesis(symbols=seq, total_logscore=sc)
                      for seq, sc in ranked])
