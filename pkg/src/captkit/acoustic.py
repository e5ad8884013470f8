"""Per-phoneme diagonal-Gaussian acoustic model.

One single-state HMM per phoneme: a diagonal Gaussian over cepstral
frames with a self-loop, a minimum duration of MIN_DURATION frames, and
loop/exit probabilities derived from an expected segment length.  The
decoder consumes per-frame log-likelihoods; everything here is exact
closed-form statistics, no iterative fitting.

Model file layout (little-endian):
    magic   6 bytes  b"CAPTAM"
    version u16      1
    dim     u16      D
    count   u16      number of phoneme records
    min_dur u16      minimum duration in frames
    then per record, sorted by phoneme symbol:
        sym_len u8, symbol ascii bytes,
        log_stay f64, log_exit f64,
        mean D x f64, var D x f64
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CoverageError, DataFormatError, DomainError
from .phoneset import PhonemeInventory

MAGIC = b"CAPTAM"
VERSION = 1
VAR_FLOOR = 1e-4
MIN_DURATION = 3
DEFAULT_SEGMENT_FRAMES = 8.0

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class PhonemeModel:
    mean: np.ndarray
    var: np.ndarray
    log_stay: float
    log_exit: float

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.var = np.asarray(self.var, dtype=np.float64)
        if self.mean.shape != self.var.shape or self.mean.ndim != 1:
            raise DomainError("mean/var must be matching vectors")
        if np.any(self.var < VAR_FLOOR - 1e-300):
            raise DomainError(f"variance below floor {VAR_FLOOR}")
        total = math.exp(self.log_stay) + math.exp(self.log_exit)
        if not math.isfinite(self.log_stay) or not math.isfinite(self.log_exit):
            raise DomainError("loop/exit log-probabilities must be finite")
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"loop+exit probabilities sum to {total}, not 1")


class AcousticModel:
    """Immutable after construction; safe for concurrent reads."""

    def __init__(self, phonemes: dict[str, PhonemeModel], min_duration: int = MIN_DURATION):
        if not phonemes:
            raise DomainError("model must contain at least one phoneme")
        if min_duration < 1:
            raise DomainError("min_duration must be >= 1")
        dims = {pm.mean.shape[0] for pm in phonemes.values()}
        if len(dims) != 1:
            raise DomainError(f"inconsistent model dimensions: {sorted(dims)}")
        self.dim = dims.pop()
        self.min_duration = min_duration
        self.phonemes = dict(sorted(phonemes.items()))
        # Cached dense views for the decoder's batched scoring.
        self._symbols = list(self.phonemes)
        self._index = {s: i for i, s in enumerate(self._symbols)}
        self._means = np.stack([self.phonemes[s].mean for s in self._symbols])
        self._vars = np.stack([self.phonemes[s].var for s in self._symbols])
        self._consts = -0.5 * np.sum(_LOG_2PI + np.log(self._vars), axis=1)
        self._inv_vars = 1.0 / self._vars

    def __contains__(self, phoneme: str) -> bool:
        return phoneme in self.phonemes

    def __eq__(self, other) -> bool:
        if not isinstance(other, AcousticModel):
            return NotImplemented
        if self.min_duration != other.min_duration or self._symbols != other._symbols:
            return False
        for s in self._symbols:
            a, b = self.phonemes[s], other.phonemes[s]
            if not (np.array_equal(a.mean, b.mean) and np.array_equal(a.var, b.var)
                    and a.log_stay == b.log_stay and a.log_exit == b.log_exit):
                return False
        return True

    def check_covers(self, inventory: PhonemeInventory) -> None:
        missing = [s for s in inventory.symbols if s not in self.phonemes]
        if missing:
            raise CoverageError(f"model lacks phonemes: {', '.join(missing)}")

    def frame_logp(self, phoneme: str, frames: np.ndarray) -> np.ndarray | float:
        """Log-density of one frame (D,) -> float, or a batch (T, D) -> (T,)."""
        if phoneme not in self.phonemes:
            raise DomainError(f"unknown phoneme {phoneme!r}")
        frames = np.asarray(frames, dtype=np.float64)
        single = frames.ndim == 1
        if single:
            frames = frames[None, :]
        if frames.ndim != 2 or frames.shape[1] != self.dim:
            raise DomainError(
                f"frame dimension {frames.shape[-1] if frames.ndim else 0} != model dim {self.dim}")
        i = self._index[phoneme]
        diff = frames - self._means[i]
        out = self._consts[i] - 0.5 * (diff * diff) @ self._inv_vars[i]
        return float(out[0]) if single else out

    def logp_matrix(self, frames: np.ndarray, symbols: list[str]) -> np.ndarray:
        """(T, len(symbols)) log-densities; the decoder's batched path."""
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] != self.dim:
            raise DomainError(f"frames must be T x {self.dim}")
        rows = []
        for s in symbols:
            if s not in self._index:
                raise DomainError(f"unknown phoneme {s!r}")
            rows.append(self._index[s])
        means = self._means[rows]
        diff = frames[:, None, :] - means[None, :, :]
        return self._consts[rows] - 0.5 * np.einsum(
            "tsd,sd->ts", diff * diff, self._inv_vars[rows])


def train(
    labeled: list[tuple[str, np.ndarray]],
    inventory: PhonemeInventory,
    min_duration: int = MIN_DURATION,
    mean_segment_frames: float = DEFAULT_SEGMENT_FRAMES,
    var_floor: float = VAR_FLOOR,
) -> AcousticModel:
    """Fit per-phoneme Gaussians from (phoneme, frame) pairs.

    Accumulation uses exact summation, so any permutation of ``labeled``
    yields a bitwise-identical model.  Every inventory phoneme needs at
    least 2*D frames.  Loop/exit probabilities come from
    ``mean_segment_frames`` (expected frames per segment), not from the
    data, so they carry no ordering information either.
    """
    if mean_segment_frames <= 1.0:
        raise DomainError("mean_segment_frames must exceed 1")
    by_phoneme: dict[str, list[np.ndarray]] = {s: [] for s in inventory.symbols}
    dim = None
    for phoneme, frame in labeled:
        if phoneme not in by_phoneme:
            raise DomainError(f"unknown phoneme {phoneme!r} in training data")
        frame = np.asarray(frame, dtype=np.float64)
        if frame.ndim != 1:
            raise DomainError("each labeled frame must be a vector")
        if dim is None:
            dim = frame.shape[0]
        elif frame.shape[0] != dim:
            raise DomainError(f"frame dimension {frame.shape[0]} != {dim}")
        by_phoneme[phoneme].append(frame)
    if dim is None:
        raise CoverageError("no labeled frames")
    need = 2 * dim
    short = [s for s in inventory.symbols if len(by_phoneme[s]) < need]
    if short:
        counts = ", ".join(f"{s} ({len(by_phoneme[s])})" for s in short)
        raise CoverageError(f"phonemes with fewer than {need} frames: {counts}")

    log_stay = math.log(1.0 - 1.0 / mean_segment_frames)
    log_exit = math.log(1.0 / mean_segment_frames)
    models = {}
    for sym in inventory.symbols:
        frames = by_phoneme[sym]
        n = len(frames)
        mean = np.empty(dim)
        var = np.empty(dim)
        for d in range(dim):
            vals = [f[d] for f in frames]
            s1 = math.fsum(vals)
            s2 = math.fsum(v * v for v in vals)
            mu = s1 / n
            mean[d] = mu
            var[d] = max(s2 / n - mu * mu, var_floor)
        models[sym] = PhonemeModel(mean=mean, var=var,
                                   log_stay=log_stay, log_exit=log_exit)
    return AcousticModel(models, min_duration=min_duration)


def save(model: AcousticModel) -> bytes:
    out = [MAGIC, struct.pack("<HHHH", VERSION, model.dim,
                              len(model.phonemes), model.min_duration)]
    for sym, pm in model.phonemes.items():
        raw = sym.encode("ascii")
        out.append(struct.pack("<B", len(raw)))
        out.append(raw)
        out.append(struct.pack("<dd", pm.log_stay, pm.log_exit))
        out.append(pm.mean.astype("<f8").tobytes())
        out.append(pm.var.astype("<f8").tobytes())
    return b"".join(out)


def load(data: bytes, expected_dim: int | None = None) -> AcousticModel:
    if len(data) < len(MAGIC) + 8:
        raise DataFormatError("model file truncated")
    if data[:len(MAGIC)] != MAGIC:
        raise DataFormatError("not an acoustic model file (bad magic)")
    version, dim, count, min_duration = struct.unpack_from("<HHHH", data, len(MAGIC))
    if version != VERSION:
        raise DataFormatError(f"unsupported model version {version}")
    if expected_dim is not None and dim != expected_dim:
        raise DataFormatError(f"model dimension {dim} != expected {expected_dim}")
    pos = len(MAGIC) + 8
    phonemes = {}
    for _ in range(count):
        if pos + 1 > len(data):
            raise DataFormatError("model file truncated")
        (sym_len,) = struct.unpack_from("<B", data, pos)
        pos += 1
        record = sym_len + 16 + 16 * dim
        if pos + record > len(data):
            raise DataFormatError("model file truncated")
        sym = data[pos:pos + sym_len].decode("ascii")
        pos += sym_len
        log_stay, log_exit = struct.unpack_from("<dd", data, pos)
        pos += 16
        mean = np.frombuffer(data, dtype="<f8", count=dim, offset=pos).copy()
        pos += 8 * dim
        var = np.frombuffer(data, dtype="<f8", count=dim, offset=pos).copy()
        pos += 8 * dim
        if sym in phonemes:
            raise DataFormatError(f"duplicate phoneme record {sym!r}")
        phonemes[sym] = PhonemeModel(mean=mean, var=var,
                                     log_stay=log_stay, log_exit=log_exit)
    if pos != len(data):
        raise DataFormatError("trailing bytes after model records")
    return AcousticModel(phonemes, min_duration=min_duration)
