"""Waveform-to-cepstra front end and the synthetic frame generator.

The front end converts 16-bit mono PCM to mel-cepstral frames at a
configurable frame rate (default 65 frames/s, the slow-speech setting).
The synthetic generator emits cepstral frames directly from fixed
per-phoneme Gaussian sources, so decoder and feature tests have exact
ground-truth segmentations independent of the mel pipeline.
"""

from __future__ import annotations

import io
import wave
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from .errors import DataFormatError, DomainError
from .phoneset import PhonemeInventory

# Log-energy floor applied before the DCT; keeps silence finite.
ENERGY_FLOOR = 1e-20

# Seed material for the per-phoneme generator sources.  Fixed so every
# synthesized corpus shares one acoustic world; not a knob.
_GENERATOR_SEED = 0xCAF7E

# Articulatory-embedding mix: phonemes that share articulatory attributes
# get correlated means, so confusions track the neighbor relation.
_ATTR_WEIGHT = 1.2
_RESIDUAL_WEIGHT = 0.7

MIN_SEGMENT_FRAMES = 3


@dataclass
class SampleBuffer:
    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise DomainError(f"sample_rate must be positive, got {self.sample_rate}")
        self.samples = np.asarray(self.samples, dtype=np.float64)


@dataclass
class FeatureFrames:
    frames: np.ndarray  # (T, D)
    frame_rate: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise DomainError("frames must be a T x D matrix")
        if self.frame_rate <= 0:
            raise DomainError("frame_rate must be positive")
        if not np.all(np.isfinite(self.frames)):
            raise DomainError("frames must be finite")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass
class FrontendConfig:
    frame_rate: float = 65.0
    window_ms: float = 25.0
    dim: int = 13
    num_filters: int = 26
    preemphasis: float = 0.97
    low_hz: float = 0.0
    high_hz: float | None = None


def read_wav(data: bytes) -> SampleBuffer:
    """Parse a 16-bit mono PCM WAV byte stream."""
    try:
        wav = wave.open(io.BytesIO(data), "rb")
    except (wave.Error, EOFError) as exc:
        raise DataFormatError(f"not a readable PCM WAV file: {exc}") from None
    with wav:
        if wav.getnchannels() != 1:
            raise DataFormatError(f"expected mono audio, got {wav.getnchannels()} channels")
        if wav.getsampwidth() != 2:
            raise DataFormatError(f"expected 16-bit samples, got {8 * wav.getsampwidth()}-bit")
        declared = wav.getnframes()
        raw = wav.readframes(declared)
        if len(raw) < 2 * declared:
            raise DataFormatError(
                f"truncated WAV: header declares {declared} frames, "
                f"data holds {len(raw) // 2}")
        samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
        return SampleBuffer(samples=samples, sample_rate=wav.getframerate())


def write_wav(buf: SampleBuffer) -> bytes:
    """Inverse of read_wav; used by tests and fixture generation."""
    pcm = np.clip(np.round(buf.samples * 32768.0), -32768, 32767).astype("<i2")
    out = io.BytesIO()
    with wave.open(out, "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(buf.sample_rate)
        wav.writeframes(pcm.tobytes())
    return out.getvalue()


def _frame_signal(samples: np.ndarray, window_len: int, hop: int) -> np.ndarray:
    count = (len(samples) - window_len) // hop + 1
    idx = np.arange(window_len)[None, :] + hop * np.arange(count)[:, None]
    return samples[idx]


def _mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz) / 700.0)


def _mel_inv(mel):
    return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)


def mel_filterbank(cfg: FrontendConfig, sample_rate: int, nfft: int) -> np.ndarray:
    """Triangular mel filterbank, (num_filters, nfft//2 + 1)."""
    high = cfg.high_hz if cfg.high_hz is not None else sample_rate / 2.0
    if high > sample_rate / 2.0:
        raise DomainError("high_hz above Nyquist")
    points = np.linspace(_mel(cfg.low_hz), _mel(high), cfg.num_filters + 2)
    bins = np.floor((nfft + 1) * _mel_inv(points) / sample_rate).astype(int)
    if np.any(np.diff(bins) < 1):
        raise DomainError("degenerate mel filter (increase nfft or lower num_filters)")
    fb = np.zeros((cfg.num_filters, nfft // 2 + 1))
    for j in range(cfg.num_filters):
        lo, mid, hi = bins[j], bins[j + 1], bins[j + 2]
        for i in range(lo, mid):
            fb[j, i] = (i - lo) / (mid - lo)
        for i in range(mid, hi):
            fb[j, i] = (hi - i) / (hi - mid)
    return fb


def filter_center_hz(cfg: FrontendConfig, sample_rate: int, nfft: int, band: int) -> float:
    """Frequency (Hz) of the FFT bin where mel band ``band`` peaks."""
    high = cfg.high_hz if cfg.high_hz is not None else sample_rate / 2.0
    points = np.linspace(_mel(cfg.low_hz), _mel(high), cfg.num_filters + 2)
    bins = np.floor((nfft + 1) * _mel_inv(points) / sample_rate).astype(int)
    return bins[band + 1] * sample_rate / nfft


def _window_and_hop(cfg: FrontendConfig, sample_rate: int) -> tuple[int, int, int]:
    window_len = int(round(cfg.window_ms / 1000.0 * sample_rate))
    hop = int(sample_rate // cfg.frame_rate)
    nfft = 1
    while nfft < window_len:
        nfft *= 2
    return window_len, hop, nfft


def log_mel_energies(buf: SampleBuffer, cfg: FrontendConfig | None = None) -> np.ndarray:
    """Per-frame log mel filterbank energies (the pre-DCT debug view)."""
    cfg = cfg or FrontendConfig()
    if buf.samples.size == 0:
        raise DomainError("empty sample buffer")
    window_len, hop, nfft = _window_and_hop(cfg, buf.sample_rate)
    if len(buf.samples) < window_len:
        raise DomainError(
            f"buffer too short: {len(buf.samples)} samples < one {window_len}-sample window")
    x = buf.samples.copy()
    if cfg.preemphasis > 0:
        x[1:] = x[1:] - cfg.preemphasis * x[:-1]
    frames = _frame_signal(x, window_len, hop)
    frames = frames * np.hamming(window_len)
    spec = np.abs(np.fft.rfft(frames, nfft)) ** 2 / nfft
    fb = mel_filterbank(cfg, buf.sample_rate, nfft)
    energies = spec @ fb.T
    return np.log(np.maximum(energies, ENERGY_FLOOR))


def mfcc(buf: SampleBuffer, cfg: FrontendConfig | None = None) -> FeatureFrames:
    """Mel-cepstral frames; coefficient 0 is the frame energy term."""
    cfg = cfg or FrontendConfig()
    logmel = log_mel_energies(buf, cfg)
    ceps = dct(logmel, type=2, axis=1, norm="ortho")[:, :cfg.dim]
    return FeatureFrames(frames=ceps, frame_rate=cfg.frame_rate)


def cmn(f: FeatureFrames) -> FeatureFrames:
    """Cepstral mean normalization: per-coefficient mean over frames -> 0."""
    if f.num_frames < 1:
        raise DomainError("cannot normalize zero frames")
    return FeatureFrames(frames=f.frames - f.frames.mean(axis=0, keepdims=True),
                         frame_rate=f.frame_rate)


def frames_to_text(f: FeatureFrames) -> str:
    header = f"{f.num_frames}\t{f.dim}\t{f.frame_rate!r}"
    rows = ["\t".join(repr(float(v)) for v in row) for row in f.frames]
    return "\n".join([header, *rows]) + "\n"


def frames_from_text(text: str) -> FeatureFrames:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataFormatError("empty frame file")
    parts = lines[0].split("\t")
    if len(parts) != 3:
        raise DataFormatError("frame file header must be 'T D frame_rate'")
    try:
        count, dim, rate = int(parts[0]), int(parts[1]), float(parts[2])
    except ValueError:
        raise DataFormatError("bad frame file header") from None
    if len(lines) - 1 != count:
        raise DataFormatError(f"frame file declares {count} rows, has {len(lines) - 1}")
    try:
        rows = [[float(v) for v in ln.split("\t")] for ln in lines[1:]]
    except ValueError:
        raise DataFormatError("non-numeric frame value") from None
    frames = np.array(rows, dtype=np.float64).reshape(count, dim if count else 0)
    if count and frames.shape[1] != dim:
        raise DataFormatError("frame row width does not match header")
    return FeatureFrames(frames=frames, frame_rate=rate)


# ---------------------------------------------------------------------------
# Synthetic frame generation


@dataclass
class DistortionSpec:
    """Edits applied to a phoneme sequence before frame generation.

    Positions index the undistorted input sequence (0-based).  Insertions
    at position i are emitted before the i-th phoneme; position len(seq)
    appends at the end.
    """
    substitutions: list[tuple[int, str]] = field(default_factory=list)
    deletions: list[int] = field(default_factory=list)
    insertions: list[tuple[int, str]] = field(default_factory=list)
    duration_scale: dict[int, float] = field(default_factory=dict)
    noise_level: float = 0.0


class PhonemeGenerators:
    """Fixed per-phoneme Gaussian frame sources.

    Means blend a linear embedding of the articulatory attributes with a
    per-phoneme random residual, so articulatory neighbors sound alike.
    """

    def __init__(self, inventory: PhonemeInventory, dim: int = 13):
        self.inventory = inventory
        self.dim = dim
        embed = np.random.default_rng(_GENERATOR_SEED).normal(0.0, 0.35, (dim, 4))
        self.means: dict[str, np.ndarray] = {}
        self.spreads: dict[str, np.ndarray] = {}
        for sym in inventory.symbols:
            rng = np.random.default_rng([_GENERATOR_SEED, inventory.ordinal(sym), dim])
            residual = rng.uniform(-1.0, 1.0, dim)
            spread = rng.uniform(0.6, 1.4, dim)
            attrs = np.array(inventory.attributes(sym).as_tuple())
            self.means[sym] = _ATTR_WEIGHT * (embed @ attrs) + _RESIDUAL_WEIGHT * residual
            self.spreads[sym] = spread

    def mean(self, phoneme: str) -> np.ndarray:
        return self.means[phoneme]

    def spread(self, phoneme: str) -> np.ndarray:
        return self.spreads[phoneme]


def _validate_spec(spec: DistortionSpec, inventory: PhonemeInventory, n: int) -> None:
    for pos, ph in spec.substitutions:
        if not 0 <= pos < n:
            raise DomainError(f"substitution position {pos} outside sequence of {n}")
        if ph not in inventory:
            raise DomainError(f"unknown replacement phoneme {ph!r}")
    for pos in spec.deletions:
        if not 0 <= pos < n:
            raise DomainError(f"deletion position {pos} outside sequence of {n}")
    for pos, ph in spec.insertions:
        if not 0 <= pos <= n:
            raise DomainError(f"insertion position {pos} outside sequence of {n}")
        if ph not in inventory:
            raise DomainError(f"unknown inserted phoneme {ph!r}")
    for pos, scale in spec.duration_scale.items():
        if not 0 <= pos < n:
            raise DomainError(f"duration_scale position {pos} outside sequence of {n}")
        if scale <= 0:
            raise DomainError(f"duration_scale must be positive, got {scale}")
    if spec.noise_level < 0:
        raise DomainError("noise_level must be >= 0")


def apply_distortion(phonemes: list[str], spec: DistortionSpec) -> list[tuple[str, float]]:
    """Emitted (phoneme, duration_scale) sequence after the edits."""
    subs = dict(spec.substitutions)
    deleted = set(spec.deletions)
    inserts: dict[int, list[str]] = {}
    for pos, ph in spec.insertions:
        inserts.setdefault(pos, []).append(ph)
    out: list[tuple[str, float]] = []
    for i, ph in enumerate(phonemes):
        for ins in inserts.get(i, []):
            out.append((ins, 1.0))
        if i not in deleted:
            out.append((subs.get(i, ph), spec.duration_scale.get(i, 1.0)))
    for ins in inserts.get(len(phonemes), []):
        out.append((ins, 1.0))
    return out


def synthesize(
    phonemes: list[str],
    spec: DistortionSpec | None,
    seed: int,
    generators: PhonemeGenerators,
) -> tuple[FeatureFrames, list[tuple[str, int, int]]]:
    """Generate cepstral frames for a phoneme sequence.

    Returns the frames and the true segmentation as (phoneme, start, end)
    with end exclusive.  Deterministic for a fixed seed.
    """
    if not phonemes:
        raise DomainError("empty phoneme sequence")
    inventory = generators.inventory
    for ph in phonemes:
        if ph not in inventory:
            raise DomainError(f"unknown phoneme {ph!r}")
    spec = spec or DistortionSpec()
    _validate_spec(spec, inventory, len(phonemes))
    emitted = apply_distortion(phonemes, spec)
    if not emitted:
        raise DomainError("distortion removes every phoneme")

    rng = np.random.default_rng([seed, len(emitted)])
    chunks = []
    segments = []
    start = 0
    for ph, scale in emitted:
        base = int(rng.integers(6, 13))
        dur = max(MIN_SEGMENT_FRAMES, int(round(base * scale)))
        noise = rng.standard_normal((dur, generators.dim))
        frames = generators.mean(ph) + spec.noise_level * generators.spread(ph) * noise
        chunks.append(frames)
        segments.append((ph, start, start + dur))
        start += dur
    all_frames = np.vstack(chunks)
    return FeatureFrames(frames=all_frames, frame_rate=65.0), segments
