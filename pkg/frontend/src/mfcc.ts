/**
 * @file src/mfcc.ts
 * @summary Client-side acoustic front end: 16-bit mono PCM WAV parsing and
 * mel-cepstral feature extraction. The numeric pipeline (pre-emphasis,
 * Hamming-windowed framing, power spectrum, triangular mel filterbank,
 * log-energy floor, orthonormal DCT-II, cepstral mean normalization) mirrors
 * the service's own front end so locally computed frames agree with
 * server-side synthesis to within display precision.
 *
 * @exports
 *   - readWav — Parse a WAV byte buffer into float samples in [-1, 1]
 *   - mfcc / cmn / logMelEnergies — Feature extraction stages
 *   - melFilterbank / windowAndHop — Exposed internals for tests and guards
 *   - framesToPayload / parseFramesText — Interchange helpers
 *   - WavFormatError / FrontendError — Typed failure modes
 */

export const ENERGY_FLOOR = 1e-20;

/** Raised when WAV bytes are missing, truncated, or of an unsupported shape. */
export class WavFormatError extends Error {}

/** Raised when samples cannot be featurized (empty or shorter than a window). */
export class FrontendError extends Error {}

export interface FrontendConfig {
  frameRate: number;
  windowMs: number;
  dim: number;
  numFilters: number;
  preemphasis: number;
  lowHz: number;
  highHz: number | null;
}

export const DEFAULT_FRONTEND: FrontendConfig = {
  frameRate: 65.0,
  windowMs: 25.0,
  dim: 13,
  numFilters: 26,
  preemphasis: 0.97,
  lowHz: 0.0,
  highHz: null,
};

export interface SampleBuffer {
  samples: Float64Array;
  sampleRate: number;
}

export interface FeatureFrames {
  /** Row-major (numFrames x dim). */
  frames: number[][];
  frameRate: number;
}

// ---------------------------------------------------------------------------
// WAV parsing

function ascii(view: DataView, offset: number, length: number): string {
  let out = "";
  for (let i = 0; i < length; i++) out += String.fromCharCode(view.getUint8(offset + i));
  return out;
}

/**
 * Parse a 16-bit mono PCM WAV byte stream.
 *
 * Stereo, non-PCM, or non-16-bit audio is rejected, as is a data chunk
 * shorter than its declared size (a truncated upload).
 */
export function readWav(bytes: Uint8Array | ArrayBuffer): SampleBuffer {
  const raw = bytes instanceof Uint8Array ? bytes : new Uint8Array(bytes);
  const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  if (raw.byteLength < 12 || ascii(view, 0, 4) !== "RIFF" || ascii(view, 8, 4) !== "WAVE") {
    throw new WavFormatError("not a readable PCM WAV file: missing RIFF/WAVE header");
  }
  let offset = 12;
  let sampleRate = 0;
  let haveFmt = false;
  while (offset + 8 <= raw.byteLength) {
    const chunkId = ascii(view, offset, 4);
    const chunkSize = view.getUint32(offset + 4, true);
    const body = offset + 8;
    if (chunkId === "fmt ") {
      if (body + 16 > raw.byteLength) {
        throw new WavFormatError("not a readable PCM WAV file: short fmt chunk");
      }
      const audioFormat = view.getUint16(body, true);
      const channels = view.getUint16(body + 2, true);
      sampleRate = view.getUint32(body + 4, true);
      const bitsPerSample = view.getUint16(body + 14, true);
      if (audioFormat !== 1) {
        throw new WavFormatError(`not a readable PCM WAV file: format ${audioFormat}`);
      }
      if (channels !== 1) {
        throw new WavFormatError(`expected mono audio, got ${channels} channels`);
      }
      if (bitsPerSample !== 16) {
        throw new WavFormatError(`expected 16-bit samples, got ${bitsPerSample}-bit`);
      }
      haveFmt = true;
    } else if (chunkId === "data") {
      if (!haveFmt) {
        throw new WavFormatError("not a readable PCM WAV file: data before fmt");
      }
      const declared = Math.floor(chunkSize / 2);
      const available = Math.floor((raw.byteLength - body) / 2);
      if (available < declared) {
        throw new WavFormatError(
          `truncated WAV: header declares ${declared} frames, data holds ${available}`,
        );
      }
      const samples = new Float64Array(declared);
      for (let i = 0; i < declared; i++) {
        samples[i] = view.getInt16(body + 2 * i, true) / 32768.0;
      }
      return { samples, sampleRate };
    }
    offset = body + chunkSize + (chunkSize % 2);
  }
  throw new WavFormatError("not a readable PCM WAV file: no data chunk");
}

// ---------------------------------------------------------------------------
// Feature extraction

/** Window length, hop, and FFT size for a config at a given sample rate. */
export function windowAndHop(
  cfg: FrontendConfig,
  sampleRate: number,
): { windowLen: number; hop: number; nfft: number } {
  const windowLen = Math.round((cfg.windowMs / 1000.0) * sampleRate);
  const hop = Math.floor(sampleRate / cfg.frameRate);
  let nfft = 1;
  while (nfft < windowLen) nfft *= 2;
  return { windowLen, hop, nfft };
}

function melOf(hz: number): number {
  return 2595.0 * Math.log10(1.0 + hz / 700.0);
}

function melInv(mel: number): number {
  return 700.0 * (Math.pow(10.0, mel / 2595.0) - 1.0);
}

function linspace(start: number, stop: number, count: number): number[] {
  const out = new Array<number>(count);
  const step = (stop - start) / (count - 1);
  for (let i = 0; i < count; i++) out[i] = start + step * i;
  out[count - 1] = stop;
  return out;
}

/** Triangular mel filterbank, (numFilters x nfft/2+1). */
export function melFilterbank(
  cfg: FrontendConfig,
  sampleRate: number,
  nfft: number,
): number[][] {
  const high = cfg.highHz !== null ? cfg.highHz : sampleRate / 2.0;
  if (high > sampleRate / 2.0) throw new FrontendError("highHz above Nyquist");
  const points = linspace(melOf(cfg.lowHz), melOf(high), cfg.numFilters + 2);
  const bins = points.map((p) => Math.floor(((nfft + 1) * melInv(p)) / sampleRate));
  for (let i = 1; i < bins.length; i++) {
    if (bins[i] - bins[i - 1] < 1) {
      throw new FrontendError("degenerate mel filter (increase nfft or lower numFilters)");
    }
  }
  const width = Math.floor(nfft / 2) + 1;
  const fb: number[][] = [];
  for (let j = 0; j < cfg.numFilters; j++) {
    const row = new Array<number>(width).fill(0);
    const lo = bins[j];
    const mid = bins[j + 1];
    const hi = bins[j + 2];
    for (let i = lo; i < mid; i++) row[i] = (i - lo) / (mid - lo);
    for (let i = mid; i < hi; i++) row[i] = (hi - i) / (hi - mid);
    fb.push(row);
  }
  return fb;
}

/** In-place iterative radix-2 FFT (length must be a power of two). */
function fftInPlace(re: Float64Array, im: Float64Array): void {
  const n = re.length;
  for (let i = 1, j = 0; i < n; i++) {
    let bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      const tr = re[i];
      re[i] = re[j];
      re[j] = tr;
      const ti = im[i];
      im[i] = im[j];
      im[j] = ti;
    }
  }
  const half = n >> 1;
  const twRe = new Float64Array(half);
  const twIm = new Float64Array(half);
  for (let k = 0; k < half; k++) {
    const ang = (-2.0 * Math.PI * k) / n;
    twRe[k] = Math.cos(ang);
    twIm[k] = Math.sin(ang);
  }
  for (let len = 2; len <= n; len <<= 1) {
    const stride = n / len;
    for (let base = 0; base < n; base += len) {
      for (let k = 0; k < len >> 1; k++) {
        const a = base + k;
        const b = a + (len >> 1);
        const wr = twRe[k * stride];
        const wi = twIm[k * stride];
        const vr = re[b] * wr - im[b] * wi;
        const vi = re[b] * wi + im[b] * wr;
        re[b] = re[a] - vr;
        im[b] = im[a] - vi;
        re[a] = re[a] + vr;
        im[a] = im[a] + vi;
      }
    }
  }
}

/** Power spectrum |FFT|^2 / nfft of one zero-padded real frame. */
function powerSpectrum(frame: Float64Array, nfft: number): Float64Array {
  const re = new Float64Array(nfft);
  const im = new Float64Array(nfft);
  re.set(frame);
  fftInPlace(re, im);
  const out = new Float64Array((nfft >> 1) + 1);
  for (let i = 0; i < out.length; i++) {
    out[i] = (re[i] * re[i] + im[i] * im[i]) / nfft;
  }
  return out;
}

/** Orthonormal DCT-II of one row, keeping the first `dim` coefficients. */
function dctOrtho(row: Float64Array, dim: number): number[] {
  const n = row.length;
  const scale0 = Math.sqrt(1.0 / (4.0 * n));
  const scale = Math.sqrt(1.0 / (2.0 * n));
  const out = new Array<number>(dim);
  for (let k = 0; k < dim; k++) {
    let acc = 0;
    for (let i = 0; i < n; i++) {
      acc += 2.0 * row[i] * Math.cos((Math.PI * k * (2 * i + 1)) / (2 * n));
    }
    out[k] = acc * (k === 0 ? scale0 : scale);
  }
  return out;
}

/** Per-frame log mel filterbank energies (the pre-DCT debug view). */
export function logMelEnergies(
  buf: SampleBuffer,
  cfg: FrontendConfig = DEFAULT_FRONTEND,
): Float64Array[] {
  if (buf.samples.length === 0) throw new FrontendError("empty sample buffer");
  const { windowLen, hop, nfft } = windowAndHop(cfg, buf.sampleRate);
  if (buf.samples.length < windowLen) {
    throw new FrontendError(
      `buffer too short: ${buf.samples.length} samples < one ${windowLen}-sample window`,
    );
  }
  const x = Float64Array.from(buf.samples);
  if (cfg.preemphasis > 0) {
    for (let i = x.length - 1; i >= 1; i--) x[i] = x[i] - cfg.preemphasis * x[i - 1];
  }
  const window = new Float64Array(windowLen);
  for (let n = 0; n < windowLen; n++) {
    window[n] = 0.54 - 0.46 * Math.cos((2.0 * Math.PI * n) / (windowLen - 1));
  }
  const fb = melFilterbank(cfg, buf.sampleRate, nfft);
  const count = Math.floor((x.length - windowLen) / hop) + 1;
  const rows: Float64Array[] = [];
  const frame = new Float64Array(windowLen);
  for (let t = 0; t < count; t++) {
    for (let n = 0; n < windowLen; n++) frame[n] = x[t * hop + n] * window[n];
    const spec = powerSpectrum(frame, nfft);
    const row = new Float64Array(cfg.numFilters);
    for (let j = 0; j < cfg.numFilters; j++) {
      let acc = 0;
      const filt = fb[j];
      for (let i = 0; i < spec.length; i++) acc += spec[i] * filt[i];
      row[j] = Math.log(Math.max(acc, ENERGY_FLOOR));
    }
    rows.push(row);
  }
  return rows;
}

/** Mel-cepstral frames; coefficient 0 is the frame energy term. */
export function mfcc(buf: SampleBuffer, cfg: FrontendConfig = DEFAULT_FRONTEND): FeatureFrames {
  const logmel = logMelEnergies(buf, cfg);
  return {
    frames: logmel.map((row) => dctOrtho(row, cfg.dim)),
    frameRate: cfg.frameRate,
  };
}

/** Cepstral mean normalization: per-coefficient mean over frames becomes 0. */
export function cmn(f: FeatureFrames): FeatureFrames {
  if (f.frames.length < 1) throw new FrontendError("cannot normalize zero frames");
  const dim = f.frames[0].length;
  const mean = new Array<number>(dim).fill(0);
  for (const row of f.frames) {
    for (let d = 0; d < dim; d++) mean[d] += row[d];
  }
  for (let d = 0; d < dim; d++) mean[d] /= f.frames.length;
  return {
    frames: f.frames.map((row) => row.map((v, d) => v - mean[d])),
    frameRate: f.frameRate,
  };
}

// ---------------------------------------------------------------------------
// Interchange

/** Shape frames the way the assessment endpoint expects them. */
export function framesToPayload(f: FeatureFrames): {
  frame_rate: number;
  dim: number;
  data: number[][];
} {
  return {
    frame_rate: f.frameRate,
    dim: f.frames.length ? f.frames[0].length : 0,
    data: f.frames.map((row) => [...row]),
  };
}

/** Parse the tab-separated frame interchange text ("T D rate" header). */
export function parseFramesText(text: string): FeatureFrames {
  const lines = text.split("\n").filter((ln) => ln.trim().length > 0);
  if (lines.length === 0) throw new FrontendError("empty frame file");
  const header = lines[0].split("\t");
  if (header.length !== 3) throw new FrontendError("frame file header must be 'T D frame_rate'");
  const count = Number(header[0]);
  const dim = Number(header[1]);
  const rate = Number(header[2]);
  if (!Number.isInteger(count) || !Number.isInteger(dim) || !Number.isFinite(rate)) {
    throw new FrontendError("bad frame file header");
  }
  if (lines.length - 1 !== count) {
    throw new FrontendError(`frame file declares ${count} rows, has ${lines.length - 1}`);
  }
  const frames = lines.slice(1).map((ln) => {
    const row = ln.split("\t").map(Number);
    if (row.length !== dim || row.some((v) => !Number.isFinite(v))) {
      throw new FrontendError("frame row width does not match header");
    }
    return row;
  });
  return { frames, frameRate: rate };
}
