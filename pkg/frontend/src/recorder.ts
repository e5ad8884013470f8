/**
 * @file src/recorder.ts
 * @summary Turns captured or uploaded audio into assessment-ready frames.
 * The numeric path (channel mixdown, linear resampling to 16 kHz, feature
 * extraction with a too-short guard) is pure and fully testable; browser
 * specifics (getUserMedia, AudioContext) live behind small injectable
 * interfaces so permission failures surface as typed errors.
 *
 * @exports
 *   - captureToBuffer / mixToMono / resampleLinear — Pure audio conditioning
 *   - bufferToFrames — Conditioned samples to normalized feature frames
 *   - MicRecorder — Browser capture glue over injectable media interfaces
 *   - CaptureTooShortError / MicPermissionError — Typed failure modes
 */

import {
  cmn,
  DEFAULT_FRONTEND,
  FrontendError,
  mfcc,
  windowAndHop,
  type FeatureFrames,
  type SampleBuffer,
} from "./mfcc.js";

export const TARGET_SAMPLE_RATE = 16000;

/** Raised when a capture holds less than one analysis window of audio. */
export class CaptureTooShortError extends Error {}

/** Raised when the browser refuses microphone access. */
export class MicPermissionError extends Error {}

/** Average any number of equal-length channels down to one. */
export function mixToMono(channels: readonly Float32Array[]): Float64Array {
  if (channels.length === 0) return new Float64Array(0);
  const length = channels[0].length;
  const out = new Float64Array(length);
  for (const channel of channels) {
    for (let i = 0; i < length; i++) out[i] += channel[i];
  }
  for (let i = 0; i < length; i++) out[i] /= channels.length;
  return out;
}

/** Linear-interpolation resampling between arbitrary sample rates. */
export function resampleLinear(
  samples: Float64Array,
  fromRate: number,
  toRate: number,
): Float64Array {
  if (fromRate === toRate || samples.length === 0) return Float64Array.from(samples);
  const outLength = Math.max(1, Math.round((samples.length * toRate) / fromRate));
  const out = new Float64Array(outLength);
  const step = fromRate / toRate;
  for (let i = 0; i < outLength; i++) {
    const pos = i * step;
    const lo = Math.min(Math.floor(pos), samples.length - 1);
    const hi = Math.min(lo + 1, samples.length - 1);
    const frac = pos - lo;
    out[i] = samples[lo] * (1 - frac) + samples[hi] * frac;
  }
  return out;
}

/** Mix to mono and resample to the 16 kHz the service front end expects. */
export function captureToBuffer(
  channels: readonly Float32Array[],
  sourceRate: number,
): SampleBuffer {
  const mono = mixToMono(channels);
  return {
    samples: resampleLinear(mono, sourceRate, TARGET_SAMPLE_RATE),
    sampleRate: TARGET_SAMPLE_RATE,
  };
}

/**
 * Extract normalized feature frames from a conditioned buffer.
 *
 * Raises CaptureTooShortError when the buffer holds less than one analysis
 * window — callers show a message and must not issue a service request.
 */
export function bufferToFrames(buf: SampleBuffer): FeatureFrames {
  const { windowLen } = windowAndHop(DEFAULT_FRONTEND, buf.sampleRate);
  if (buf.samples.length < windowLen) {
    throw new CaptureTooShortError(
      `capture of ${buf.samples.length} samples is shorter than one ` +
        `${windowLen}-sample analysis window`,
    );
  }
  try {
    return cmn(mfcc(buf));
  } catch (err) {
    if (err instanceof FrontendError) {
      throw new CaptureTooShortError(err.message);
    }
    throw err;
  }
}

// ---------------------------------------------------------------------------
// Browser glue

/** Structural slice of navigator.mediaDevices used by the recorder. */
export interface MediaDevicesLike {
  getUserMedia(constraints: { audio: boolean }): Promise<unknown>;
}

/** Produces raw channel data once a capture session stops. */
export interface CaptureSource {
  start(stream: unknown): Promise<void>;
  stop(): Promise<{ channels: Float32Array[]; sampleRate: number }>;
}

/**
 * Microphone capture over injectable media interfaces. `record` resolves to
 * a conditioned 16 kHz mono buffer; a permission refusal becomes
 * MicPermissionError so the view can show a visible error state.
 */
export class MicRecorder {
  private stream: unknown = null;

  constructor(
    private readonly devices: MediaDevicesLike,
    private readonly source: CaptureSource,
  ) {}

  async start(): Promise<void> {
    try {
      this.stream = await this.devices.getUserMedia({ audio: true });
    } catch (err) {
      const name = (err as { name?: string } | null)?.name;
      if (name === "NotAllowedError" || name === "SecurityError") {
        throw new MicPermissionError("microphone permission was denied");
      }
      throw err;
    }
    await this.source.start(this.stream);
  }

  async stop(): Promise<SampleBuffer> {
    const { channels, sampleRate } = await this.source.stop();
    this.stream = null;
    return captureToBuffer(channels, sampleRate);
  }
}
