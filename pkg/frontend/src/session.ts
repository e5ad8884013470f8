/**
 * @file src/session.ts
 * @summary Practice-session state: the selected phrase, an append-only
 * attempt history, the current distortion controls, and the display settings
 * (feedback flavour, threshold, worst-word count, service URL). The session
 * never computes probabilities or rankings itself — every attempt stores the
 * service response verbatim and the view layer renders from it.
 *
 * @exports
 *   - Session — Mutable session with invariant-preserving operations
 *   - Attempt / AttemptSource / DistortionControls / FeedbackMode — State types
 *   - DEFAULT_CONTROLS — Clean-synthesis starting point for the control panel
 */

import type { AssessResponse, DistortionRequest } from "./api.js";

export type AttemptSource = "mic" | "upload" | "synthetic";

export type FeedbackMode = "sum" | "product";

export interface DistortionControls {
  kind: DistortionRequest["kind"];
  position: number;
  detail: string;
  noiseLevel: number;
  seed: number;
}

export const DEFAULT_CONTROLS: DistortionControls = {
  kind: "clean",
  position: 0,
  detail: "",
  noiseLevel: 0.8,
  seed: 0,
};

export interface Attempt {
  /** Strictly increasing across the whole session, starting at 1. */
  readonly id: number;
  readonly source: AttemptSource;
  /** The request id echoed by the service for this attempt. */
  readonly requestId: string;
  readonly phrase: string;
  /** Service response stored verbatim (probabilities, feedback, worst words). */
  readonly response: AssessResponse;
}

/**
 * One practice session. History is append-only: attempts are never removed,
 * reordered, or renumbered, regardless of phrase changes or display toggles.
 * At most one service request may be in flight; callers gate requests through
 * `beginRequest`/`endRequest`.
 */
export class Session {
  phrase: string | null = null;
  feedbackMode: FeedbackMode = "sum";
  controls: DistortionControls = { ...DEFAULT_CONTROLS };
  threshold = 0.5;
  feedbackK = 1;
  serviceUrl: string;

  private attempts: Attempt[] = [];
  private nextId = 1;
  private inFlight = false;

  constructor(serviceUrl = "http://127.0.0.1:8300") {
    this.serviceUrl = serviceUrl;
  }

  get history(): readonly Attempt[] {
    return this.attempts.slice();
  }

  get lastAttempt(): Attempt | null {
    return this.attempts.length ? this.attempts[this.attempts.length - 1] : null;
  }

  get requestInFlight(): boolean {
    return this.inFlight;
  }

  selectPhrase(phrase: string): void {
    this.phrase = phrase;
  }

  setFeedbackMode(mode: FeedbackMode): void {
    this.feedbackMode = mode;
  }

  setControls(controls: Partial<DistortionControls>): void {
    this.controls = { ...this.controls, ...controls };
  }

  /**
   * Claim the single request slot. Returns false — and the caller must not
   * issue a request — when one is already outstanding.
   */
  beginRequest(): boolean {
    if (this.inFlight) return false;
    this.inFlight = true;
    return true;
  }

  endRequest(): void {
    this.inFlight = false;
  }

  /** Append a completed attempt; returns it with its fresh id. */
  recordAttempt(source: AttemptSource, phrase: string, response: AssessResponse): Attempt {
    const attempt: Attempt = {
      id: this.nextId++,
      source,
      requestId: response.request_id,
      phrase,
      response,
    };
    this.attempts.push(attempt);
    return attempt;
  }
}
