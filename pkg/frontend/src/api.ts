/**
 * @file src/api.ts
 * @summary Typed JSON client for the pronunciation assessment service. All
 * communication with the backend goes through this module: health checks,
 * single-word probability queries, full-phrase assessment, and server-side
 * synthesis of practice attempts. Responses are validated structurally before
 * use so a malformed body surfaces as a typed error instead of propagating
 * NaNs into the view layer.
 *
 * @exports
 *   - LabClient — Fetch-based client bound to a single service URL
 *   - parseAssessResponse / parseSynthResponse / parseHealthResponse — Guards
 *   - ServiceApiError / ServiceUnreachableError / MalformedResponseError
 */

export interface FramesPayload {
  frame_rate: number;
  dim: number;
  data: number[][];
}

export interface WordFeedback {
  /** 1-based phoneme positions, most promising first. */
  ranking: number[];
  gains_sum: number[];
  gains_product: number[];
  /** Per-phoneme "longer" | "shorter" | "neutral". */
  duration_direction: string[];
}

export interface WordAssessment {
  word: string;
  probability: number;
  feedback: WordFeedback;
}

export interface AssessResponse {
  request_id: string;
  words: WordAssessment[];
  /** 1-based word indices below threshold, worst first. */
  worst_words: number[];
}

export interface SynthResponse {
  request_id: string;
  phrase: string;
  frames: FramesPayload;
}

export interface HealthResponse {
  status: string;
  model_count: number;
}

export interface DistortionRequest {
  kind: "clean" | "substitution" | "deletion" | "insertion" | "duration";
  position?: number;
  detail?: string;
}

/** The service answered with an error body ({error_code, message}). */
export class ServiceApiError extends Error {
  constructor(
    readonly status: number,
    readonly errorCode: string,
    message: string,
  ) {
    super(message);
  }
}

/** The service could not be reached at all; the caller should offer a retry. */
export class ServiceUnreachableError extends Error {}

/** The service answered 200 but the body does not match the contract. */
export class MalformedResponseError extends Error {}

// ---------------------------------------------------------------------------
// Structural validation

function isNumberArray(v: unknown): v is number[] {
  return Array.isArray(v) && v.every((x) => typeof x === "number" && Number.isFinite(x));
}

function isStringArray(v: unknown): v is string[] {
  return Array.isArray(v) && v.every((x) => typeof x === "string");
}

function asObject(v: unknown, what: string): Record<string, unknown> {
  if (typeof v !== "object" || v === null || Array.isArray(v)) {
    throw new MalformedResponseError(`${what} is not an object`);
  }
  return v as Record<string, unknown>;
}

function parseWordFeedback(v: unknown): WordFeedback {
  const obj = asObject(v, "feedback");
  const ranking = obj.ranking;
  const gainsSum = obj.gains_sum;
  const gainsProduct = obj.gains_product;
  const durations = obj.duration_direction;
  if (
    !isNumberArray(ranking) ||
    !isNumberArray(gainsSum) ||
    !isNumberArray(gainsProduct) ||
    !isStringArray(durations)
  ) {
    throw new MalformedResponseError("feedback fields missing or mistyped");
  }
  if (
    gainsSum.length !== ranking.length ||
    gainsProduct.length !== ranking.length ||
    durations.length !== ranking.length
  ) {
    throw new MalformedResponseError("feedback arrays disagree on phoneme count");
  }
  return {
    ranking,
    gains_sum: gainsSum,
    gains_product: gainsProduct,
    duration_direction: durations,
  };
}

export function parseAssessResponse(v: unknown): AssessResponse {
  const obj = asObject(v, "assessment response");
  if (typeof obj.request_id !== "string") {
    throw new MalformedResponseError("assessment response missing request_id");
  }
  if (!Array.isArray(obj.words)) {
    throw new MalformedResponseError("assessment response missing words");
  }
  const words = obj.words.map((entry): WordAssessment => {
    const w = asObject(entry, "word entry");
    if (typeof w.word !== "string" || typeof w.probability !== "number") {
      throw new MalformedResponseError("word entry missing word/probability");
    }
    return {
      word: w.word,
      probability: w.probability,
      feedback: parseWordFeedback(w.feedback),
    };
  });
  if (!isNumberArray(obj.worst_words)) {
    throw new MalformedResponseError("assessment response missing worst_words");
  }
  return { request_id: obj.request_id, words, worst_words: obj.worst_words };
}

export function parseSynthResponse(v: unknown): SynthResponse {
  const obj = asObject(v, "synthesis response");
  if (typeof obj.request_id !== "string" || typeof obj.phrase !== "string") {
    throw new MalformedResponseError("synthesis response missing request_id/phrase");
  }
  const frames = asObject(obj.frames, "synthesized frames");
  const data = frames.data;
  if (
    typeof frames.frame_rate !== "number" ||
    typeof frames.dim !== "number" ||
    !Array.isArray(data) ||
    !data.every(isNumberArray)
  ) {
    throw new MalformedResponseError("synthesized frames malformed");
  }
  return {
    request_id: obj.request_id,
    phrase: obj.phrase,
    frames: { frame_rate: frames.frame_rate, dim: frames.dim, data: data as number[][] },
  };
}

export function parseHealthResponse(v: unknown): HealthResponse {
  const obj = asObject(v, "health response");
  if (typeof obj.status !== "string" || typeof obj.model_count !== "number") {
    throw new MalformedResponseError("health response malformed");
  }
  return { status: obj.status, model_count: obj.model_count };
}

// ---------------------------------------------------------------------------
// Client

/** Minimal structural view of fetch, so tests can inject a fake. */
export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ status: number; text(): Promise<string> }>;

/**
 * Client for one assessment service. `baseUrl` is the single place the
 * service location is configured; everything else takes it from here.
 */
export class LabClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request(path: string, payload?: unknown): Promise<unknown> {
    const url = this.baseUrl.replace(/\/$/, "") + path;
    let status: number;
    let bodyText: string;
    try {
      const init =
        payload === undefined
          ? undefined
          : {
              method: "POST",
              headers: { "Content-Type": "application/json" },
              body: JSON.stringify(payload),
            };
      const resp = await this.fetchFn(url, init);
      status = resp.status;
      bodyText = await resp.text();
    } catch (err) {
      throw new ServiceUnreachableError(`cannot reach service at ${this.baseUrl}: ${err}`);
    }
    let body: unknown;
    try {
      body = JSON.parse(bodyText);
    } catch {
      throw new MalformedResponseError(`service sent unparseable JSON (status ${status})`);
    }
    if (status >= 200 && status < 300) return body;
    const errObj = typeof body === "object" && body !== null ? (body as Record<string, unknown>) : {};
    const code = typeof errObj.error_code === "string" ? errObj.error_code : "unknown_error";
    const message = typeof errObj.message === "string" ? errObj.message : `HTTP ${status}`;
    throw new ServiceApiError(status, code, message);
  }

  async health(): Promise<HealthResponse> {
    return parseHealthResponse(await this.request("/health"));
  }

  async predict(word: string, features: number[], requestId?: string): Promise<number> {
    const body = await this.request("/predict", {
      word,
      features,
      ...(requestId !== undefined ? { request_id: requestId } : {}),
    });
    const obj = asObject(body, "prediction response");
    if (typeof obj.probability !== "number") {
      throw new MalformedResponseError("prediction response missing probability");
    }
    return obj.probability;
  }

  async assess(
    phrase: string,
    frames: FramesPayload,
    requestId?: string,
  ): Promise<AssessResponse> {
    const body = await this.request("/assess", {
      phrase,
      frames,
      ...(requestId !== undefined ? { request_id: requestId } : {}),
    });
    return parseAssessResponse(body);
  }

  async synth(
    word: string,
    opts: { distortion?: DistortionRequest; noiseLevel?: number; seed?: number; requestId?: string } = {},
  ): Promise<SynthResponse> {
    const body = await this.request("/synth", {
      word,
      ...(opts.distortion !== undefined ? { distortion: opts.distortion } : {}),
      ...(opts.noiseLevel !== undefined ? { noise_level: opts.noiseLevel } : {}),
      ...(opts.seed !== undefined ? { seed: opts.seed } : {}),
      ...(opts.requestId !== undefined ? { request_id: opts.requestId } : {}),
    });
    return parseSynthResponse(body);
  }
}
