/**
 * @file src/ui.ts
 * @summary Pure HTML renderers for the practice lab. Every function maps
 * state to a markup string with no DOM access and no service calls, so the
 * render contract is directly testable: probabilities, rankings, gains, and
 * duration directions always come verbatim from a stored service response,
 * never from client-side recomputation. Switching the feedback flavour is a
 * re-render of the same response under a different mode argument.
 *
 * @exports
 *   - renderAssessment / renderWordFeedback / renderHeatStrip — Feedback views
 *   - renderHistory / renderSettings / renderControls — Session chrome
 *   - renderErrorBanner / renderRetryPrompt / renderTooShort — Failure states
 */

import type { AssessResponse, WordAssessment } from "./api.js";
import type { Attempt, DistortionControls, FeedbackMode } from "./session.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

const DURATION_GLYPH: Record<string, string> = {
  longer: "▲",
  shorter: "▼",
  neutral: "·",
};

/**
 * Word probability as a horizontal bar. The exact service value rides along
 * in data-probability; the label shows it to three decimals.
 */
export function renderProbabilityBar(args: {
  word: string;
  probability: number;
  flagged: boolean;
}): string {
  const width = (args.probability * 100).toFixed(1);
  const classes = args.flagged ? "word-row worst" : "word-row";
  const flag = args.flagged ? '<span class="flag" title="needs work">&#9873;</span>' : "";
  return (
    `<div class="${classes}" data-word="${escapeHtml(args.word)}"` +
    ` data-probability="${args.probability}">` +
    `<span class="word-label">${escapeHtml(args.word)}</span>${flag}` +
    `<span class="bar"><span class="bar-fill" style="width:${width}%"></span></span>` +
    `<span class="prob-label">${args.probability.toFixed(3)}</span>` +
    `</div>`
  );
}

/**
 * Per-phoneme heat strip. Cell darkness is proportional to the improvement
 * gain of the selected flavour (negative gains render as zero heat), so the
 * first-ranked phoneme is darkest. The service ranking is carried verbatim
 * in data-ranking, and each cell keeps its raw gain in data-gain.
 */
export function renderHeatStrip(args: {
  assessment: WordAssessment;
  mode: FeedbackMode;
}): string {
  const fb = args.assessment.feedback;
  const gains = args.mode === "sum" ? fb.gains_sum : fb.gains_product;
  const positive = gains.map((g) => Math.max(g, 0));
  const top = Math.max(...positive, 0);
  const cells = gains
    .map((gain, i) => {
      const heat = top > 0 ? positive[i] / top : 0;
      const arrow = DURATION_GLYPH[fb.duration_direction[i]] ?? "?";
      return (
        `<span class="heat-cell" data-position="${i + 1}" data-gain="${gain}"` +
        ` data-direction="${escapeHtml(fb.duration_direction[i])}"` +
        ` style="--heat:${heat.toFixed(4)}">` +
        `<span class="pos">${i + 1}</span>` +
        `<span class="duration-arrow">${arrow}</span>` +
        `</span>`
      );
    })
    .join("");
  return (
    `<div class="heat-strip" data-mode="${args.mode}"` +
    ` data-ranking="${fb.ranking.join(" ")}">` +
    cells +
    `<span class="focus-order">focus: ${fb.ranking.join(" → ")}</span>` +
    `</div>`
  );
}

/** One word's full feedback: probability bar plus heat strip. */
export function renderWordFeedback(args: {
  assessment: WordAssessment;
  flagged: boolean;
  mode: FeedbackMode;
}): string {
  return (
    `<div class="word-feedback">` +
    renderProbabilityBar({
      word: args.assessment.word,
      probability: args.assessment.probability,
      flagged: args.flagged,
    }) +
    renderHeatStrip({ assessment: args.assessment, mode: args.mode }) +
    `</div>`
  );
}

/** A complete assessment response under the given feedback flavour. */
export function renderAssessment(args: { response: AssessResponse; mode: FeedbackMode }): string {
  const flagged = new Set(args.response.worst_words);
  const words = args.response.words
    .map((assessment, i) => renderWordFeedback({ assessment, flagged: flagged.has(i + 1), mode: args.mode }))
    .join("");
  return (
    `<section class="assessment" data-request-id="${escapeHtml(args.response.request_id)}"` +
    ` data-worst-words="${args.response.worst_words.join(" ")}">` +
    words +
    `</section>`
  );
}

/** Append-only attempt history, newest last. */
export function renderHistory(attempts: readonly Attempt[]): string {
  const rows = attempts
    .map((attempt) => {
      const probs = attempt.response.words
        .map((w) => `${escapeHtml(w.word)} ${w.probability.toFixed(3)}`)
        .join(", ");
      return (
        `<li class="attempt" data-attempt-id="${attempt.id}"` +
        ` data-source="${attempt.source}" data-request-id="${escapeHtml(attempt.requestId)}">` +
        `<span class="attempt-no">#${attempt.id}</span>` +
        `<span class="attempt-source">${attempt.source}</span>` +
        `<span class="attempt-phrase">${escapeHtml(attempt.phrase)}</span>` +
        `<span class="attempt-probs">${probs}</span>` +
        `</li>`
      );
    })
    .join("");
  return `<ol class="history">${rows}</ol>`;
}

/** Visible settings: service URL, pass threshold, and worst-word count k. */
export function renderSettings(args: {
  serviceUrl: string;
  threshold: number;
  feedbackK: number;
  mode: FeedbackMode;
}): string {
  const sumChecked = args.mode === "sum" ? " checked" : "";
  const productChecked = args.mode === "product" ? " checked" : "";
  return (
    `<form class="settings">` +
    `<label>service URL <input name="service-url" value="${escapeHtml(args.serviceUrl)}"></label>` +
    `<label>pass threshold <input name="threshold" type="number" step="0.05"` +
    ` min="0" max="1" value="${args.threshold}"></label>` +
    `<label>worst words shown (k) <input name="feedback-k" type="number" min="0"` +
    ` value="${args.feedbackK}"></label>` +
    `<fieldset class="mode-toggle">` +
    `<label><input type="radio" name="mode" value="sum"${sumChecked}> additive gains</label>` +
    `<label><input type="radio" name="mode" value="product"${productChecked}> multiplicative gains</label>` +
    `</fieldset>` +
    `</form>`
  );
}

/**
 * Distortion control panel for server-side synthesis. Position options
 * outside the selected word's phoneme range are rendered disabled; insertion
 * allows one extra slot (after the last phoneme).
 */
export function renderControls(args: {
  controls: DistortionControls;
  phonemeCount: number | null;
}): string {
  const kinds: DistortionControls["kind"][] = [
    "clean",
    "substitution",
    "deletion",
    "insertion",
    "duration",
  ];
  const kindOptions = kinds
    .map((kind) => {
      const selected = kind === args.controls.kind ? " selected" : "";
      return `<option value="${kind}"${selected}>${kind}</option>`;
    })
    .join("");
  const maxSlots = args.phonemeCount === null ? 0 : args.phonemeCount + 1;
  const limit =
    args.phonemeCount === null
      ? 0
      : args.controls.kind === "insertion"
        ? args.phonemeCount + 1
        : args.phonemeCount;
  const positionOptions = Array.from({ length: maxSlots }, (_, i) => {
    const selected = i === args.controls.position ? " selected" : "";
    const disabled = i >= limit ? " disabled" : "";
    return `<option value="${i}"${selected}${disabled}>${i}</option>`;
  }).join("");
  return (
    `<form class="distortion-controls">` +
    `<label>kind <select name="kind">${kindOptions}</select></label>` +
    `<label>position <select name="position">${positionOptions}</select></label>` +
    `<label>detail <input name="detail" value="${escapeHtml(args.controls.detail)}"></label>` +
    `<label>noise <input name="noise" type="number" step="0.1" min="0" max="4"` +
    ` value="${args.controls.noiseLevel}"></label>` +
    `<label>seed <input name="seed" type="number" min="0" value="${args.controls.seed}"></label>` +
    `<button type="submit" name="steer">synthesize &amp; assess</button>` +
    `</form>`
  );
}

/** Error banner for a service error body; the session stays untouched. */
export function renderErrorBanner(args: { errorCode: string; message: string }): string {
  return (
    `<div class="banner error" data-error-code="${escapeHtml(args.errorCode)}">` +
    `<strong>${escapeHtml(args.errorCode)}</strong> ${escapeHtml(args.message)}` +
    `</div>`
  );
}

/** Unreachable-service banner with a retry affordance. */
export function renderRetryPrompt(message: string): string {
  return (
    `<div class="banner unreachable">${escapeHtml(message)}` +
    ` <button type="button" name="retry">retry</button></div>`
  );
}

/** Shown when a capture is too short to featurize; no request was sent. */
export function renderTooShort(windowMs: number): string {
  return (
    `<div class="banner too-short">recording shorter than one ${windowMs} ms` +
    ` analysis window &mdash; nothing was submitted</div>`
  );
}
