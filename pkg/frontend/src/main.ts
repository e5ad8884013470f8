/**
 * @file src/main.ts
 * @summary Browser entry point: wires the session state, service client,
 * recorder, and pure renderers to the DOM. All state transitions funnel
 * through one submit path that enforces the single in-flight request rule;
 * feedback-flavour toggles re-render the stored response without touching
 * the network.
 *
 * @exports
 *   - bootLab — Mounts the lab onto a document (called on DOMContentLoaded)
 */

import {
  LabClient,
  MalformedResponseError,
  ServiceApiError,
  ServiceUnreachableError,
  type FramesPayload,
} from "./api.js";
import { readWav, WavFormatError, DEFAULT_FRONTEND } from "./mfcc.js";
import {
  bufferToFrames,
  CaptureTooShortError,
  MicPermissionError,
  MicRecorder,
  resampleLinear,
  TARGET_SAMPLE_RATE,
  type CaptureSource,
} from "./recorder.js";
import { framesToPayload } from "./mfcc.js";
import { Session, type AttemptSource, type FeedbackMode } from "./session.js";
import {
  renderAssessment,
  renderControls,
  renderErrorBanner,
  renderHistory,
  renderRetryPrompt,
  renderSettings,
  renderTooShort,
} from "./ui.js";

/** MediaRecorder-based capture that decodes to raw channels on stop. */
class MediaRecorderSource implements CaptureSource {
  private recorder: MediaRecorder | null = null;
  private chunks: Blob[] = [];

  async start(stream: unknown): Promise<void> {
    this.chunks = [];
    this.recorder = new MediaRecorder(stream as MediaStream);
    this.recorder.ondataavailable = (event) => {
      if (event.data.size > 0) this.chunks.push(event.data);
    };
    this.recorder.start();
  }

  async stop(): Promise<{ channels: Float32Array[]; sampleRate: number }> {
    const recorder = this.recorder;
    if (!recorder) throw new Error("capture was never started");
    await new Promise<void>((resolve) => {
      recorder.onstop = () => resolve();
      recorder.stop();
    });
    recorder.stream.getTracks().forEach((track) => track.stop());
    this.recorder = null;
    const blob = new Blob(this.chunks);
    const ctx = new AudioContext();
    try {
      const audio = await ctx.decodeAudioData(await blob.arrayBuffer());
      const channels = Array.from({ length: audio.numberOfChannels }, (_, c) =>
        audio.getChannelData(c),
      );
      return { channels, sampleRate: audio.sampleRate };
    } finally {
      await ctx.close();
    }
  }
}

export function bootLab(doc: Document): void {
  const session = new Session();
  let client = new LabClient(session.serviceUrl);
  const recorder = new MicRecorder(navigator.mediaDevices, new MediaRecorderSource());

  const $ = (id: string): HTMLElement => {
    const el = doc.getElementById(id);
    if (!el) throw new Error(`missing #${id}`);
    return el;
  };
  const feedbackPane = $("feedback");
  const historyPane = $("history");
  const bannerPane = $("banner");
  const settingsPane = $("settings");
  const controlsPane = $("controls");
  const phraseInput = $("phrase") as HTMLInputElement;
  const statusEl = $("status");

  let phonemeCount: number | null = null;

  const redraw = (): void => {
    const last = session.lastAttempt;
    feedbackPane.innerHTML = last
      ? renderAssessment({ response: last.response, mode: session.feedbackMode })
      : "";
    historyPane.innerHTML = renderHistory(session.history);
    settingsPane.innerHTML = renderSettings({
      serviceUrl: session.serviceUrl,
      threshold: session.threshold,
      feedbackK: session.feedbackK,
      mode: session.feedbackMode,
    });
    controlsPane.innerHTML = renderControls({ controls: session.controls, phonemeCount });
    bindSettings();
    bindControls();
  };

  const showError = (err: unknown): void => {
    if (err instanceof ServiceUnreachableError) {
      bannerPane.innerHTML = renderRetryPrompt(err.message);
    } else if (err instanceof ServiceApiError) {
      bannerPane.innerHTML = renderErrorBanner({ errorCode: err.errorCode, message: err.message });
    } else if (err instanceof MalformedResponseError) {
      bannerPane.innerHTML = renderErrorBanner({
        errorCode: "malformed_response",
        message: err.message,
      });
    } else if (err instanceof CaptureTooShortError) {
      bannerPane.innerHTML = renderTooShort(DEFAULT_FRONTEND.windowMs);
    } else if (err instanceof MicPermissionError || err instanceof WavFormatError) {
      bannerPane.innerHTML = renderErrorBanner({
        errorCode: err instanceof MicPermissionError ? "mic_permission" : "bad_wav",
        message: err.message,
      });
    } else {
      bannerPane.innerHTML = renderErrorBanner({ errorCode: "client_error", message: String(err) });
    }
  };

  const submitAttempt = async (source: AttemptSource, frames: FramesPayload): Promise<void> => {
    const phrase = session.phrase ?? phraseInput.value.trim();
    if (!phrase) {
      showError(new Error("choose a word or phrase first"));
      return;
    }
    if (!session.beginRequest()) return; // one request at a time
    statusEl.textContent = "assessing…";
    try {
      const response = await client.assess(phrase, frames);
      session.recordAttempt(source, phrase, response);
      bannerPane.innerHTML = "";
      redraw();
    } catch (err) {
      showError(err);
    } finally {
      session.endRequest();
      statusEl.textContent = "";
    }
  };

  const bindSettings = (): void => {
    const form = settingsPane.querySelector("form");
    if (!form) return;
    form.addEventListener("change", (event) => {
      const input = event.target as HTMLInputElement;
      if (input.name === "service-url") {
        session.serviceUrl = input.value;
        client = new LabClient(session.serviceUrl);
      } else if (input.name === "threshold") {
        session.threshold = Number(input.value);
      } else if (input.name === "feedback-k") {
        session.feedbackK = Number(input.value);
      } else if (input.name === "mode") {
        session.setFeedbackMode(input.value as FeedbackMode);
        redraw(); // client-side re-render; no service call
      }
    });
  };

  const bindControls = (): void => {
    const form = controlsPane.querySelector("form");
    if (!form) return;
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const data = new FormData(form as HTMLFormElement);
      session.setControls({
        kind: String(data.get("kind")) as Session["controls"]["kind"],
        position: Number(data.get("position")),
        detail: String(data.get("detail") ?? ""),
        noiseLevel: Number(data.get("noise")),
        seed: Number(data.get("seed")),
      });
      void steer();
    });
  };

  const steer = async (): Promise<void> => {
    const phrase = session.phrase ?? phraseInput.value.trim();
    if (!phrase) {
      showError(new Error("choose a word first"));
      return;
    }
    if (!session.beginRequest()) return;
    statusEl.textContent = "synthesizing…";
    try {
      const c = session.controls;
      const synth = await client.synth(phrase, {
        distortion:
          c.kind === "clean"
            ? { kind: "clean" }
            : { kind: c.kind, position: c.position, detail: c.detail },
        noiseLevel: c.noiseLevel,
        seed: c.seed,
      });
      session.endRequest(); // synth finished; assess claims the slot next
      await submitAttemptFromSynth(synth.frames);
    } catch (err) {
      session.endRequest();
      showError(err);
    } finally {
      statusEl.textContent = "";
    }
  };

  const submitAttemptFromSynth = async (frames: FramesPayload): Promise<void> =>
    submitAttempt("synthetic", frames);

  $("select-phrase").addEventListener("click", () => {
    session.selectPhrase(phraseInput.value.trim());
    phonemeCount = session.lastAttempt?.response.words[0]?.feedback.ranking.length ?? phonemeCount;
    redraw();
  });

  $("record").addEventListener("click", async () => {
    try {
      await recorder.start();
      statusEl.textContent = "recording…";
    } catch (err) {
      showError(err);
    }
  });

  $("stop").addEventListener("click", async () => {
    try {
      const buf = await recorder.stop();
      const frames = framesToPayload(bufferToFrames(buf));
      await submitAttempt("mic", frames);
    } catch (err) {
      showError(err);
    }
  });

  ($("upload") as HTMLInputElement).addEventListener("change", async (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    try {
      const buf = readWav(await file.arrayBuffer());
      const conditioned =
        buf.sampleRate === TARGET_SAMPLE_RATE
          ? buf
          : {
              samples: resampleLinear(buf.samples, buf.sampleRate, TARGET_SAMPLE_RATE),
              sampleRate: TARGET_SAMPLE_RATE,
            };
      const frames = framesToPayload(bufferToFrames(conditioned));
      await submitAttempt("upload", frames);
    } catch (err) {
      showError(err);
    } finally {
      input.value = "";
    }
  });

  redraw();
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", () => bootLab(document));
}
