/**
 * @file test/live_loop.test.ts
 * @summary Scripted practice loop against a live service: build a small
 * corpus and word models with the backend CLI, start the HTTP service, then
 * run select word -> synthetic attempt -> feedback rendered -> second
 * attempt, asserting the append-only history and that every rendered number
 * is the service's own.
 */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { LabClient, ServiceApiError } from "../src/api";
import { Session } from "../src/session";
import { renderAssessment, renderHistory } from "../src/ui";

let workDir: string;
let serveChild: ChildProcess | null = null;
let baseUrl: string;
let words: string[] = [];

function run(args: string[]): string {
  const result = spawnSync("captkit", args, { cwd: workDir, encoding: "utf8" });
  if (result.status !== 0) {
    throw new Error(`captkit ${args[0]} failed: ${result.stderr || result.stdout}`);
  }
  return result.stdout;
}

async function startService(): Promise<string> {
  const child = spawn(
    "captkit",
    [
      "serve",
      "--manifest",
      join(workDir, "run", "models"),
      "--acoustic-model",
      join(workDir, "corpus", "acoustic.am"),
      "--port",
      "0",
    ],
    { cwd: workDir },
  );
  serveChild = child;
  return new Promise<string>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("service never announced its port")), 30_000);
    let seen = "";
    child.stdout?.on("data", (chunk: Buffer) => {
      seen += chunk.toString();
      const match = seen.match(/listening on (\d+\.\d+\.\d+\.\d+:\d+)/);
      if (match) {
        clearTimeout(timer);
        resolve(`http://${match[1]}`);
      }
    });
    child.on("error", (err) => {
      clearTimeout(timer);
      reject(err);
    });
    child.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`service exited early with code ${code}: ${seen}`));
    });
  });
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "lab-ui-loop-"));
  run([
    "synth",
    "--out", join(workDir, "corpus"),
    "--num-words", "3",
    "--recordings", "5",
    "--transcribers", "2",
    "--noise", "0.8",
    "--seed", "42",
  ]);
  const trainOut = run(["train", "--corpus", join(workDir, "corpus"), "--out", join(workDir, "run")]);
  words = [...trainOut.matchAll(/^(\S+) rows \d+ positive \d+$/gm)].map((m) => m[1]);
  expect(words.length).toBe(3);
  baseUrl = await startService();
});

afterAll(() => {
  serveChild?.kill();
  if (workDir) rmSync(workDir, { recursive: true, force: true });
});

describe("live practice loop", () => {
  it("reports a healthy service with one model per trained word", async () => {
    const client = new LabClient(baseUrl);
    const health = await client.health();
    expect(health.status).toBe("ok");
    expect(health.model_count).toBe(words.length);
  });

  it("runs select -> attempt -> feedback -> second attempt against the service", async () => {
    let networkCalls = 0;
    const client = new LabClient(baseUrl, (url, init) => {
      networkCalls += 1;
      return fetch(url, init);
    });
    const session = new Session(baseUrl);
    const word = words[0];
    session.selectPhrase(word);

    // First attempt: clean server-side synthesis, then assessment.
    expect(session.beginRequest()).toBe(true);
    const synth1 = await client.synth(word, { noiseLevel: 0.5, seed: 1, requestId: "loop-s1" });
    const assess1 = await client.assess(word, synth1.frames, "loop-a1");
    session.endRequest();
    const first = session.recordAttempt("synthetic", word, assess1);

    expect(synth1.request_id).toBe("loop-s1"); // echoed, not invented
    expect(assess1.request_id).toBe("loop-a1");
    expect(first.id).toBe(1);

    // Feedback rendered, every number the service's own.
    const feedbackHtml = renderAssessment({ response: assess1, mode: session.feedbackMode });
    expect(feedbackHtml).toContain(`data-request-id="loop-a1"`);
    for (const entry of assess1.words) {
      expect(feedbackHtml).toContain(`data-probability="${entry.probability}"`);
      expect(feedbackHtml).toContain(`data-ranking="${entry.feedback.ranking.join(" ")}"`);
      for (const gain of entry.feedback.gains_sum) {
        expect(feedbackHtml).toContain(`data-gain="${gain}"`);
      }
    }

    // Flavour toggle re-renders from the stored response: no extra requests.
    const callsBeforeToggle = networkCalls;
    session.setFeedbackMode("product");
    const productHtml = renderAssessment({
      response: session.lastAttempt!.response,
      mode: session.feedbackMode,
    });
    expect(productHtml).toContain('data-mode="product"');
    expect(networkCalls).toBe(callsBeforeToggle);
    session.setFeedbackMode("sum");

    // Second attempt: steer the synthesis toward a longer first phoneme.
    expect(session.beginRequest()).toBe(true);
    const synth2 = await client.synth(word, {
      distortion: { kind: "duration", position: 0, detail: "longer" },
      noiseLevel: 0.5,
      seed: 2,
      requestId: "loop-s2",
    });
    const assess2 = await client.assess(word, synth2.frames, "loop-a2");
    session.endRequest();
    const second = session.recordAttempt("synthetic", word, assess2);

    expect(second.id).toBe(2);
    expect(session.history.map((a) => a.id)).toEqual([1, 2]);
    expect(session.history.map((a) => a.requestId)).toEqual(["loop-a1", "loop-a2"]);

    // Both attempts visible in the rendered history.
    const historyHtml = renderHistory(session.history);
    expect(historyHtml).toContain('data-attempt-id="1"');
    expect(historyHtml).toContain('data-attempt-id="2"');
    expect(historyHtml).toContain(
      `${word} ${assess1.words[0].probability.toFixed(3)}`,
    );
    expect(historyHtml).toContain(
      `${word} ${assess2.words[0].probability.toFixed(3)}`,
    );

    // The probabilities are genuine model outputs, not display artifacts.
    for (const response of [assess1, assess2]) {
      expect(response.words[0].probability).toBeGreaterThan(0);
      expect(response.words[0].probability).toBeLessThan(1);
      expect(response.words[0].feedback.ranking.length).toBeGreaterThan(0);
    }
  });

  it("surfaces live service errors with their error codes", async () => {
    const client = new LabClient(baseUrl);
    const frames = { frame_rate: 65.0, dim: 13, data: [new Array<number>(13).fill(0)] };
    const err = await client.assess("notaword", frames).catch((e) => e);
    expect(err).toBeInstanceOf(ServiceApiError);
    expect(err.status).toBe(404);
    expect(err.errorCode).toBe("unknown_word");
  });
});
