/**
 * Scripted full session against the real service: 100 rounds through the
 * same client and view-model the browser uses, then survey submission,
 * then server-side log validation through the analysis pipeline.
 */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readdirSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { renderRound } from "../src/render.js";
import type { RoundView } from "../src/types.js";
import { buildRoundScreen, withReveal } from "../src/viewmodel.js";

const PYTHON = process.env.PYTHON ?? "python3";

let child: ChildProcess | null = null;
let lineage = "";
let api: ApiClient;

function startService(): Promise<string> {
  lineage = mkdtempSync(join(tmpdir(), "routesignal-e2e-"));
  child = spawn(PYTHON, ["-u", "-m", "routesignal.cli", "serve", "--port", "0",
                         "--lineage", lineage], {
    stdio: ["ignore", "pipe", "pipe"],
  });
  return new Promise((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("service did not start")), 20_000);
    let buffer = "";
    child!.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(/http:\/\/127\.0\.0\.1:(\d+)/);
      if (match) {
        clearTimeout(timer);
        resolve(`http://127.0.0.1:${match[1]}`);
      }
    });
    child!.stderr!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
    });
    child!.on("exit", () => {
      clearTimeout(timer);
      reject(new Error(`service exited early:\n${buffer}`));
    });
  });
}

beforeAll(async () => {
  const base = await startService();
  api = new ApiClient(base);
}, 30_000);

afterAll(() => {
  child?.kill();
});

describe("scripted participant session", () => {
  it("completes 100 rounds and the log passes the analysis pipeline", async () => {
    const config = await api.config();
    expect(config.rounds).toBe(100);

    const created = await api.createSession();
    const sessionId = created.session.id;
    let view: RoundView = created.view;

    // first-round rating renders 2.5
    let screen = buildRoundScreen(view);
    expect(screen.ratingText).toBe("2.5");
    expect(renderRound(screen)).toContain(">2.5<");
    expect(screen.routes.filter((r) => r.isRecommended)).toHaveLength(1);

    let followed = 0;
    for (let k = 1; k <= config.rounds; k++) {
      expect(view.k).toBe(k);
      screen = buildRoundScreen(view);
      expect(screen.selectEnabled).toBe(true);

      // follow the recommendation except every 7th round
      const deviate = k % 7 === 0;
      const route = deviate ? (view.recommended % config.routes) + 1 : view.recommended;
      if (!deviate) followed += 1;

      const reveal = await api.submitChoice(sessionId, route);
      expect(reveal.revealed.travel_times).toHaveLength(config.routes);
      const revealedScreen = buildRoundScreen(withReveal(view, reveal.revealed));
      expect(revealedScreen.reviewEnabled).toBe(true);
      expect(revealedScreen.routes[route - 1]!.revealedTime).not.toBeNull();

      const review = k === 1 ? 5.0 : k % 2 === 0 ? 4.0 : 5.0;
      const next = await api.submitReview(sessionId, review);
      if (k < config.rounds) {
        expect(next.view).toBeDefined();
        view = next.view!;
        if (k === 1) {
          // post-review rating renders 3.8 (3.75 shown to the tenth)
          const nextScreen = buildRoundScreen(view);
          expect(nextScreen.ratingText).toBe("3.8");
          expect(renderRound(nextScreen)).toContain(">3.8<");
        }
      } else {
        expect(next.summary).toBeDefined();
        expect(next.summary!.phase).toBe("finished");
        expect(next.summary!.rounds).toBe(100);
        expect(next.summary!.follow_count).toBe(followed);
      }
    }

    // double submit after the session is finished is rejected as a conflict
    await expect(api.submitChoice(sessionId, 1)).rejects.toMatchObject({
      status: 409,
    } satisfies Partial<ApiError>);

    // survey: strategy (b) makes the threshold follow-up required
    await expect(
      api.submitSurvey(sessionId, {
        1: 5, 2: 4, 3: 4, 4: 5, 5: 3, 6: "b", 7: null, 8: "", 9: "",
      }),
    ).rejects.toMatchObject({ status: 400 });

    const stored = await api.submitSurvey(sessionId, {
      1: 5, 2: 4, 3: 4, 4: 5, 5: 3, 6: "b", 7: 4.2, 8: "clear interface", 9: "",
    });
    expect(stored.stored).toContain("survey");

    // server-side log exists, passes schema validation, and the full
    // hypothesis report runs on it (analyze exits 0 only if both hold)
    const files = readdirSync(lineage);
    expect(files).toContain("session_001.jsonl");
    const analyze = spawnSync(
      PYTHON,
      ["-m", "routesignal.cli", "analyze", "all", "--logs", lineage],
      { encoding: "utf-8" },
    );
    expect(analyze.status, analyze.stderr).toBe(0);
    expect(analyze.stdout).toContain("h1");
  }, 120_000);

  it("rejects out-of-phase and malformed requests with conflict errors", async () => {
    const created = await api.createSession();
    const sid = created.session.id;
    await expect(api.submitReview(sid, 5)).rejects.toMatchObject({ status: 409 });
    await api.submitChoice(sid, created.view.recommended);
    await expect(api.submitChoice(sid, 1)).rejects.toMatchObject({ status: 409 });
    await expect(api.submitReview(sid, 99)).rejects.toMatchObject({ status: 400 });
    await api.submitReview(sid, 4.5);
  }, 30_000);
});
