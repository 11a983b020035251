/**
 * End-to-end: a real `mclab serve` process, driven through the public
 * HTTP API exactly as the browser runner drives it, including a
 * mid-session reload, playback-overrun flagging, and a final check
 * that the command line fit consumes the persisted session.
 */

import { execFile, spawn, type ChildProcess } from "node:child_process";
import { mkdtemp, readFile, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { runSession } from "../src/runner.js";
import { VirtualPresenter } from "./virtual.js";

const execFileP = promisify(execFile);

const PORT = 8800 + (process.pid % 100);
const BASE = `http://127.0.0.1:${PORT}`;

let cacheDir: string;
let server: ChildProcess | undefined;
let serverLog = "";
let sessionId: string;

async function sleep(ms: number): Promise<void> {
  await new Promise((resolve) => setTimeout(resolve, ms));
}

async function waitForServer(): Promise<void> {
  for (let i = 0; i < 120; i += 1) {
    try {
      // any HTTP answer at all means the service is up
      await fetch(`${BASE}/api/sessions/nonexistent/results`);
      return;
    } catch {
      await sleep(250);
    }
  }
  throw new Error(`service never came up on ${BASE}\n${serverLog}`);
}

beforeAll(async () => {
  cacheDir = await mkdtemp(join(tmpdir(), "mclab-e2e-"));
  const configPath = join(cacheDir, "app.json");
  // a small grid keeps on-demand rendering fast; 250 ms at 60 fps
  // gives 15 frames per stimulus
  await writeFile(
    configPath,
    JSON.stringify({ grid: { nx: 32, ny: 32, ppd: 16.0, fps: 60.0 } }),
  );
  server = spawn(
    "mclab",
    [
      "serve",
      "--port",
      String(PORT),
      "--config",
      configPath,
      "--cache",
      cacheDir,
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  server.stdout?.on("data", (chunk) => {
    serverLog += String(chunk);
  });
  server.stderr?.on("data", (chunk) => {
    serverLog += String(chunk);
  });
  await waitForServer();
});

afterAll(async () => {
  if (!server) return;
  const exited = new Promise((resolve) => server?.once("exit", resolve));
  server.kill("SIGTERM");
  await Promise.race([exited, sleep(5000)]);
  if (server.exitCode === null) server.kill("SIGKILL");
});

describe("browser runner against a live service", () => {
  it("completes a session across a reload, flagging overrun playback", async () => {
    const api = new ApiClient(BASE);
    sessionId = await api.createSession({ seed: 777001, reps_per_cell: 1 });

    const first = await runSession(api, sessionId, new VirtualPresenter(), {
      maxTrials: 3,
    });
    expect(first).toBe(3);
    let results = await api.results(sessionId);
    expect(results.status).toBe("active");
    expect(results.n_answered).toBe(3);

    // "reload": fresh client and presenter against the same session.
    // Its first two trials (t0003, t0004 overall) overrun playback by
    // half the stimulus duration, so the runner must flag them.
    const resumed = new ApiClient(BASE);
    const second = await runSession(
      resumed,
      sessionId,
      new VirtualPresenter(new Set([0, 1])),
    );
    expect(second).toBe(22);

    results = await resumed.results(sessionId);
    expect(results.status).toBe("completed");
    expect(results.n_trials).toBe(25);
    expect(results.n_answered).toBe(25);
    expect(results.aggregate.length).toBeGreaterThan(0);
    expect(results.fit).toBeDefined();
  });

  it("persists every response with its timing audit", async () => {
    const raw = await readFile(
      join(cacheDir, "sessions", `${sessionId}.jsonl`),
      "utf8",
    );
    const lines = raw.trim().split("\n");
    expect(lines).toHaveLength(26);

    const trials = lines.slice(1).map((line) => JSON.parse(line));
    expect(trials.map((t) => t.trial_id)).toEqual(
      Array.from({ length: 25 }, (_, i) => `t${String(i).padStart(4, "0")}`),
    );
    for (const trial of trials) {
      expect(["first", "second"]).toContain(trial.response);
      expect(typeof trial.response_time_ms).toBe("number");
      expect(trial.presented_ms).toHaveLength(6);
    }
    const flagged = trials.filter((t) => t.flagged).map((t) => t.trial_id);
    expect(flagged).toEqual(["t0003", "t0004"]);
  });

  it("feeds the command line fit, which drops the flagged trials", async () => {
    const outDir = join(cacheDir, "fit-out");
    await execFileP("mclab", [
      "fit",
      "--sessions",
      join(cacheDir, "sessions", `${sessionId}.jsonl`),
      "--out",
      outDir,
    ]);

    const report = JSON.parse(
      await readFile(join(outDir, "fit.json"), "utf8"),
    );
    expect(report.n_sessions).toBe(1);
    expect(report.conditions).toHaveLength(5);
    expect(report.observers).toHaveLength(1);
    const kept = report.conditions.reduce(
      (acc: number, c: { n_trials: number }) => acc + c.n_trials,
      0,
    );
    expect(kept).toBe(23);
  });
});
