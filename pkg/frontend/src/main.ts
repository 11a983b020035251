/**
 * Page bootstrap: session lifecycle, progress display, completion
 * screen.  The session id persists in localStorage so a reload
 * resumes at whatever trial the server reports next; the page shows
 * counts only and never which interval was objectively faster.
 */

import { ApiClient } from "./api.js";
import { CanvasPresenter } from "./player.js";
import { runSession } from "./runner.js";

const SESSION_KEY = "mclab-session-id";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function serviceBase(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("service") ?? "";
}

async function refreshProgress(
  api: ApiClient,
  sessionId: string,
): Promise<{ answered: number; total: number; done: boolean }> {
  const results = await api.results(sessionId);
  return {
    answered: results.n_answered,
    total: results.n_trials,
    done: results.status === "completed",
  };
}

function showProgress(answered: number, total: number): void {
  el<HTMLDivElement>("progress").textContent = `${answered}/${total}`;
}

function showCompletion(api: ApiClient, sessionId: string): void {
  el<HTMLDivElement>("instructions").textContent =
    "Session complete. Thank you!";
  const link = el<HTMLAnchorElement>("results-link");
  link.href = api.resultsUrl(sessionId);
  link.hidden = false;
}

async function start(): Promise<void> {
  const api = new ApiClient(serviceBase());
  const canvas = el<HTMLCanvasElement>("stimulus");
  const presenter = new CanvasPresenter(canvas);
  const button = el<HTMLButtonElement>("start");

  let sessionId = window.localStorage.getItem(SESSION_KEY);
  if (sessionId) {
    try {
      const progress = await refreshProgress(api, sessionId);
      showProgress(progress.answered, progress.total);
      if (progress.done) {
        showCompletion(api, sessionId);
        return;
      }
      button.textContent = "Resume session";
    } catch {
      // stale id (server reset); start fresh
      window.localStorage.removeItem(SESSION_KEY);
      sessionId = null;
    }
  }

  button.hidden = false;
  button.addEventListener("click", async () => {
    button.hidden = true;
    try {
      if (!sessionId) {
        sessionId = await api.createSession({});
        window.localStorage.setItem(SESSION_KEY, sessionId);
        const progress = await refreshProgress(api, sessionId);
        showProgress(progress.answered, progress.total);
      }
      el<HTMLDivElement>("instructions").textContent =
        "Which interval moved faster? Press 1 for the first, " +
        "2 for the second.";
      await runSession(api, sessionId, presenter, {
        onProgress: showProgress,
      });
      showCompletion(api, sessionId);
    } catch (err) {
      el<HTMLDivElement>("instructions").textContent =
        `Something went wrong: ${String(err)}. Reload to resume.`;
      button.hidden = false;
    }
  });
}

window.addEventListener("DOMContentLoaded", () => {
  void start();
});
