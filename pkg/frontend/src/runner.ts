/**
 * Session orchestration: pull the next trial, fetch and decode both
 * interval stacks while the fixation spot is up, walk the phase
 * machine against the presenter, post the response, repeat until the
 * server reports the session done.
 *
 * Stimulus fetching overlaps only the fixation display, never
 * playback, so presentation scheduling stays undisturbed.  A conflict
 * on post means the server already holds a response for the trial
 * (for example after a reload raced a slow request); the server's
 * record wins and the runner just moves on.
 */

import {
  ConflictError,
  isDone,
  type FrameStack,
  type ResponsePayload,
  type SessionDone,
  type SessionResults,
  type TrialPayload,
} from "./api.js";
import type { Presenter } from "./player.js";
import {
  advancePhase,
  buildResponse,
  handleKey,
  startTrial,
} from "./state.js";

/** Fixation-spot duration before the first interval; configurable. */
export const DEFAULT_FIXATION_MS = 500;

/** The slice of the service client the runner depends on. */
export interface SessionApi {
  nextTrial(sessionId: string): Promise<TrialPayload | SessionDone>;
  fetchStack(stimulusId: string): Promise<FrameStack>;
  postResponse(sessionId: string, payload: ResponsePayload): Promise<void>;
  results(sessionId: string): Promise<SessionResults>;
}

export interface RunnerHooks {
  fixationMs?: number;
  /** Called after each posted (or conflicted) trial. */
  onProgress?(answered: number, total: number): void;
  /** Stop after this many trials even if the session continues. */
  maxTrials?: number;
}

export type TrialOutcome = "answered" | "already-answered";

export async function runOneTrial(
  api: SessionApi,
  sessionId: string,
  trial: TrialPayload,
  stacks: [FrameStack, FrameStack],
  presenter: Presenter,
  fixationOnsetMs?: number,
): Promise<TrialOutcome> {
  let state = startTrial(trial, fixationOnsetMs ?? presenter.now());
  state = advancePhase(state, presenter.now()); // interval1
  await presenter.playStack(stacks[0], trial.stimulus_ms);
  state = advancePhase(state, presenter.now()); // isi
  await presenter.blank(trial.isi_ms);
  state = advancePhase(state, presenter.now()); // interval2
  await presenter.playStack(stacks[1], trial.stimulus_ms);
  state = advancePhase(state, presenter.now()); // response
  const pick = await presenter.awaitChoice();
  state = handleKey(state, pick.choice === "first" ? "1" : "2", pick.atMs);

  try {
    await api.postResponse(sessionId, buildResponse(state));
  } catch (err) {
    if (err instanceof ConflictError) return "already-answered";
    throw err;
  }
  return "answered";
}

/**
 * Drive a session to completion (or to hooks.maxTrials); returns the
 * number of responses this call posted.  Always consults the server
 * for the next trial, so a reloaded page resumes exactly where the
 * stored session stands.
 */
export async function runSession(
  api: SessionApi,
  sessionId: string,
  presenter: Presenter,
  hooks: RunnerHooks = {},
): Promise<number> {
  const fixationMs = hooks.fixationMs ?? DEFAULT_FIXATION_MS;
  let posted = 0;
  for (;;) {
    if (hooks.maxTrials !== undefined && posted >= hooks.maxTrials) {
      return posted;
    }
    const trial = await api.nextTrial(sessionId);
    if (isDone(trial)) return posted;

    // decode both intervals behind the fixation spot; playback starts
    // only when the frames are in memory
    const fixationOnset = presenter.now();
    const stacksPromise = Promise.all([
      api.fetchStack(trial.stim_a),
      api.fetchStack(trial.stim_b),
    ]);
    const [stacks] = await Promise.all([
      stacksPromise,
      presenter.fixation(fixationMs),
    ]);

    const outcome = await runOneTrial(
      api,
      sessionId,
      trial,
      stacks as [FrameStack, FrameStack],
      presenter,
      fixationOnset,
    );
    if (outcome === "answered") posted += 1;

    if (hooks.onProgress) {
      const results = await api.results(sessionId);
      hooks.onProgress(results.n_answered, results.n_trials);
    }
  }
}
