/**
 * Pure trial state machine.
 *
 * Phases advance strictly in order: fixation, interval1, isi,
 * interval2, response, done.  Timer-driven phases move through
 * advancePhase; the response phase exits only through a "1" or "2"
 * keypress in handleKey, and keys in any other phase are ignored.
 * Every phase entry stamps a presentation timestamp so measured
 * interval durations ship with the posted response, flagged when they
 * deviate from the nominal stimulus duration by more than the
 * tolerance.
 */

import type { ResponsePayload, TrialPayload } from "./api.js";

export type Phase =
  | "fixation"
  | "interval1"
  | "isi"
  | "interval2"
  | "response"
  | "done";

export type Choice = "first" | "second";

export const PHASE_ORDER: readonly Phase[] = [
  "fixation",
  "interval1",
  "isi",
  "interval2",
  "response",
  "done",
];

/** Measured interval deviation beyond this fraction flags the trial. */
export const TIMING_TOLERANCE = 0.2;

export interface TrialState {
  readonly trial: TrialPayload;
  readonly phase: Phase;
  /** Onset timestamp of each phase entered so far, in phase order. */
  readonly onsetsMs: readonly number[];
  readonly choice: Choice | null;
  readonly choiceAtMs: number | null;
}

export function startTrial(trial: TrialPayload, nowMs: number): TrialState {
  return {
    trial,
    phase: "fixation",
    onsetsMs: [nowMs],
    choice: null,
    choiceAtMs: null,
  };
}

/**
 * Enter the next timer-driven phase.  The response phase cannot be
 * left this way: only a choice keypress completes a trial.
 */
export function advancePhase(state: TrialState, nowMs: number): TrialState {
  if (state.phase === "done") {
    throw new Error("trial is already done");
  }
  if (state.phase === "response") {
    throw new Error("the response phase exits only through a choice");
  }
  const next = PHASE_ORDER[PHASE_ORDER.indexOf(state.phase) + 1];
  return {
    ...state,
    phase: next,
    onsetsMs: [...state.onsetsMs, nowMs],
  };
}

/**
 * Feed one keypress.  Outside the response phase, or for any key other
 * than "1" or "2", the state is returned unchanged.
 */
export function handleKey(
  state: TrialState,
  key: string,
  nowMs: number,
): TrialState {
  if (state.phase !== "response") return state;
  if (key !== "1" && key !== "2") return state;
  return {
    ...state,
    phase: "done",
    onsetsMs: [...state.onsetsMs, nowMs],
    choice: key === "1" ? "first" : "second",
    choiceAtMs: nowMs,
  };
}

/** Measured durations of the two stimulus intervals, in ms. */
export function measuredIntervalsMs(
  state: TrialState,
): [number, number] {
  if (state.onsetsMs.length < 5) {
    throw new Error("both intervals must have completed");
  }
  const [, i1, isi, i2, resp] = state.onsetsMs;
  return [isi - i1, resp - i2];
}

/** True when either interval missed its nominal duration badly. */
export function isFlagged(
  state: TrialState,
  tolerance: number = TIMING_TOLERANCE,
): boolean {
  const nominal = state.trial.stimulus_ms;
  return measuredIntervalsMs(state).some(
    (ms) => Math.abs(ms - nominal) / nominal > tolerance,
  );
}

/** The payload to post for a completed trial. */
export function buildResponse(state: TrialState): ResponsePayload {
  if (state.phase !== "done" || state.choice === null ||
      state.choiceAtMs === null) {
    throw new Error("the trial has no choice to post yet");
  }
  const responseOnset = state.onsetsMs[4];
  return {
    trial_id: state.trial.trial_id,
    choice: state.choice,
    rt_ms: state.choiceAtMs - responseOnset,
    flagged: isFlagged(state),
    presented_ms: [...state.onsetsMs],
  };
}
