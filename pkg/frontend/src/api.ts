/**
 * Typed client for the experiment service API.
 *
 * Every method maps to one endpoint; errors carry the HTTP status so
 * callers can distinguish a conflict (the server already holds a
 * response for the trial) from a missing resource or a bad request.
 */

export interface TrialPayload {
  trial_id: string;
  stim_a: string;
  stim_b: string;
  stimulus_ms: number;
  isi_ms: number;
}

export interface SessionDone {
  done: true;
}

export interface StimulusMeta {
  width: number;
  height: number;
  n_frames: number;
  fps: number;
  quantization: { offset: number; gain: number; sigma_i: number };
}

/** Decoded stimulus: 8-bit gray, frame-major then row-major. */
export interface FrameStack {
  width: number;
  height: number;
  nFrames: number;
  fps: number;
  data: Uint8Array;
}

export interface ResponsePayload {
  trial_id: string;
  choice: "first" | "second";
  rt_ms: number;
  flagged: boolean;
  presented_ms: number[];
}

export interface SessionResults {
  session_id: string;
  status: string;
  n_trials: number;
  n_answered: number;
  aggregate: unknown[];
  fit?: unknown;
}

export class ApiError extends Error {
  constructor(public readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

/** The trial already has a response; the server's record wins. */
export class ConflictError extends ApiError {
  constructor(message: string) {
    super(409, message);
    this.name = "ConflictError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return;
  let detail = res.statusText;
  try {
    const body = (await res.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    // no JSON body; keep the status text
  }
  if (res.status === 409) throw new ConflictError(detail);
  throw new ApiError(res.status, detail);
}

export class ApiClient {
  private readonly fetchFn: FetchLike;

  constructor(
    public readonly baseUrl: string,
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.url(path));
    await raiseForStatus(res);
    return (await res.json()) as T;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const res = await this.fetchFn(this.url(path), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    await raiseForStatus(res);
    return (await res.json()) as T;
  }

  async createSession(
    overrides: Record<string, unknown> = {},
  ): Promise<string> {
    const body = await this.postJson<{ session_id: string }>(
      "/api/sessions",
      overrides,
    );
    return body.session_id;
  }

  nextTrial(sessionId: string): Promise<TrialPayload | SessionDone> {
    return this.getJson(`/api/sessions/${sessionId}/trials/next`);
  }

  stimulusMeta(stimulusId: string): Promise<StimulusMeta> {
    return this.getJson(`/api/stimuli/${stimulusId}/meta`);
  }

  async stimulusFrames(stimulusId: string): Promise<Uint8Array> {
    const res = await this.fetchFn(
      this.url(`/api/stimuli/${stimulusId}/frames`),
    );
    await raiseForStatus(res);
    return new Uint8Array(await res.arrayBuffer());
  }

  /** Meta plus frames, with the byte count checked against the meta. */
  async fetchStack(stimulusId: string): Promise<FrameStack> {
    const [meta, data] = await Promise.all([
      this.stimulusMeta(stimulusId),
      this.stimulusFrames(stimulusId),
    ]);
    const expected = meta.width * meta.height * meta.n_frames;
    if (data.length !== expected) {
      throw new ApiError(
        0,
        `stimulus ${stimulusId}: got ${data.length} bytes, ` +
          `expected ${expected}`,
      );
    }
    return {
      width: meta.width,
      height: meta.height,
      nFrames: meta.n_frames,
      fps: meta.fps,
      data,
    };
  }

  async postResponse(
    sessionId: string,
    payload: ResponsePayload,
  ): Promise<void> {
    await this.postJson(`/api/sessions/${sessionId}/responses`, payload);
  }

  results(sessionId: string): Promise<SessionResults> {
    return this.getJson(`/api/sessions/${sessionId}/results`);
  }

  resultsUrl(sessionId: string): string {
    return this.url(`/api/sessions/${sessionId}/results`);
  }
}

export function isDone(
  trial: TrialPayload | SessionDone,
): trial is SessionDone {
  return (trial as SessionDone).done === true;
}
