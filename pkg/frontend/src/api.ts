/** Typed client for the listening-test REST API.
 *
 * Every call goes through one Transport interface so the UI state machine
 * can be driven by a fake in tests. httpTransport is the real thing.
 */

export interface SessionRequest {
  n_items: number;
  snr_db?: number;
  hl_sim?: boolean;
  seed?: number;
}

export interface SessionCreated {
  session_id: string;
  n_items: number;
  snr_db: number;
}

export interface TrialOptions {
  trial: number;
  total: number;
  option_a: string;
  option_b: string;
}

export interface ResponseBody {
  chosen: string;
  latency_ms?: number;
  replays: number;
}

export interface SessionResult {
  score_pct: number;
  nh_mean: number;
  hl_mean: number;
  category: string;
}

/** Either the index of the next unanswered trial or the final result. */
export type TrialOutcome = { next_trial: number } | { result: SessionResult };

export interface HealthInfo {
  status: string;
  battery_items: number;
  snr_db: number;
  hl_sim_available: boolean;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface Transport {
  health(): Promise<HealthInfo>;
  createSession(req: SessionRequest): Promise<SessionCreated>;
  getTrial(sessionId: string, trial: number): Promise<TrialOptions>;
  getAudio(sessionId: string, trial: number): Promise<ArrayBuffer>;
  postResponse(
    sessionId: string,
    trial: number,
    body: ResponseBody,
  ): Promise<TrialOutcome>;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function errorMessage(res: Response): Promise<string> {
  try {
    const body = await res.json();
    if (typeof body.detail === "string") return body.detail;
    return JSON.stringify(body.detail ?? body);
  } catch {
    return res.statusText || `HTTP ${res.status}`;
  }
}

export function httpTransport(baseUrl: string, fetchFn?: FetchLike): Transport {
  const base = baseUrl.replace(/\/+$/, "");
  const doFetch: FetchLike = fetchFn ?? ((input, init) => fetch(input, init));

  async function request(path: string, init?: RequestInit): Promise<Response> {
    let res: Response;
    try {
      res = await doFetch(`${base}${path}`, init);
    } catch (e) {
      throw new ApiError(0, e instanceof Error ? e.message : "network failure");
    }
    if (!res.ok) throw new ApiError(res.status, await errorMessage(res));
    return res;
  }

  async function requestJson<T>(path: string, init?: RequestInit): Promise<T> {
    return (await request(path, init)).json() as Promise<T>;
  }

  return {
    health: () => requestJson<HealthInfo>("/api/health"),

    createSession: (req) =>
      requestJson<SessionCreated>("/api/sessions", {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(req),
      }),

    getTrial: (sessionId, trial) =>
      requestJson<TrialOptions>(`/api/sessions/${sessionId}/trials/${trial}`),

    getAudio: async (sessionId, trial) => {
      const res = await request(
        `/api/sessions/${sessionId}/trials/${trial}/audio`,
      );
      return res.arrayBuffer();
    },

    postResponse: (sessionId, trial, body) =>
      requestJson<TrialOutcome>(
        `/api/sessions/${sessionId}/trials/${trial}/response`,
        {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify(body),
        },
      ),
  };
}
