/**
 * Typed client for the scenario service. The fetch function is
 * injectable so tests (and the recorded-fixture mode) can run with no
 * network at all.
 */

import type {
  ApiErrorBody,
  HistoryResponse,
  NetworkSnapshot,
  ScenarioRequest,
  ScenarioResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (response.ok) {
    return (await response.json()) as T;
  }
  let body: ApiErrorBody = { code: `http_${response.status}`, message: response.statusText };
  try {
    body = (await response.json()) as ApiErrorBody;
  } catch {
    // non-JSON error body: keep the status-derived fallback
  }
  throw new ApiError(response.status, body.code, body.message);
}

export class ScenarioApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  getNetwork(): Promise<NetworkSnapshot> {
    return this.fetchFn(`${this.baseUrl}/network`).then((r) => parseOrThrow<NetworkSnapshot>(r));
  }

  getHistory(segment: string, from?: string, to?: string): Promise<HistoryResponse> {
    const params = new URLSearchParams({ segment });
    if (from) params.set("from", from);
    if (to) params.set("to", to);
    return this.fetchFn(`${this.baseUrl}/history?${params.toString()}`).then((r) =>
      parseOrThrow<HistoryResponse>(r),
    );
  }

  postScenario(request: ScenarioRequest): Promise<ScenarioResponse> {
    return this.fetchFn(`${this.baseUrl}/scenario`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    }).then((r) => parseOrThrow<ScenarioResponse>(r));
  }
}

/**
 * Offline mode: serves pre-recorded responses. Scenario lookups are
 * keyed by (event count, horizon) which is enough for demo flows.
 */
export class FixtureApi {
  constructor(
    private readonly network: NetworkSnapshot,
    private readonly histories: Record<string, HistoryResponse>,
    private readonly scenarios: { empty: ScenarioResponse; oneEvent: ScenarioResponse },
  ) {}

  getNetwork(): Promise<NetworkSnapshot> {
    return Promise.resolve(this.network);
  }

  getHistory(segment: string): Promise<HistoryResponse> {
    const hit = this.histories[segment];
    return hit
      ? Promise.resolve(hit)
      : Promise.reject(new ApiError(422, "bad_request", `no fixture for segment '${segment}'`));
  }

  postScenario(request: ScenarioRequest): Promise<ScenarioResponse> {
    return Promise.resolve(
      request.injected_events.length === 0 ? this.scenarios.empty : this.scenarios.oneEvent,
    );
  }
}

export type AnyApi = ScenarioApi | FixtureApi;
