/**
 * Draft state and submission flow.
 *
 * The draft (pending injected events + anchor + horizon) stays editable
 * until submission and must survive a failed submission byte-for-byte.
 * At most one scenario request is in flight; responses for superseded
 * drafts are discarded by request id.
 */

import type { AnyApi } from "./api.js";
import { ApiError } from "./api.js";
import type {
  HorizonChoice,
  InjectedEvent,
  ScenarioRequest,
  ScenarioResponse,
} from "./types.js";
import { HORIZON_CHOICES } from "./types.js";

export interface ScenarioDraft {
  injected: InjectedEvent[];
  anchor: string;
  horizon: HorizonChoice;
}

export type SubmitResult =
  | { kind: "ok"; response: ScenarioResponse; requestId: number }
  | { kind: "error"; code: string; message: string; requestId: number }
  | { kind: "stale"; requestId: number };

export class DraftStore {
  private draft: ScenarioDraft;
  private lastIssued = 0;
  private latestCompleted = 0;

  constructor(anchor: string, horizon: HorizonChoice = 3) {
    this.draft = { injected: [], anchor, horizon };
  }

  get current(): ScenarioDraft {
    return this.draft;
  }

  serialize(): string {
    return JSON.stringify(this.draft);
  }

  addEvent(event: InjectedEvent): void {
    if (!event.segment_id || event.start >= event.end) {
      throw new Error("event needs a segment and start < end");
    }
    this.draft = { ...this.draft, injected: [...this.draft.injected, event] };
  }

  removeEvent(index: number): void {
    const injected = this.draft.injected.filter((_, i) => i !== index);
    this.draft = { ...this.draft, injected };
  }

  clearEvents(): void {
    this.draft = { ...this.draft, injected: [] };
  }

  setAnchor(anchor: string): void {
    this.draft = { ...this.draft, anchor };
  }

  setHorizon(horizon: number): void {
    if (!HORIZON_CHOICES.includes(horizon as HorizonChoice)) {
      throw new Error(`horizon must be one of ${HORIZON_CHOICES.join(", ")}`);
    }
    this.draft = { ...this.draft, horizon: horizon as HorizonChoice };
  }

  toRequest(): ScenarioRequest {
    return {
      injected_events: [...this.draft.injected],
      anchor: this.draft.anchor,
      horizon: this.draft.horizon,
    };
  }

  /**
   * POST the current draft. The draft itself is never mutated here, so
   * a failure leaves it exactly as the user built it.
   */
  async submit(api: AnyApi): Promise<SubmitResult> {
    const requestId = ++this.lastIssued;
    try {
      const response = await api.postScenario(this.toRequest());
      if (requestId < this.lastIssued || requestId <= this.latestCompleted) {
        return { kind: "stale", requestId };
      }
      this.latestCompleted = requestId;
      return { kind: "ok", response, requestId };
    } catch (error) {
      if (requestId < this.lastIssued) {
        return { kind: "stale", requestId };
      }
      if (error instanceof ApiError) {
        return { kind: "error", code: error.code, message: error.message, requestId };
      }
      return {
        kind: "error",
        code: "network_error",
        message: error instanceof Error ? error.message : String(error),
        requestId,
      };
    }
  }
}
