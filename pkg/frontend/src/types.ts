/**
 * Wire types for the scenario service JSON API (X-API-Version: 1).
 * The UI performs no numeric modeling: every rendered number comes
 * from one of these response fields.
 */

export interface InjectedEvent {
  segment_id: string;
  start: string; // ISO-8601
  end: string;
}

export interface ScenarioRequest {
  injected_events: InjectedEvent[];
  anchor: string;
  horizon: number;
}

export interface SegmentSummary {
  segment_id: string;
  mean_delta_mph: number;
  max_slowdown_mph: number;
}

export interface ScenarioResponse {
  anchor: string;
  horizon: number;
  times: string[];
  segments: string[];
  baseline_mph: number[][];
  scenario_mph: number[][];
  delta_mph: number[][];
  segment_summary: SegmentSummary[];
  checkpoint_id: string;
  note: string;
}

export interface RecentSpeed {
  segment_id: string;
  speed_mph: number | null;
  time: string | null;
}

export interface NetworkEvent {
  segment_id: string;
  start: string;
  end: string;
}

export interface NetworkSnapshot {
  segments: string[];
  distances_miles: number[][];
  calendar: { start: string; step_minutes: number; length: number; end: string };
  history_steps: number;
  horizon_steps: number;
  recent_speeds: RecentSpeed[];
  events: NetworkEvent[];
  active_events: NetworkEvent[];
}

export interface HistoryResponse {
  segment_id: string;
  times: string[];
  speed_mph: (number | null)[];
  average_mph: number[];
}

export interface ApiErrorBody {
  code: string;
  message: string;
}

export const HORIZON_CHOICES = [3, 6, 12] as const;
export type HorizonChoice = (typeof HORIZON_CHOICES)[number];
