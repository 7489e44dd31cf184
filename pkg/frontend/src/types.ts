/** Shapes of the RSU query/observe endpoints the window consumes. */

export interface AlertView {
  alert_id: string;
  origin: string;
  hazard_label: string;
  evidence: string;
  timestamp_ms: number;
  received_at_ms: number;
}

export interface AlertsSnapshot {
  rsu_id: string;
  kind: "alerts";
  alerts: AlertView[];
}

export interface OutputView {
  segment_id: string;
  narration_text: string;
  reasoning_text: string;
  prompt_text: string;
  backend_latency_ms: number;
  ok: boolean;
  narration_value: number | null;
  reasoning_value: number | null;
}

export interface LatestSnapshot {
  rsu_id: string;
  kind: "latest";
  output: OutputView | null;
  alert_count: number;
  pending_observations: number;
}

export type ObservationCategory = "environment" | "agent" | "motion";

export interface ObservationForm {
  category: ObservationCategory | "";
  text: string;
  reporter?: string;
}

export interface ObservationAck {
  observation_id: string;
  received_at_ms: number;
}

export type ConnectionStatus = "connected" | "disconnected" | "idle";
