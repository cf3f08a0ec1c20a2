// Wire types for the session service JSON protocol.

export interface ParamSpec {
  name: string;
  kind: string;
  description: string;
  required: boolean;
  values?: string[];
}

export interface ApiSpec {
  name: string;
  description: string;
  parameters: ParamSpec[];
}

export interface Registry {
  apis: ApiSpec[];
  phases: string[];
  targets: string[];
}

export interface Observation {
  ok: boolean;
  api_name: string;
  message: string;
  state_after: string;
  data: Record<string, unknown> | null;
}

export type Outcome =
  | { variant: "call"; api_name: string; parameters: Record<string, unknown> }
  | { variant: "direct"; text: string }
  | { variant: "refusal"; text: string }
  | { variant: "malformed"; reason: string; detail: string };

export interface CycleStep {
  index: number;
  turn_text: string;
  thought: string;
  outcome: Outcome | null;
  observation_in: Observation | null;
  action_result: Observation | null;
  backend_error: string | null;
}

export interface RobotSnapshot {
  phase: string;
  scan_target: string | null;
  has_scan: boolean;
  segmentation: { area_fraction: number; hit: boolean; region_size: number } | null;
  fault_flags: string[];
  invocations: number;
  pending_faults: unknown[];
}

export interface StepEvent {
  type: "step";
  session_id: string;
  seq: number;
  step: CycleStep;
  robot_state: RobotSnapshot;
}

export interface TerminalEvent {
  type: "terminal";
  session_id: string;
  seq: number;
  terminal: string;
  robot_state: RobotSnapshot;
}

export type SessionEvent = StepEvent | TerminalEvent;

export interface RetrievalInfo {
  api_names: string[];
  api_scores: number[];
  procedure_ids: string[];
  procedure_scores: number[];
}

export interface SessionDetail {
  session_id: string;
  created_at: string;
  config: Record<string, unknown>;
  terminal: string | null;
  steps: number;
  robot_state: RobotSnapshot;
  transcript: { retrieval: RetrievalInfo; instruction: string } & Record<string, unknown>;
}

export interface CreateSessionRequest {
  instruction: string;
  backend?: string;
  turns?: string[];
  ablation?: string;
  seed?: number;
  mode?: string;
  max_steps?: number;
  error_threshold?: number;
}

export interface SessionHandle {
  session_id: string;
  created_at: string;
  config: Record<string, unknown>;
}
