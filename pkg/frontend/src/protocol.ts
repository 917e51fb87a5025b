/**
 * Wire types for the sandbox service.
 *
 * These mirror the server's JSON payloads exactly; the client performs no
 * simulation of its own, so every field here is server-authored truth.
 */

/** The distinguished "wait without advancing the task" action id. */
export const IDLE = 0;

export type SessionStatus = "awaiting_human_choice" | "advancing" | "done";

export type FrameType = "created" | "assign" | "pick" | "event";

export type EventName =
  | "human_done"
  | "robot_done"
  | "detected"
  | "change_of_mind";

/** One snapshot of the collaboration, pushed after every applied event. */
export interface Frame {
  seq: number;
  type: FrameType;
  /** events applied so far */
  k: number;
  /** simulated steps consumed by this frame's event (0 for non-events) */
  dt: number;
  /** simulated time after this frame */
  t: number;
  /** per-action task progress: -1 failed, 0 pending, +1 completed */
  s_a: number[];
  human_action: number | null;
  /** true while the human holds a joint action, waiting for the robot */
  human_waiting: boolean;
  robot_action: number;
  detected: boolean;
  status: SessionStatus;
  /** action ids the client may submit right now (IDLE included when legal) */
  feasible_human: number[];
  can_change_mind: boolean;
  reward_so_far: number;
  belief: number[] | null;
  done: boolean;
  makespan?: number;
  /** present on type === "event" frames */
  event?: EventName;
  success?: boolean;
}

/** A task-model action as serialized in the task document. */
export interface ActionDoc {
  id: number;
  name: string;
  capability: "human_only" | "robot_only" | "either" | "joint";
  duration_h: number;
  duration_r: number;
  duration_cv: number;
  p_fail: number;
  /** present on auto-generated recovery twins */
  recovery_of?: number;
}

/** Task-model tree node: internal nodes carry a kind, leaves an action id. */
export interface NodeDoc {
  kind?: "sequential" | "independent" | "parallel";
  children?: NodeDoc[];
  leaf?: number;
}

export interface TaskDoc {
  actions: ActionDoc[];
  root: NodeDoc;
}

export type Choice =
  | { type: "action"; action_id: number }
  | { type: "idle" }
  | { type: "change_of_mind" };

export interface CreateSessionRequest {
  htm?: unknown;
  scenario?: Record<string, unknown>;
  policy?: string;
  policy_options?: Record<string, unknown>;
  human?: string;
  seed?: number;
  goals?: unknown;
  intent_detection?: boolean;
}

export interface CreateSessionResponse {
  id: string;
  status: SessionStatus;
  policy: string;
  htm: TaskDoc;
  scenario: Record<string, unknown>;
  last_seq: number;
  frame: Frame;
}

export interface SessionInfo {
  id: string;
  status: SessionStatus;
  policy: string;
  last_seq: number;
  done: boolean;
  t: number;
  n_events: number;
  n_changes: number;
  n_failures: number;
  frame: Frame;
  makespan?: number;
}

export interface FramesResponse {
  frames: Frame[];
  last_seq: number;
}

export interface ChoiceResponse {
  status: SessionStatus;
  frames: Frame[];
  last_seq: number;
}

/** Body of a 409 rejection: what the server would accept instead. */
export interface RejectDetail {
  message: string;
  status: SessionStatus;
  feasible_human: number[];
  can_change_mind: boolean;
}

export type StreamMessage =
  | { type: "hello"; last_seq: number }
  | { type: "frame"; frame: Frame }
  | { type: "closed" };

export function isRejectDetail(value: unknown): value is RejectDetail {
  return (
    typeof value === "object" &&
    value !== null &&
    "message" in value &&
    "feasible_human" in value
  );
}

/** Stable identity for a choice, used for enabled-set membership tests. */
export function choiceKey(choice: Choice): string {
  return choice.type === "action" ? `action:${choice.action_id}` : choice.type;
}
