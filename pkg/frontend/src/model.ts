/**
 * Pure view-model for a sandbox session.
 *
 * Holds only server-acknowledged frames, in sequence order; every derived
 * view (task board, choice buttons, timeline) is a function of the latest
 * applied frame, so replaying a recorded frame log always reconstructs the
 * same view state regardless of duplicates or stale deliveries.
 */

import {
  ActionDoc,
  Choice,
  choiceKey,
  Frame,
  IDLE,
  NodeDoc,
  RejectDetail,
  TaskDoc,
} from "./protocol.js";

export type ConnectionState =
  | "idle"
  | "connecting"
  | "live"
  | "lost"
  | "closed";

export class SessionModel {
  sessionId: string | null = null;
  task: TaskDoc | null = null;
  frames: Frame[] = [];
  lastSeq = -1;
  current: Frame | null = null;
  connection: ConnectionState = "idle";
  /** choice sent and not yet acknowledged by a newer frame */
  pendingChoice: Choice | null = null;
  /** last server rejection, for display until the next accepted input */
  lastReject: RejectDetail | null = null;

  bind(sessionId: string, task: TaskDoc): void {
    this.sessionId = sessionId;
    this.task = task;
    this.frames = [];
    this.lastSeq = -1;
    this.current = null;
    this.pendingChoice = null;
    this.lastReject = null;
  }

  /**
   * Apply one server frame; returns false when the frame is stale
   * (sequence number at or below the last rendered one) and was dropped.
   */
  applyFrame(frame: Frame): boolean {
    if (frame.seq <= this.lastSeq) {
      return false;
    }
    this.frames.push(frame);
    this.lastSeq = frame.seq;
    this.current = frame;
    // any newer frame acknowledges the in-flight choice
    this.pendingChoice = null;
    return true;
  }

  /** Apply a batch in order; returns how many were fresh. */
  applyFrames(frames: Frame[]): number {
    let applied = 0;
    for (const frame of frames) {
      if (this.applyFrame(frame)) {
        applied += 1;
      }
    }
    return applied;
  }

  /**
   * The complete set of choices the client may submit right now — exactly
   * the server's feasible list (plus change-of-mind while it is offered),
   * and empty while a choice is in flight or no input is awaited.
   */
  choices(): Choice[] {
    const frame = this.current;
    if (
      frame === null ||
      frame.status !== "awaiting_human_choice" ||
      this.pendingChoice !== null
    ) {
      return [];
    }
    const out: Choice[] = frame.feasible_human.map((id) =>
      id === IDLE ? { type: "idle" } : { type: "action", action_id: id },
    );
    if (frame.can_change_mind) {
      out.push({ type: "change_of_mind" });
    }
    return out;
  }

  isEnabled(choice: Choice): boolean {
    const key = choiceKey(choice);
    return this.choices().some((c) => choiceKey(c) === key);
  }

  makespan(): number | null {
    return this.current?.makespan ?? null;
  }
}

// ---------------------------------------------------------------------------
// task board

export type LeafStatus =
  | "pending"
  | "human"
  | "robot"
  | "joint"
  | "waiting"
  | "completed"
  | "failed";

export interface LeafView {
  id: number;
  name: string;
  capability: ActionDoc["capability"];
  status: LeafStatus;
  /** failed leaves advertise their recovery twin */
  recoveryAvailable: boolean;
  recoveryName: string | null;
}

export interface GroupView {
  kind: "sequential" | "independent" | "parallel";
  children: BoardNode[];
}

export type BoardNode =
  | { leaf: LeafView }
  | { group: GroupView };

function actionById(task: TaskDoc, id: number): ActionDoc {
  const action = task.actions.find((a) => a.id === id);
  if (action === undefined) {
    throw new Error(`task document has no action ${id}`);
  }
  return action;
}

function recoveryFor(task: TaskDoc, id: number): ActionDoc | null {
  return task.actions.find((a) => a.recovery_of === id) ?? null;
}

export function leafStatus(frame: Frame, id: number): LeafStatus {
  const value = frame.s_a[id - 1];
  if (value === 1) {
    return "completed";
  }
  if (value === -1) {
    return "failed";
  }
  const human = frame.human_action === id;
  const robot = frame.robot_action === id;
  if (human && robot) {
    return "joint";
  }
  if (human) {
    return frame.human_waiting ? "waiting" : "human";
  }
  if (robot) {
    return "robot";
  }
  return "pending";
}

export function leafView(task: TaskDoc, frame: Frame, id: number): LeafView {
  const action = actionById(task, id);
  const status = leafStatus(frame, id);
  const recovery = status === "failed" ? recoveryFor(task, id) : null;
  return {
    id,
    name: action.name,
    capability: action.capability,
    status,
    recoveryAvailable: recovery !== null,
    recoveryName: recovery?.name ?? null,
  };
}

/**
 * The task tree decorated with per-leaf status for one frame. Children are
 * emitted in document order, so sequential groups read left to right.
 */
export function boardTree(task: TaskDoc, frame: Frame): BoardNode {
  function walk(node: NodeDoc): BoardNode {
    if (node.leaf !== undefined) {
      return { leaf: leafView(task, frame, node.leaf) };
    }
    if (node.kind === undefined || node.children === undefined) {
      throw new Error("task node must carry a kind with children, or a leaf");
    }
    return {
      group: { kind: node.kind, children: node.children.map(walk) },
    };
  }
  return walk(task.root);
}

/** Flat list of base-action leaf views in id order (for simple layouts). */
export function boardLeaves(task: TaskDoc, frame: Frame): LeafView[] {
  return task.actions
    .filter((a) => a.recovery_of === undefined)
    .map((a) => leafView(task, frame, a.id));
}

// ---------------------------------------------------------------------------
// event timeline

export type EventCode = "H" | "R" | "D" | "C";

export interface TimelineMark {
  /** simulated time at which the event landed */
  t: number;
  code: EventCode;
  seq: number;
  /** completions carry whether the action succeeded */
  success?: boolean;
}

const EVENT_CODES: Record<string, EventCode> = {
  human_done: "H",
  robot_done: "R",
  detected: "D",
  change_of_mind: "C",
};

export function timelineMarks(frames: Frame[]): TimelineMark[] {
  const marks: TimelineMark[] = [];
  for (const frame of frames) {
    if (frame.type !== "event" || frame.event === undefined) {
      continue;
    }
    const code = EVENT_CODES[frame.event];
    if (code === undefined) {
      continue;
    }
    const mark: TimelineMark = { t: frame.t, code, seq: frame.seq };
    if (frame.success !== undefined) {
      mark.success = frame.success;
    }
    marks.push(mark);
  }
  return marks;
}
