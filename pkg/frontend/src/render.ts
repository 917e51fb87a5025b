/**
 * DOM rendering for the task board, choice panel, and event timeline.
 *
 * Rendering is a pure function of the view-model: each call rebuilds the
 * affected subtree from the latest frame, so the page never shows state
 * the server has not acknowledged.
 */

import {
  BoardNode,
  boardTree,
  SessionModel,
  timelineMarks,
} from "./model.js";
import { Choice, choiceKey, Frame } from "./protocol.js";

const STATUS_LABELS: Record<string, string> = {
  pending: "pending",
  human: "human working",
  robot: "robot working",
  joint: "joint — both agents",
  waiting: "waiting for robot",
  completed: "done",
  failed: "failed",
};

function el(
  tag: string,
  className?: string,
  text?: string,
): HTMLElement {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function renderNode(node: BoardNode): HTMLElement {
  if ("leaf" in node) {
    const leaf = node.leaf;
    const card = el("div", `leaf leaf-${leaf.status}`);
    card.appendChild(el("div", "leaf-name", `${leaf.id}. ${leaf.name}`));
    card.appendChild(el("div", "leaf-cap", leaf.capability.replace("_", " ")));
    card.appendChild(
      el("div", "leaf-status", STATUS_LABELS[leaf.status] ?? leaf.status),
    );
    if (leaf.recoveryAvailable && leaf.recoveryName !== null) {
      card.appendChild(
        el("div", "leaf-recovery", `recovery: ${leaf.recoveryName}`),
      );
    }
    return card;
  }
  const group = el("div", `group group-${node.group.kind}`);
  group.appendChild(el("div", "group-kind", node.group.kind));
  const row = el("div", "group-children");
  for (const child of node.group.children) {
    row.appendChild(renderNode(child));
  }
  group.appendChild(row);
  return group;
}

export function renderBoard(model: SessionModel, host: HTMLElement): void {
  host.replaceChildren();
  if (model.task === null || model.current === null) {
    host.appendChild(el("p", "hint", "No session yet."));
    return;
  }
  host.appendChild(renderNode(boardTree(model.task, model.current)));
}

export function renderStatus(model: SessionModel, host: HTMLElement): void {
  host.replaceChildren();
  const frame = model.current;
  if (frame === null) {
    return;
  }
  const bits = [
    `t=${frame.t}`,
    `events=${frame.k}`,
    `status=${frame.status}`,
    `robot detects human: ${frame.detected ? "yes" : "not yet"}`,
    `connection=${model.connection}`,
  ];
  host.appendChild(el("span", "status-line", bits.join("  ·  ")));
  if (frame.done && frame.makespan !== undefined) {
    host.appendChild(
      el("div", "banner", `Task complete — makespan ${frame.makespan} steps`),
    );
  }
  if (model.lastReject !== null) {
    host.appendChild(
      el(
        "div",
        "reject",
        `${model.lastReject.message} (feasible now: ` +
          `${model.lastReject.feasible_human.join(", ") || "none"})`,
      ),
    );
  }
}

function choiceLabel(choice: Choice, model: SessionModel): string {
  if (choice.type === "idle") {
    return "Idle";
  }
  if (choice.type === "change_of_mind") {
    return "Change my mind";
  }
  const action = model.task?.actions.find((a) => a.id === choice.action_id);
  const name = action?.name ?? `action ${choice.action_id}`;
  const current = model.current?.human_action === choice.action_id;
  return current ? `Continue ${name}` : `Start ${name}`;
}

export function renderChoices(
  model: SessionModel,
  host: HTMLElement,
  onPick: (choice: Choice) => void,
): void {
  host.replaceChildren();
  const choices = model.choices();
  if (choices.length === 0) {
    const note =
      model.pendingChoice !== null
        ? "Waiting for the server…"
        : model.current?.done
          ? "Session finished."
          : "The robot is working…";
    host.appendChild(el("p", "hint", note));
    return;
  }
  for (const choice of choices) {
    const button = el("button", `choice choice-${choice.type}`) as
      HTMLButtonElement;
    button.textContent = choiceLabel(choice, model);
    button.dataset["key"] = choiceKey(choice);
    button.addEventListener("click", () => onPick(choice));
    host.appendChild(button);
  }
}

export function renderTimeline(model: SessionModel, host: HTMLElement): void {
  host.replaceChildren();
  const marks = timelineMarks(model.frames);
  if (marks.length === 0) {
    host.appendChild(el("p", "hint", "Events will appear here."));
    return;
  }
  const span = Math.max(model.current?.t ?? 1, 1);
  const strip = el("div", "strip");
  for (const mark of marks) {
    const dot = el("span", `mark mark-${mark.code}`, mark.code);
    dot.style.left = `${(100 * mark.t) / span}%`;
    dot.title = `${mark.code} at t=${mark.t}`;
    strip.appendChild(dot);
  }
  host.appendChild(strip);
  const axis = el("div", "axis");
  axis.appendChild(el("span", "tick", "0"));
  axis.appendChild(el("span", "tick tick-end", String(span)));
  host.appendChild(axis);
}

export function renderBelief(model: SessionModel, host: HTMLElement): void {
  host.replaceChildren();
  const belief = model.current?.belief;
  if (!belief || belief.length === 0) {
    return;
  }
  host.appendChild(el("span", "belief-label", "goal belief:"));
  for (const [i, p] of belief.entries()) {
    const cell = el("span", "belief-cell");
    cell.textContent = `g${i + 1} ${(100 * p).toFixed(0)}%`;
    cell.style.opacity = String(0.35 + 0.65 * p);
    host.appendChild(cell);
  }
}

export interface Panels {
  board: HTMLElement;
  status: HTMLElement;
  choices: HTMLElement;
  timeline: HTMLElement;
  belief: HTMLElement;
}

export function renderAll(
  model: SessionModel,
  panels: Panels,
  onPick: (choice: Choice) => void,
): void {
  renderBoard(model, panels.board);
  renderStatus(model, panels.status);
  renderChoices(model, panels.choices, onPick);
  renderTimeline(model, panels.timeline);
  renderBelief(model, panels.belief);
}

export type { Frame };
