/**
 * End-to-end contract against a recorded chair session.
 *
 * The fixture was captured from the live service (two rails placed by the
 * human, one change of mind, the joint carry) and its frame log was
 * verified at recording time to replay through the simulation core to the
 * recorded terminal state. These tests replay the same log through the
 * view model and hold it to that terminal state and to the feasibility
 * contract at every step.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { boardLeaves, SessionModel } from "../src/model.js";
import { Choice, choiceKey, Frame, TaskDoc } from "../src/protocol.js";

interface Fixture {
  create_request: unknown;
  task: TaskDoc;
  choices: Array<{ at_seq: number; choice: Choice }>;
  frames: Frame[];
  human_rails: number[];
  replayed_terminal: {
    makespan: number;
    s_a: number[];
    n_events: number;
    n_changes: number;
    n_failures: number;
  };
}

const fixturePath = join(
  dirname(fileURLToPath(import.meta.url)),
  "..",
  "fixtures",
  "chair-session.json",
);
const fixture = JSON.parse(readFileSync(fixturePath, "utf-8")) as Fixture;

function freshModel(): SessionModel {
  const model = new SessionModel();
  model.bind("fixture", fixture.task);
  return model;
}

describe("recorded chair session", () => {
  it("carries the scripted story: two rails, one change of mind, the joint carry", () => {
    expect(fixture.human_rails.length).toBeGreaterThanOrEqual(2);
    const changes = fixture.frames.filter(
      (f) => f.event === "change_of_mind",
    );
    expect(changes).toHaveLength(1);
    expect(
      fixture.frames.some(
        (f) => f.human_action === 5 && f.robot_action === 5,
      ),
    ).toBe(true);
  });

  it("replays to the simulation core's terminal state", () => {
    const model = freshModel();
    expect(model.applyFrames(fixture.frames)).toBe(fixture.frames.length);

    const final = model.current!;
    expect(final.done).toBe(true);
    expect(final.makespan).toBe(fixture.replayed_terminal.makespan);
    expect(final.s_a).toEqual(fixture.replayed_terminal.s_a);
    expect(final.k).toBe(fixture.replayed_terminal.n_events);

    // the board agrees: every base action reads as done
    const leaves = boardLeaves(fixture.task, final);
    expect(leaves.every((leaf) => leaf.status === "completed")).toBe(true);
    expect(model.choices()).toHaveLength(0);
  });

  it("never enables a choice outside the server's feasible set", () => {
    const model = freshModel();
    for (const frame of fixture.frames) {
      model.applyFrame(frame);
      const offered = model.choices();
      const allowed = new Set<string>(
        frame.feasible_human.map((id) =>
          choiceKey(id === 0 ? { type: "idle" } : { type: "action", action_id: id }),
        ),
      );
      if (frame.can_change_mind) {
        allowed.add("change_of_mind");
      }
      for (const choice of offered) {
        expect(allowed.has(choiceKey(choice))).toBe(true);
      }
      // and the offer is exact, not merely safe: nothing feasible is hidden
      if (frame.status === "awaiting_human_choice") {
        expect(offered.map(choiceKey).sort()).toEqual([...allowed].sort());
      } else {
        expect(offered).toHaveLength(0);
      }
    }
  });

  it("offered every choice the recorded user actually made", () => {
    const model = freshModel();
    const byseq = new Map(
      fixture.choices.map(({ at_seq, choice }) => [at_seq, choice]),
    );
    let checked = 0;
    for (const frame of fixture.frames) {
      model.applyFrame(frame);
      const choice = byseq.get(frame.seq);
      if (choice !== undefined) {
        expect(model.isEnabled(choice)).toBe(true);
        checked += 1;
      }
    }
    expect(checked).toBe(fixture.choices.length);
  });

  it("reaches the same view state under redelivery and reordering", () => {
    const ordered = freshModel();
    ordered.applyFrames(fixture.frames);

    const doubled = freshModel();
    doubled.applyFrames(fixture.frames);
    expect(doubled.applyFrames(fixture.frames)).toBe(0);

    const scrambled = freshModel();
    const mixed = [...fixture.frames].reverse();
    scrambled.applyFrames(mixed); // only the newest survives the seq guard
    scrambled.applyFrames(fixture.frames); // stale now, all dropped

    for (const model of [doubled, scrambled]) {
      expect(model.current).toEqual(ordered.current);
      expect(model.lastSeq).toBe(ordered.lastSeq);
      expect(model.makespan()).toBe(fixture.replayed_terminal.makespan);
    }
  });

  it("keeps the timeline consistent with the recorded event count", () => {
    const model = freshModel();
    model.applyFrames(fixture.frames);
    const eventFrames = fixture.frames.filter((f) => f.type === "event");
    expect(eventFrames.length).toBeGreaterThan(0);
    expect(model.current!.k).toBe(eventFrames.length);
  });
});
