/** Shared builders for view-model and client tests. */

import { Frame, TaskDoc } from "../src/protocol.js";

export function makeFrame(overrides: Partial<Frame> = {}): Frame {
  return {
    seq: 0,
    type: "created",
    k: 0,
    dt: 0,
    t: 0,
    s_a: [0, 0, 0],
    human_action: null,
    human_waiting: false,
    robot_action: 0,
    detected: false,
    status: "advancing",
    feasible_human: [],
    can_change_mind: false,
    reward_so_far: 0,
    belief: null,
    done: false,
    ...overrides,
  };
}

/** Three-action toy task: two either-agent steps then a joint finish. */
export function toyTask(): TaskDoc {
  return {
    actions: [
      {
        id: 1,
        name: "wire the lamp",
        capability: "either",
        duration_h: 4,
        duration_r: 6,
        duration_cv: 0,
        p_fail: 0,
      },
      {
        id: 2,
        name: "mount the shade",
        capability: "either",
        duration_h: 5,
        duration_r: 5,
        duration_cv: 0,
        p_fail: 0,
      },
      {
        id: 3,
        name: "carry to the shelf",
        capability: "joint",
        duration_h: 3,
        duration_r: 3,
        duration_cv: 0,
        p_fail: 0,
      },
      {
        id: 4,
        name: "recover wire the lamp",
        capability: "either",
        duration_h: 4,
        duration_r: 6,
        duration_cv: 0,
        p_fail: 0,
        recovery_of: 1,
      },
    ],
    root: {
      kind: "sequential",
      children: [
        {
          kind: "independent",
          children: [{ leaf: 1 }, { leaf: 2 }],
        },
        { leaf: 3 },
      ],
    },
  };
}
