/**
 * Page wiring: session setup form, live stream, and input handling.
 *
 * The server is the sole source of truth — every click either becomes a
 * request or (when the choice is not in the current feasible set) nothing.
 */

import { SandboxClient, StreamHandle, submitIfEnabled } from "./client.js";
import { SessionModel } from "./model.js";
import { Choice } from "./protocol.js";
import { Panels, renderAll } from "./render.js";

const model = new SessionModel();
const client = new SandboxClient("");
let stream: StreamHandle | null = null;

function panel(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing page element #${id}`);
  }
  return node;
}

const panels: Panels = {
  board: panel("board"),
  status: panel("status"),
  choices: panel("choices"),
  timeline: panel("timeline"),
  belief: panel("belief"),
};

function repaint(): void {
  renderAll(model, panels, (choice) => {
    void pick(choice);
  });
}

async function pick(choice: Choice): Promise<void> {
  repaint(); // disable buttons while the request is in flight
  await submitIfEnabled(client, model, choice);
  repaint();
}

async function startSession(): Promise<void> {
  const policy = (panel("policy") as HTMLSelectElement).value;
  const seed = Number((panel("seed") as HTMLInputElement).value) || 0;
  const scenarioText = (panel("scenario") as HTMLTextAreaElement).value.trim();
  let scenario: Record<string, unknown> = {};
  if (scenarioText !== "") {
    try {
      scenario = JSON.parse(scenarioText) as Record<string, unknown>;
    } catch {
      panel("form-error").textContent = "scenario must be a JSON object";
      return;
    }
  }
  panel("form-error").textContent = "";

  if (stream !== null) {
    stream.stop();
    stream = null;
  }
  if (model.sessionId !== null) {
    await client.closeSession(model.sessionId).catch(() => undefined);
  }

  try {
    const created = await client.createSession({
      htm: "chair",
      policy,
      seed,
      scenario,
    });
    model.bind(created.id, created.htm);
    model.applyFrames([created.frame]);
    // backfill any frames emitted between creation and now, then go live
    const backlog = await client.frames(created.id, model.lastSeq + 1);
    model.applyFrames(backlog.frames);
    stream = client.openStream(model, {
      onFrame: repaint,
      onState: repaint,
    });
  } catch (err) {
    panel("form-error").textContent = String(err);
  }
  repaint();
}

panel("start").addEventListener("click", () => {
  void startSession();
});

repaint();
