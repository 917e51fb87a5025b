/**
 * HTTP and WebSocket access to the sandbox service.
 *
 * The transport (fetch, WebSocket constructor, timer) is injectable so the
 * protocol logic — choice submission, rejection handling, stream resume —
 * is testable without a server or a browser.
 */

import { SessionModel } from "./model.js";
import {
  Choice,
  ChoiceResponse,
  CreateSessionRequest,
  CreateSessionResponse,
  Frame,
  FramesResponse,
  isRejectDetail,
  RejectDetail,
  SessionInfo,
  StreamMessage,
} from "./protocol.js";

/** The small slice of the WebSocket interface the client uses. */
export interface SocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  close(): void;
}

export interface Transport {
  fetchFn: (url: string, init?: RequestInit) => Promise<Response>;
  socketFactory: (url: string) => SocketLike;
  schedule: (fn: () => void, ms: number) => unknown;
}

function defaultTransport(): Transport {
  return {
    fetchFn: (url, init) => fetch(url, init),
    socketFactory: (url) => new WebSocket(url) as unknown as SocketLike,
    schedule: (fn, ms) => setTimeout(fn, ms),
  };
}

/** A non-2xx service reply; carries the body's detail payload. */
export class ServiceError extends Error {
  readonly status: number;
  readonly detail: unknown;

  constructor(status: number, detail: unknown) {
    super(
      typeof detail === "string"
        ? detail
        : isRejectDetail(detail)
          ? detail.message
          : `service error ${status}`,
    );
    this.status = status;
    this.detail = detail;
  }

  /** Structured rejection body, when the server sent one. */
  get rejection(): RejectDetail | null {
    return isRejectDetail(this.detail) ? this.detail : null;
  }
}

export interface StreamHandle {
  /** Stop streaming and suppress any pending reconnect. */
  stop(): void;
}

export interface StreamCallbacks {
  /** called after every fresh frame is applied to the model */
  onFrame?: (frame: Frame) => void;
  /** called whenever the model's connection state changes */
  onState?: () => void;
}

export class SandboxClient {
  private readonly base: string;
  private readonly transport: Transport;
  /** delay before a dropped stream reconnects */
  reconnectDelayMs = 500;

  constructor(baseUrl = "", transport: Partial<Transport> = {}) {
    this.base = baseUrl.replace(/\/$/, "");
    this.transport = { ...defaultTransport(), ...transport };
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await this.transport.fetchFn(this.base + path, init);
    if (resp.status === 204) {
      return undefined as T;
    }
    const payload = (await resp.json()) as { detail?: unknown };
    if (!resp.ok) {
      throw new ServiceError(resp.status, payload.detail ?? payload);
    }
    return payload as T;
  }

  createSession(req: CreateSessionRequest): Promise<CreateSessionResponse> {
    return this.request("POST", "/sessions", req);
  }

  session(id: string): Promise<SessionInfo> {
    return this.request("GET", `/sessions/${id}`);
  }

  frames(id: string, fromSeq = 0): Promise<FramesResponse> {
    return this.request("GET", `/sessions/${id}/frames?from_seq=${fromSeq}`);
  }

  submitChoice(id: string, choice: Choice): Promise<ChoiceResponse> {
    return this.request("POST", `/sessions/${id}/choice`, choice);
  }

  closeSession(id: string): Promise<void> {
    return this.request("DELETE", `/sessions/${id}`);
  }

  /**
   * Stream frames into the model over a WebSocket.
   *
   * Every (re)connection asks the server to resume from the sequence number
   * after the last applied frame, so drops never lose or duplicate frames:
   * stale deliveries are discarded by the model's sequence guard.
   */
  openStream(
    model: SessionModel,
    callbacks: StreamCallbacks = {},
  ): StreamHandle {
    if (model.sessionId === null) {
      throw new Error("model is not bound to a session");
    }
    const sessionId = model.sessionId;
    const wsBase =
      this.base.replace(/^http/, "ws") || inferWsBase();
    let stopped = false;
    let socket: SocketLike | null = null;

    const setState = (state: SessionModel["connection"]): void => {
      if (model.connection !== state) {
        model.connection = state;
        callbacks.onState?.();
      }
    };

    const connect = (): void => {
      if (stopped) {
        return;
      }
      setState("connecting");
      const from = model.lastSeq + 1;
      socket = this.transport.socketFactory(
        `${wsBase}/sessions/${sessionId}/stream?from_seq=${from}`,
      );
      socket.onopen = () => setState("live");
      socket.onmessage = (ev) => {
        const message = JSON.parse(ev.data) as StreamMessage;
        if (message.type === "frame") {
          if (model.applyFrame(message.frame)) {
            callbacks.onFrame?.(message.frame);
          }
        } else if (message.type === "closed") {
          stopped = true;
          setState("closed");
        }
      };
      socket.onclose = () => {
        if (stopped) {
          return;
        }
        setState("lost");
        this.transport.schedule(connect, this.reconnectDelayMs);
      };
    };

    connect();
    return {
      stop: () => {
        stopped = true;
        setState("closed");
        socket?.close();
      },
    };
  }
}

function inferWsBase(): string {
  if (typeof location !== "undefined") {
    const scheme = location.protocol === "https:" ? "wss:" : "ws:";
    return `${scheme}//${location.host}`;
  }
  return "";
}

export type SubmitOutcome = "sent" | "blocked" | "rejected";

/**
 * Submit a choice only if the model currently offers it; a choice outside
 * the enabled set sends no request at all. Accepted responses append their
 * frames to the model; a server rejection surfaces its feasible list on
 * the model instead of throwing.
 */
export async function submitIfEnabled(
  client: SandboxClient,
  model: SessionModel,
  choice: Choice,
): Promise<SubmitOutcome> {
  if (model.sessionId === null || !model.isEnabled(choice)) {
    return "blocked";
  }
  model.pendingChoice = choice;
  model.lastReject = null;
  try {
    const resp = await client.submitChoice(model.sessionId, choice);
    model.applyFrames(resp.frames);
    model.pendingChoice = null;
    return "sent";
  } catch (err) {
    model.pendingChoice = null;
    if (err instanceof ServiceError && err.rejection !== null) {
      model.lastReject = err.rejection;
      return "rejected";
    }
    throw err;
  }
}
