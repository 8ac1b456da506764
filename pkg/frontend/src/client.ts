/**
 * Gateway API client.  Only the documented routes are used; the event
 * stream is parsed from the SSE wire format with automatic reconnection
 * from the last seen cursor, so no frame is lost or duplicated.
 */

import { ErrorBody, SessionRecord, TaskEvent } from "./types";

export interface SseFrame {
  id?: string;
  event?: string;
  data?: string;
}

/** Incremental SSE parser; feed arbitrary text chunks, get complete frames. */
export class SseParser {
  private buffer = "";
  private current: SseFrame = {};

  push(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    let newline;
    while ((newline = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, newline).replace(/\r$/, "");
      this.buffer = this.buffer.slice(newline + 1);
      if (line === "") {
        if (this.current.data !== undefined || this.current.event !== undefined) {
          frames.push(this.current);
        }
        this.current = {};
        continue;
      }
      if (line.startsWith(":")) continue; // heartbeat comment
      const sep = line.indexOf(": ");
      if (sep < 0) continue;
      const field = line.slice(0, sep);
      const value = line.slice(sep + 2);
      if (field === "data") {
        this.current.data = this.current.data === undefined ? value : this.current.data + "\n" + value;
      } else if (field === "event") {
        this.current.event = value;
      } else if (field === "id") {
        this.current.id = value;
      }
    }
    return frames;
  }
}

export interface StreamHandlers {
  onEvent: (event: TaskEvent) => void;
  onEnd?: () => void;
  onOffline?: (offline: boolean) => void;
}

export interface GatewayClientOptions {
  baseUrl?: string;
  fetchImpl?: typeof fetch;
  /** delay between reconnect attempts, ms */
  reconnectDelayMs?: number;
  /** give up after this many consecutive failed connects */
  maxReconnects?: number;
}

export class GatewayError extends Error {
  constructor(public body: ErrorBody, public status: number) {
    super(`${body.error_code}: ${body.message}`);
  }
}

async function parseError(response: Response): Promise<GatewayError> {
  let body: ErrorBody;
  try {
    body = (await response.json()) as ErrorBody;
  } catch {
    body = { error_code: "http_error", message: `status ${response.status}` };
  }
  return new GatewayError(body, response.status);
}

export class GatewayClient {
  private baseUrl: string;
  private fetchImpl: typeof fetch;
  private reconnectDelayMs: number;
  private maxReconnects: number;

  constructor(options: GatewayClientOptions = {}) {
    this.baseUrl = (options.baseUrl ?? "").replace(/\/$/, "");
    this.fetchImpl = options.fetchImpl ?? fetch.bind(globalThis);
    this.reconnectDelayMs = options.reconnectDelayMs ?? 1000;
    this.maxReconnects = options.maxReconnects ?? 20;
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw await parseError(response);
    }
    return response;
  }

  async submitTask(
    goal: string,
    attachments: Array<{ path: string; text?: string; content_b64?: string }> = [],
  ): Promise<string> {
    const response = await this.request("/tasks", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ goal, attachments }),
    });
    const body = (await response.json()) as { task_id: string };
    return body.task_id;
  }

  async pause(taskId: string): Promise<void> {
    await this.request(`/tasks/${taskId}/pause`, { method: "POST" });
  }

  async resume(taskId: string): Promise<void> {
    await this.request(`/tasks/${taskId}/resume`, { method: "POST" });
  }

  async abort(taskId: string): Promise<void> {
    await this.request(`/tasks/${taskId}/abort`, { method: "POST" });
  }

  /** PUT the new file content; the save is confirmed by the reflected
   * file_change event on the stream, not by this response alone. */
  async putFile(taskId: string, path: string, content: string): Promise<void> {
    await this.request(`/tasks/${taskId}/files/${path}`, {
      method: "PUT",
      body: content,
    });
  }

  async command(taskId: string, command: string): Promise<void> {
    await this.request(`/tasks/${taskId}/command`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ command }),
    });
  }

  async sessions(): Promise<SessionRecord[]> {
    const response = await this.request("/sessions");
    return (await response.json()) as SessionRecord[];
  }

  async fetchContent(hash: string): Promise<string> {
    const response = await this.request(`/contents/${hash}`);
    return await response.text();
  }

  exportUrl(taskId: string): string {
    return `${this.baseUrl}/tasks/${taskId}/export`;
  }

  /**
   * Subscribe from `fromSeq`, invoking onEvent per frame in order.  On a
   * dropped connection the client resumes from the last delivered seq; the
   * returned function cancels the subscription.
   */
  streamEvents(taskId: string, fromSeq: number, handlers: StreamHandlers): () => void {
    let cancelled = false;
    let cursor = fromSeq;
    let failures = 0;

    const connect = async (): Promise<void> => {
      while (!cancelled && failures <= this.maxReconnects) {
        try {
          const response = await this.fetchImpl(
            `${this.baseUrl}/tasks/${taskId}/events?from=${cursor}`,
            { headers: { accept: "text/event-stream" } },
          );
          if (!response.ok || response.body === null) {
            throw await parseError(response);
          }
          handlers.onOffline?.(false);
          failures = 0;
          const reader = response.body.getReader();
          const decoder = new TextDecoder();
          const parser = new SseParser();
          for (;;) {
            const { done, value } = await reader.read();
            if (done) break;
            for (const frame of parser.push(decoder.decode(value, { stream: true }))) {
              if (cancelled) return;
              if (frame.event === "end") {
                handlers.onEnd?.();
                return;
              }
              if (frame.data === undefined) continue;
              const event = JSON.parse(frame.data) as TaskEvent;
              if (event.seq < cursor) continue; // replay overlap guard
              cursor = event.seq + 1;
              handlers.onEvent(event);
            }
          }
          // stream closed without an end frame: reconnect from the cursor
        } catch (error) {
          if (error instanceof GatewayError && error.status === 404) {
            throw error; // unknown task is not retriable
          }
          failures += 1;
        }
        if (cancelled) return;
        handlers.onOffline?.(true);
        await new Promise((resolve) => setTimeout(resolve, this.reconnectDelayMs));
      }
    };

    void connect();
    return () => {
      cancelled = true;
    };
  }
}
