/**
 * View state as a pure fold over the event stream.
 *
 * Nothing here is authoritative: replaying the same events from seq 1
 * always reconstructs the same state, which is what makes refresh and
 * reconnect safe.  Local edit buffers live in editor.ts, not here.
 */

import { ContentBody, TaskEvent, isTerminal } from "./types";

export interface ActivityRow {
  seq: number;
  kind: string;
  label: string;
  /** present when the full content must be lazily fetched by hash */
  lazyHash?: string;
  /** pre-execution detail (full script / arguments), shown before results */
  detail?: string;
}

export interface FileRow {
  path: string;
  versionNo: number;
  sizeBytes: number;
  hash: string;
  author: string;
  /** content was above the inline threshold; fetch on click */
  lazy: boolean;
  inlineText?: string;
}

export interface ViewState {
  taskId: string | null;
  cursor: number; // last applied seq
  status: string;
  round: number;
  rows: ActivityRow[];
  files: Map<string, FileRow>;
  planText: string;
  planRevision: number;
  finalAnswer: string | null;
  offline: boolean;
}

export function initialState(): ViewState {
  return {
    taskId: null,
    cursor: 0,
    status: "unknown",
    round: 0,
    rows: [],
    files: new Map(),
    planText: "",
    planRevision: 0,
    finalAnswer: null,
    offline: false,
  };
}

function asContentBody(value: unknown): ContentBody | null {
  if (value && typeof value === "object" && "hash" in (value as object)) {
    return value as ContentBody;
  }
  return null;
}

function inlineText(body: ContentBody | null): string | undefined {
  if (!body || !body.inline) return undefined;
  if (typeof body.inline.text === "string") return body.inline.text;
  if (typeof body.inline.base64 === "string") return undefined; // binary: keep lazy-ish
  return undefined;
}

function rowFor(event: TaskEvent): ActivityRow {
  const p = event.payload as Record<string, any>;
  switch (event.kind) {
    case "status_change":
      return {
        seq: event.seq,
        kind: event.kind,
        label: `status → ${p.to} (round ${p.round})`,
      };
    case "plan_update":
      return {
        seq: event.seq,
        kind: event.kind,
        label: `plan revision ${p.revision} by ${p.origin}`,
        detail: typeof p.diff === "string" ? p.diff : undefined,
      };
    case "tool_call": {
      // pre-execution visibility: the full arguments render before results
      const args = JSON.stringify(p.arguments ?? {}, null, 2);
      return {
        seq: event.seq,
        kind: event.kind,
        label: `tool call ${p.name} (${p.call_id})`,
        detail: args,
      };
    }
    case "tool_result":
      return {
        seq: event.seq,
        kind: event.kind,
        label: `tool result ${p.outcome}${p.error ? `: ${p.error}` : ""}`,
      };
    case "file_change": {
      const body = asContentBody(p.content);
      const lazy = body !== null && body.inline === undefined;
      return {
        seq: event.seq,
        kind: event.kind,
        label: `file ${p.path} v${p.version_no} by ${p.author}`,
        lazyHash: lazy && body ? body.hash : undefined,
        detail: inlineText(body),
      };
    }
    case "command_output":
      return {
        seq: event.seq,
        kind: event.kind,
        label: `[${p.stream}] ${typeof p.text === "string" ? p.text : ""}`,
      };
    case "message":
      return {
        seq: event.seq,
        kind: event.kind,
        label: p.final_answer
          ? `final answer: ${p.final_answer}`
          : `message: ${JSON.stringify(p)}`,
      };
    case "search_result": {
      const r = p.result ?? {};
      return {
        seq: event.seq,
        kind: event.kind,
        label: `search #${r.rank} ${r.url} (rerank ${r.rerank_score})`,
        detail: r.snippet,
      };
    }
    case "vetting_request":
      return {
        seq: event.seq,
        kind: event.kind,
        label: `vetting: ${p.reason}${p.path ? ` (${p.path})` : ""}`,
      };
    default:
      return { seq: event.seq, kind: event.kind, label: JSON.stringify(p) };
  }
}

/** Apply one event; out-of-order or duplicate frames are rejected loudly. */
export function applyEvent(state: ViewState, event: TaskEvent): ViewState {
  if (event.seq !== state.cursor + 1) {
    throw new Error(
      `event gap: got seq ${event.seq}, expected ${state.cursor + 1}`,
    );
  }
  const next: ViewState = {
    ...state,
    taskId: state.taskId ?? event.task_id,
    cursor: event.seq,
    rows: [...state.rows, rowFor(event)],
    files: new Map(state.files),
  };
  const p = event.payload as Record<string, any>;
  switch (event.kind) {
    case "status_change":
      next.status = String(p.to);
      next.round = Number(p.round ?? next.round);
      break;
    case "plan_update":
      next.planRevision = Number(p.revision ?? next.planRevision);
      break;
    case "file_change": {
      const body = asContentBody(p.content);
      const text = inlineText(body);
      next.files.set(String(p.path), {
        path: String(p.path),
        versionNo: Number(p.version_no),
        sizeBytes: Number(p.size_bytes),
        hash: String(p.hash),
        author: String(p.author),
        lazy: body !== null && body.inline === undefined,
        inlineText: text,
      });
      if (p.path === "TODO.md" && text !== undefined) {
        next.planText = text;
      }
      break;
    }
    case "message":
      if (typeof p.final_answer === "string") {
        next.finalAnswer = p.final_answer;
      }
      break;
  }
  return next;
}

/** Full reconstruction from seq 1 — the refresh path. */
export function buildViewState(events: TaskEvent[]): ViewState {
  let state = initialState();
  for (const event of events) {
    state = applyEvent(state, event);
  }
  return state;
}

export function setOffline(state: ViewState, offline: boolean): ViewState {
  return { ...state, offline };
}

export function taskFinished(state: ViewState): boolean {
  return isTerminal(state.status);
}
