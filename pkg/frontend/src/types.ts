/** Wire types mirrored from the gateway's event frames and error bodies. */

export type EventKind =
  | "status_change"
  | "plan_update"
  | "tool_call"
  | "tool_result"
  | "file_change"
  | "command_output"
  | "message"
  | "search_result"
  | "vetting_request";

export interface TaskEvent {
  seq: number;
  task_id: string;
  kind: EventKind;
  payload: Record<string, unknown>;
  at?: number;
}

/** Content body: inline under the lazy threshold, hash reference above it. */
export interface ContentBody {
  hash: string;
  size_bytes: number;
  inline?: { text?: string; base64?: string };
}

export interface ErrorBody {
  error_code: string;
  message: string;
}

export interface SessionRecord {
  task_id: string;
  goal: string;
  status: string;
  round: number;
  export_available: boolean;
  created_at: number;
  ended_at: number | null;
}

export const TERMINAL_STATUSES = new Set(["completed", "failed", "aborted"]);

export function isTerminal(status: string): boolean {
  return TERMINAL_STATUSES.has(status);
}
