/**
 * Global control gating: button enablement is a pure function of the last
 * seen status_change, never of any optimistic local state.
 */

import { isTerminal } from "./types";

export interface ControlState {
  pause: boolean;
  resume: boolean;
  abort: boolean;
  export: boolean;
}

const PAUSABLE = new Set(["created", "planning", "executing", "resuming"]);

export function controlsFor(status: string): ControlState {
  if (isTerminal(status)) {
    // terminal renders locked controls; the workspace stays downloadable
    return { pause: false, resume: false, abort: false, export: true };
  }
  return {
    pause: PAUSABLE.has(status),
    resume: status === "paused",
    abort: true,
    export: true,
  };
}
