/**
 * File editor tabs: local dirty buffers layered over stream-fed content.
 *
 * A save is only considered landed once the matching file_change event
 * comes back on the stream; until then the tab stays dirty, so a refresh
 * can never silently lose an edit.  Rejected saves keep the local buffer
 * and surface the server's error body verbatim.
 */

import { GatewayClient, GatewayError } from "./client";
import { TaskEvent } from "./types";

export interface EditorTab {
  path: string;
  content: string;
  dirty: boolean;
  error: string | null;
  /** set while a PUT is in flight, cleared by the reflected event */
  pendingSave: boolean;
}

export class EditorState {
  readonly tabs = new Map<string, EditorTab>();

  open(path: string, content: string): EditorTab {
    const existing = this.tabs.get(path);
    if (existing) return existing;
    const tab: EditorTab = { path, content, dirty: false, error: null, pendingSave: false };
    this.tabs.set(path, tab);
    return tab;
  }

  edit(path: string, content: string): void {
    const tab = this.tabs.get(path);
    if (!tab) return;
    tab.content = content;
    tab.dirty = true;
    tab.error = null;
  }

  /** Dirty tabs block navigation without an explicit confirm. */
  hasDirtyTabs(): boolean {
    for (const tab of this.tabs.values()) {
      if (tab.dirty) return true;
    }
    return false;
  }

  async save(client: GatewayClient, taskId: string, path: string): Promise<boolean> {
    const tab = this.tabs.get(path);
    if (!tab) return false;
    tab.pendingSave = true;
    tab.error = null;
    try {
      await client.putFile(taskId, path, tab.content);
      return true;
    } catch (error) {
      tab.pendingSave = false;
      tab.error =
        error instanceof GatewayError
          ? `${error.body.error_code}: ${error.body.message}`
          : String(error);
      return false;
    }
  }

  /** Feed every stream event through here; a human-authored file_change for
   * a pending tab confirms the save and clears the dirty flag. */
  applyEvent(event: TaskEvent): void {
    if (event.kind !== "file_change") return;
    const p = event.payload as Record<string, any>;
    const tab = this.tabs.get(String(p.path));
    if (!tab) return;
    if (tab.pendingSave && p.author === "human") {
      tab.pendingSave = false;
      tab.dirty = false;
    } else if (!tab.dirty) {
      // keep clean tabs in sync with agent/tool writes when inline
      const inline = p.content?.inline?.text;
      if (typeof inline === "string") {
        tab.content = inline;
      }
    }
  }
}
