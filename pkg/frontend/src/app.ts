/**
 * DOM shell: three panes (activity log, file explorer, editor) plus the
 * global control bar and session history.  All rendering is driven by the
 * event stream through the pure reducer; refresh at any moment rebuilds
 * the same view from seq 1.
 */

import { GatewayClient } from "./client";
import { controlsFor } from "./controls";
import { EditorState } from "./editor";
import { ViewState, applyEvent, initialState, setOffline } from "./state";
import { TaskEvent } from "./types";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class App {
  private state: ViewState = initialState();
  private editor = new EditorState();
  private client: GatewayClient;
  private unsubscribe: (() => void) | null = null;
  private activePath: string | null = null;

  private log: HTMLElement;
  private explorer: HTMLElement;
  private editorPane: HTMLTextAreaElement;
  private editorStatus: HTMLElement;
  private controlsBar: HTMLElement;
  private statusLine: HTMLElement;
  private history: HTMLElement;

  constructor(private root: HTMLElement, client?: GatewayClient) {
    this.client = client ?? new GatewayClient();
    this.statusLine = el("div", "status-line", "no task selected");
    this.controlsBar = el("div", "controls");
    this.log = el("div", "pane activity-log");
    this.explorer = el("div", "pane explorer");
    this.editorPane = el("textarea", "editor-text") as HTMLTextAreaElement;
    this.editorStatus = el("div", "editor-status");
    this.history = el("div", "history");

    const header = el("header");
    header.append(this.statusLine, this.controlsBar);
    const editorWrap = el("div", "pane editor");
    editorWrap.append(this.editorPane, this.editorStatus);
    const panes = el("main", "panes");
    panes.append(this.log, this.explorer, editorWrap);
    this.root.append(header, panes, this.history);

    this.editorPane.addEventListener("input", () => {
      if (this.activePath !== null) {
        this.editor.edit(this.activePath, this.editorPane.value);
        this.renderEditorStatus();
      }
    });
    this.buildControls();
    void this.refreshHistory();
  }

  openTask(taskId: string): void {
    this.unsubscribe?.();
    this.state = initialState();
    this.editor = new EditorState();
    this.activePath = null;
    this.unsubscribe = this.client.streamEvents(taskId, 1, {
      onEvent: (event: TaskEvent) => {
        this.state = applyEvent(this.state, event);
        this.editor.applyEvent(event);
        this.render();
      },
      onEnd: () => {
        void this.refreshHistory();
      },
      onOffline: (offline) => {
        this.state = setOffline(this.state, offline);
        this.renderStatus();
      },
    });
  }

  async submit(goal: string): Promise<void> {
    const taskId = await this.client.submitTask(goal);
    this.openTask(taskId);
  }

  private buildControls(): void {
    for (const action of ["pause", "resume", "abort", "export"] as const) {
      const button = el("button", `control-${action}`, action);
      button.dataset.action = action;
      button.addEventListener("click", () => void this.runControl(action));
      this.controlsBar.append(button);
    }
  }

  private async runControl(action: "pause" | "resume" | "abort" | "export"): Promise<void> {
    const taskId = this.state.taskId;
    if (!taskId) return;
    if (action === "export") {
      window.open(this.client.exportUrl(taskId), "_blank");
      return;
    }
    await this.client[action](taskId);
  }

  private render(): void {
    this.renderStatus();
    this.renderLog();
    this.renderExplorer();
    this.renderEditorStatus();
  }

  private renderStatus(): void {
    const offline = this.state.offline ? " [offline, reconnecting]" : "";
    this.statusLine.textContent = this.state.taskId
      ? `${this.state.taskId} — ${this.state.status} (round ${this.state.round})${offline}`
      : "no task selected";
    const controls = controlsFor(this.state.status);
    for (const button of this.controlsBar.querySelectorAll("button")) {
      const action = button.dataset.action as keyof typeof controls;
      button.disabled = !controls[action];
    }
  }

  private renderLog(): void {
    // rendered rows are exactly the received seq order
    const fragment = document.createDocumentFragment();
    this.log.textContent = "";
    for (const row of this.state.rows) {
      const div = el("div", `row row-${row.kind}`);
      div.append(el("span", "seq", `#${row.seq}`), el("span", "label", row.label));
      if (row.detail !== undefined) {
        div.append(el("pre", "detail", row.detail));
      }
      if (row.lazyHash) {
        const load = el("button", "lazy-load", "load full content");
        const hash = row.lazyHash;
        load.addEventListener("click", async () => {
          load.replaceWith(el("pre", "detail", await this.client.fetchContent(hash)));
        });
        div.append(load);
      }
      fragment.append(div);
    }
    this.log.append(fragment);
    this.log.scrollTop = this.log.scrollHeight;
  }

  private renderExplorer(): void {
    this.explorer.textContent = "";
    const paths = [...this.state.files.keys()].sort();
    for (const path of paths) {
      const file = this.state.files.get(path)!;
      const row = el("div", "file-row");
      const name = el("a", "file-name", `${file.path} (v${file.versionNo})`);
      name.addEventListener("click", () => void this.openFile(file.path));
      row.append(name);
      this.explorer.append(row);
    }
  }

  private async openFile(path: string): Promise<void> {
    if (this.editor.hasDirtyTabs() && this.activePath !== path) {
      if (!window.confirm("Discard unsaved changes?")) return;
    }
    const file = this.state.files.get(path);
    if (!file) return;
    let content = file.inlineText;
    if (content === undefined) {
      content = await this.client.fetchContent(file.hash);
    }
    this.activePath = path;
    this.editor.open(path, content);
    this.editorPane.value = this.editor.tabs.get(path)!.content;
    this.renderEditorStatus();
  }

  private renderEditorStatus(): void {
    if (this.activePath === null) {
      this.editorStatus.textContent = "no file open";
      return;
    }
    const tab = this.editor.tabs.get(this.activePath);
    if (!tab) return;
    const bits = [this.activePath, tab.dirty ? "modified" : "saved"];
    if (tab.error) bits.push(`error: ${tab.error}`);
    this.editorStatus.textContent = bits.join(" — ");
  }

  async saveActiveFile(): Promise<void> {
    if (this.activePath === null || this.state.taskId === null) return;
    await this.editor.save(this.client, this.state.taskId, this.activePath);
    this.renderEditorStatus();
  }

  private async refreshHistory(): Promise<void> {
    try {
      const records = await this.client.sessions();
      this.history.textContent = "";
      this.history.append(el("h3", undefined, "Session history"));
      for (const record of records) {
        const row = el("div", "history-row",
          `${record.task_id} · ${record.status} · round ${record.round} · ${record.goal}`);
        row.addEventListener("click", () => this.openTask(record.task_id));
        this.history.append(row);
      }
    } catch {
      // history pane is best-effort; the stream is the primary surface
    }
  }
}

export function mount(selector = "#app"): App {
  const root = document.querySelector<HTMLElement>(selector);
  if (!root) throw new Error(`no mount point matching ${selector}`);
  return new App(root);
}
