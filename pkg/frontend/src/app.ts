// Console wiring: login, the long-polled job inbox, the outcome form, and
// per-item timeline / diff views. All state except the token lives in memory
// and dies with the tab.

import { RequestFailed, Session, clearToken, saveToken, storedToken } from "./api.js";
import { layerGraph } from "./dag.js";
import { checkFill, readFill, renderForm, showViolations } from "./forms.js";
import { buildPatch, patchAnchors } from "./patch.js";
import type { JobDoc } from "./types.js";
import { renderDiff, renderInbox, renderTimeline } from "./views.js";

export class Console {
  session: Session | null = null;
  cursor: number | undefined;
  polling = false;
  activeJob: JobDoc | null = null;

  constructor(
    public root: HTMLElement,
    public baseUrl: string = "",
  ) {}

  el(id: string): HTMLElement {
    const found = this.root.querySelector<HTMLElement>(`#${id}`);
    if (!found) throw new Error(`missing element #${id}`);
    return found;
  }

  mount(): void {
    this.root.innerHTML = `
      <header><h1>itemforge console</h1><span id="whoami"></span></header>
      <section id="login-view">
        <input id="token-input" placeholder="agent token" />
        <button id="login-button">Sign in</button>
        <p id="login-error" class="violation"></p>
      </section>
      <main id="main-view" hidden>
        <section><h2>Job inbox</h2><div id="inbox"></div></section>
        <section id="job-view" hidden>
          <h2 id="job-title"></h2>
          <div id="outcome-form"></div>
          <input id="purpose-input" placeholder="purpose" />
          <button id="submit-job">Submit</button>
          <p id="job-error" class="violation"></p>
        </section>
        <section>
          <h2>Item</h2>
          <input id="item-input" placeholder="item id" />
          <button id="load-item">Timeline</button>
          <div id="workflow-view"></div>
          <div id="timeline"></div>
          <h3>Version diff</h3>
          <input id="diff-desc" placeholder="description id" />
          <input id="diff-v1" type="number" value="0" />
          <input id="diff-v2" type="number" value="1" />
          <button id="load-diff">Diff</button>
          <div id="diff-view"></div>
        </section>
      </main>`;
    this.el("login-button").addEventListener("click", () => void this.login());
    this.el("submit-job").addEventListener("click", () => void this.submitJob());
    this.el("load-item").addEventListener("click", () => {
      const id = (this.el("item-input") as HTMLInputElement).value;
      if (id) void this.showItem(id);
    });
    this.el("load-diff").addEventListener("click", () => void this.showDiff());
    const remembered = storedToken();
    if (remembered) {
      (this.el("token-input") as HTMLInputElement).value = remembered;
    }
  }

  async login(token?: string): Promise<void> {
    const value = token ?? (this.el("token-input") as HTMLInputElement).value;
    const session = new Session(this.baseUrl, value);
    try {
      const agent = await session.login();
      this.session = session;
      saveToken(value);
      this.el("whoami").textContent = `${agent.name} [${agent.roles.join(", ")}]`;
      this.el("login-view").hidden = true;
      this.el("main-view").hidden = false;
      await this.refreshJobs();
    } catch (error) {
      clearToken();
      this.el("login-error").textContent =
        error instanceof RequestFailed ? error.message : String(error);
      throw error;
    }
  }

  async refreshJobs(waitSeconds?: number): Promise<void> {
    if (!this.session) return;
    const response = await this.session.jobs(this.cursor, waitSeconds);
    this.cursor = response.cursor;
    renderInbox(this.el("inbox"), response.jobs, (job) => this.openJob(job));
  }

  /** One long-poll cycle after another; stop() by clearing the flag. */
  async startPolling(): Promise<void> {
    this.polling = true;
    while (this.polling) {
      await this.refreshJobs(25);
    }
  }

  stopPolling(): void {
    this.polling = false;
  }

  openJob(job: JobDoc): void {
    this.activeJob = job;
    this.el("job-view").hidden = false;
    this.el("job-title").textContent = `${job.itemName}: ${job.stepPath} → ${job.transition}`;
    const formRoot = this.el("outcome-form");
    if (job.transition === "Complete" && job.schemaDef) {
      renderForm(formRoot, job.schemaDef);
    } else {
      formRoot.textContent = "";
    }
    this.el("job-error").textContent = "";
  }

  async submitJob(): Promise<void> {
    if (!this.session || !this.activeJob) return;
    const job = this.activeJob;
    const formRoot = this.el("outcome-form");
    let outcome;
    if (job.transition === "Complete" && job.schemaDef) {
      const check = checkFill(job.schemaDef, readFill(formRoot));
      if (!check.ok) {
        showViolations(formRoot, check.violations); // no request is sent
        return;
      }
      outcome = check.document;
    }
    const purpose = (this.el("purpose-input") as HTMLInputElement).value;
    try {
      await this.session.executeJob(job.itemId, job.stepPath, job.transition, outcome, purpose);
      this.el("job-view").hidden = true;
      this.activeJob = null;
      await this.refreshJobs();
      await this.showItem(job.itemId);
    } catch (error) {
      if (error instanceof RequestFailed) {
        if (error.body.violations) {
          showViolations(formRoot, error.body.violations);
        }
        this.el("job-error").textContent =
          error.status === 409 ? "job taken — refresh the inbox" : error.message;
        return;
      }
      throw error;
    }
  }

  async showItem(itemId: string): Promise<void> {
    if (!this.session) return;
    (this.el("item-input") as HTMLInputElement).value = itemId;
    const [item, events] = await Promise.all([
      this.session.item(itemId),
      this.session.history(itemId),
    ]);
    renderTimeline(this.el("timeline"), events);
    const workflowRoot = this.el("workflow-view");
    workflowRoot.textContent = "";
    if (item.workflow) {
      for (const layer of layerGraph(item.workflow.graph, item.workflow.states)) {
        const row = document.createElement("div");
        row.className = "dag-layer";
        for (const node of layer) {
          const cell = document.createElement("span");
          cell.className = `dag-node dag-${node.kind}`;
          cell.dataset.name = node.name;
          cell.textContent = node.state ? `${node.name} (${node.state})` : node.name;
          row.appendChild(cell);
        }
        workflowRoot.appendChild(row);
      }
      const anchors = patchAnchors(item.workflow.graph, item.workflow.states);
      if (anchors.length) {
        const hint = document.createElement("p");
        hint.className = "edit-anchors";
        hint.textContent = `editable (WAITING) steps: ${anchors.join(", ")}`;
        workflowRoot.appendChild(hint);
      }
    }
  }

  async applyPatch(itemId: string, state: Parameters<typeof buildPatch>[0]): Promise<void> {
    if (!this.session) return;
    await this.session.editWorkflow(itemId, buildPatch(state));
    await this.showItem(itemId);
  }

  async showDiff(): Promise<void> {
    if (!this.session) return;
    const descId = (this.el("diff-desc") as HTMLInputElement).value;
    const v1 = Number((this.el("diff-v1") as HTMLInputElement).value);
    const v2 = Number((this.el("diff-v2") as HTMLInputElement).value);
    const changeSet = await this.session.diff(descId, v1, v2);
    renderDiff(this.el("diff-view"), changeSet);
  }
}

export function boot(): Console {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app root");
  const consoleApp = new Console(root);
  consoleApp.mount();
  return consoleApp;
}

declare global {
  interface Window {
    itemforgeConsole?: Console;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  window.itemforgeConsole = boot();
}
