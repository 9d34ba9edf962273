// View models and DOM renderers for the inbox, timeline and diff views.
// Renderers are plain functions over documents so they can be exercised
// against fixtures without a server.

import type { ChangeSet, EventDoc, JobDoc } from "./types.js";

export interface InboxRow {
  itemId: string;
  itemName: string;
  stepPath: string;
  transition: string;
  hasForm: boolean;
}

export function inboxRows(jobs: JobDoc[]): InboxRow[] {
  return jobs.map((job) => ({
    itemId: job.itemId,
    itemName: job.itemName,
    stepPath: job.stepPath,
    transition: job.transition,
    hasForm: job.transition === "Complete" && !!job.schemaDef,
  }));
}

export function renderInbox(
  container: HTMLElement,
  jobs: JobDoc[],
  onSelect: (job: JobDoc) => void,
  doc: Document = window.document,
): void {
  container.textContent = "";
  if (jobs.length === 0) {
    const empty = doc.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "No jobs for your roles right now.";
    container.appendChild(empty);
    return;
  }
  const table = doc.createElement("table");
  table.className = "inbox";
  for (const [index, row] of inboxRows(jobs).entries()) {
    const tr = doc.createElement("tr");
    tr.className = "job-row";
    tr.dataset.step = row.stepPath;
    tr.dataset.item = row.itemId;
    tr.dataset.transition = row.transition;
    for (const text of [row.itemName, row.stepPath, row.transition]) {
      const td = doc.createElement("td");
      td.textContent = text;
      tr.appendChild(td);
    }
    tr.addEventListener("click", () => onSelect(jobs[index]));
    table.appendChild(tr);
  }
  container.appendChild(table);
}

export interface TimelineRow {
  seq: number;
  when: string;
  agentId: string;
  role: string;
  kind: string;
  stepPath: string;
  transition: string;
  purpose: string;
}

export function timelineRows(events: EventDoc[]): TimelineRow[] {
  return [...events]
    .sort((a, b) => a.seq - b.seq)
    .map((event) => ({
      seq: event.seq,
      when: new Date(event.timestamp).toISOString(),
      agentId: event.agentId,
      role: event.role,
      kind: event.kind,
      stepPath: event.stepPath ?? "",
      transition: event.transition ?? "",
      purpose: event.purpose ?? "",
    }));
}

export function renderTimeline(
  container: HTMLElement,
  events: EventDoc[],
  doc: Document = window.document,
): void {
  container.textContent = "";
  const table = doc.createElement("table");
  table.className = "timeline";
  for (const row of timelineRows(events)) {
    const tr = doc.createElement("tr");
    tr.className = "timeline-row";
    tr.dataset.seq = String(row.seq);
    tr.dataset.kind = row.kind;
    tr.dataset.transition = row.transition;
    for (const text of [
      String(row.seq),
      row.when,
      row.agentId.slice(0, 8),
      row.role,
      row.kind,
      row.stepPath,
      row.transition,
      row.purpose,
    ]) {
      const td = doc.createElement("td");
      td.textContent = text;
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
  container.appendChild(table);
}

export interface DiffViewModel {
  added: string[];
  removed: string[];
  changed: string[];
}

export function diffView(changeSet: ChangeSet): DiffViewModel {
  return {
    added: [...changeSet.addedNodes].sort(),
    removed: [...changeSet.removedNodes].sort(),
    changed: changeSet.changedParams.map((c) => c.path).sort(),
  };
}

export function renderDiff(
  container: HTMLElement,
  changeSet: ChangeSet,
  doc: Document = window.document,
): void {
  container.textContent = "";
  const model = diffView(changeSet);
  const sections: [string, string[], string][] = [
    ["added", model.added, "diff-added"],
    ["removed", model.removed, "diff-removed"],
    ["changed", model.changed, "diff-changed"],
  ];
  for (const [label, names, cls] of sections) {
    const block = doc.createElement("div");
    block.className = cls;
    const head = doc.createElement("h4");
    head.textContent = `${label} (${names.length})`;
    block.appendChild(head);
    for (const name of names) {
      const li = doc.createElement("div");
      li.className = "diff-node";
      li.dataset.node = name;
      li.textContent = name;
      block.appendChild(li);
    }
    container.appendChild(block);
  }
}
