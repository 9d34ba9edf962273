// Structured live-edit form: the console offers the four patch operations on
// WAITING steps only as guidance; the server is the authority and rejects
// anything touching executed steps.

import type { GraphDoc } from "./types.js";
import { waitingActivities } from "./dag.js";

export interface PatchFormState {
  op: "insertActivity" | "removeActivity" | "setActivityParams";
  anchor: string;
  name?: string;
  role?: string;
  params?: { name: string; value: string }[];
}

export function patchAnchors(graph: GraphDoc, states: Record<string, string>): string[] {
  return waitingActivities(graph, states);
}

export function buildPatch(state: PatchFormState): Record<string, unknown> {
  const segments = state.anchor.split("/");
  const leaf = segments.pop() as string;
  const parent = segments.join("/");
  if (state.op === "insertActivity") {
    return {
      op: "insertActivity",
      parentPath: parent,
      name: state.name ?? "",
      before: leaf,
      definition: {
        kind: "activity",
        role: state.role ?? "",
        mode: "manual",
        schema: null,
        params: [],
      },
    };
  }
  if (state.op === "removeActivity") {
    return { op: "removeActivity", path: state.anchor };
  }
  return {
    op: "setActivityParams",
    path: state.anchor,
    params: (state.params ?? []).map((p) => ({
      name: p.name,
      value: p.value,
      mutable: true,
    })),
  };
}
