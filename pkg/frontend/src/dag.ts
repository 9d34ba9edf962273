// Deterministic layered layout of workflow graphs: nodes grouped by longest
// path from the start, alphabetical within a layer.

import type { GraphDoc } from "./types.js";

export interface LayeredNode {
  name: string;
  kind: string;
  layer: number;
  state?: string;
}

export function layerGraph(graph: GraphDoc, states: Record<string, string> = {}): LayeredNode[][] {
  const depth: Record<string, number> = { [graph.start]: 0 };
  const incoming: Record<string, number> = {};
  for (const name of Object.keys(graph.nodes)) incoming[name] = 0;
  for (const [, to] of graph.edges) incoming[to] += 1;
  const queue = Object.keys(graph.nodes)
    .filter((n) => incoming[n] === 0)
    .sort();
  for (const n of queue) depth[n] = 0;
  const pending = { ...incoming };
  while (queue.length) {
    const here = queue.shift() as string;
    for (const [from, to] of graph.edges) {
      if (from !== here) continue;
      depth[to] = Math.max(depth[to] ?? 0, depth[here] + 1);
      pending[to] -= 1;
      if (pending[to] === 0) queue.push(to);
    }
    queue.sort();
  }
  const layers: LayeredNode[][] = [];
  for (const name of Object.keys(graph.nodes).sort()) {
    const layer = depth[name] ?? 0;
    while (layers.length <= layer) layers.push([]);
    layers[layer].push({
      name,
      kind: graph.nodes[name].kind,
      layer,
      state: states[name],
    });
  }
  return layers.filter((layer) => layer.length > 0);
}

/** Activity paths currently WAITING (eligible live-edit anchors). */
export function waitingActivities(
  graph: GraphDoc,
  states: Record<string, string>,
  prefix = "",
): string[] {
  const out: string[] = [];
  for (const name of Object.keys(graph.nodes).sort()) {
    const node = graph.nodes[name];
    const path = prefix + name;
    if (node.kind === "activity") {
      if ((states[path] ?? "WAITING") === "WAITING") out.push(path);
    } else if (node.kind === "composite" && node.graph) {
      out.push(...waitingActivities(node.graph, states, `${path}/`));
    }
  }
  return out;
}
