// Wire documents exchanged with the engine's HTTP API.

export interface AgentRef {
  agentItemId: string;
  name: string;
  roles: string[];
  kind: string;
}

export type FieldType = "string" | "integer" | "number" | "boolean" | "enum";

export interface FieldSpec {
  type: FieldType;
  required: boolean;
  values?: string[];
  min?: number;
  max?: number;
}

export type SchemaDef = Record<string, FieldSpec>;

export interface JobDoc {
  itemId: string;
  itemName: string;
  stepPath: string;
  transition: "Start" | "Complete" | "Suspend" | "Resume";
  requiredRole: string;
  schema: { name: string; version: number } | null;
  schemaDef?: SchemaDef;
  mode: string;
}

export interface JobsResponse {
  jobs: JobDoc[];
  cursor: number;
}

export interface EventDoc {
  itemId: string;
  seq: number;
  agentId: string;
  role: string;
  timestamp: number;
  kind: string;
  purpose: string;
  stepPath?: string;
  transition?: string;
  outcomeRef?: { schema: string; schemaVersion: number; version: number };
  payload?: Record<string, unknown>;
}

export interface Violation {
  field: string;
  code: string;
  message: string;
}

export interface ApiError {
  error: string;
  message: string;
  violations?: Violation[];
}

export interface ChangeSet {
  addedNodes: string[];
  removedNodes: string[];
  changedParams: { path: string; changes: Record<string, unknown[]> }[];
  changedEdges: { added: string[][]; removed: string[][] };
  propertyDefChanges?: { added: string[]; removed: string[]; changed: string[] };
  collectionDefChanges?: { added: string[]; removed: string[]; changed: string[] };
}

export interface GraphNodeDoc {
  kind: string;
  role?: string;
  schema?: { name: string; version: number } | null;
  mode?: string;
  params?: { name: string; value: unknown; mutable: boolean }[];
  graph?: GraphDoc;
  branches?: { predicate: unknown; to: string }[];
}

export interface GraphDoc {
  nodes: Record<string, GraphNodeDoc>;
  edges: [string, string][];
  start: string;
  ends: string[];
}

export interface WorkflowDoc {
  graph: GraphDoc;
  states: Record<string, string>;
  iterations: Record<string, number>;
}

export interface ItemDoc {
  id: string;
  lastEventSeq: number;
  properties: { name: string; value: unknown; mutable: boolean }[];
  workflow: WorkflowDoc | null;
  [key: string]: unknown;
}

export type OutcomeValue = string | number | boolean;
export type OutcomeDoc = Record<string, OutcomeValue>;
