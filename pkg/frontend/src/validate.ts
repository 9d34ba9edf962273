// Client-side mirror of the engine's closed-world outcome validation.
// It only improves feedback latency; the server remains the authority and
// re-validates every submission.

import type { FieldSpec, OutcomeDoc, OutcomeValue, SchemaDef, Violation } from "./types.js";

function checkValue(spec: FieldSpec, value: OutcomeValue): Violation | null {
  const t = spec.type;
  if (t === "string") {
    if (typeof value !== "string") {
      return { field: "", code: "type_mismatch", message: "expected string" };
    }
    return null;
  }
  if (t === "boolean") {
    if (typeof value !== "boolean") {
      return { field: "", code: "type_mismatch", message: "expected boolean" };
    }
    return null;
  }
  if (t === "enum") {
    if (typeof value !== "string" || !(spec.values ?? []).includes(value)) {
      const allowed = (spec.values ?? []).join(",");
      return { field: "", code: "enum_violation", message: `expected one of ${allowed}` };
    }
    return null;
  }
  if (typeof value !== "number" || Number.isNaN(value) || typeof value === "boolean") {
    return { field: "", code: "type_mismatch", message: `expected ${t}` };
  }
  if (t === "integer" && !Number.isInteger(value)) {
    return { field: "", code: "type_mismatch", message: "expected integer" };
  }
  if (spec.min !== undefined && value < spec.min) {
    return { field: "", code: "bounds_violation", message: `below minimum ${spec.min}` };
  }
  if (spec.max !== undefined && value > spec.max) {
    return { field: "", code: "bounds_violation", message: `above maximum ${spec.max}` };
  }
  return null;
}

/** Every required field present, every present field well-typed and in
 * bounds, and no undeclared fields (closed world). */
export function validateOutcome(content: OutcomeDoc, schema: SchemaDef): Violation[] {
  const violations: Violation[] = [];
  for (const field of Object.keys(schema).sort()) {
    if (schema[field].required && !(field in content)) {
      violations.push({
        field,
        code: "missing_required",
        message: `missing required field ${field}`,
      });
    }
  }
  for (const field of Object.keys(content).sort()) {
    const spec = schema[field];
    if (spec === undefined) {
      violations.push({
        field,
        code: "undeclared_field",
        message: `undeclared field ${field}`,
      });
      continue;
    }
    const problem = checkValue(spec, content[field]);
    if (problem) violations.push({ ...problem, field });
  }
  return violations;
}
