// Schema-driven outcome forms: one input per schema field, generated from the
// wire schema document. Descriptions are created at runtime, so forms must be
// too; there are no per-type hand-built forms.

import type { OutcomeDoc, SchemaDef, Violation } from "./types.js";
import { validateOutcome } from "./validate.js";

export type InputKind = "text" | "numeric" | "checkbox" | "select";

export interface FieldModel {
  name: string;
  kind: InputKind;
  required: boolean;
  options?: string[]; // select only
  min?: number;
  max?: number;
  integer?: boolean;
}

/** Field order is the schema's lexicographic field order: deterministic and
 * identical to the engine's violation ordering. */
export function formModel(schema: SchemaDef): FieldModel[] {
  return Object.keys(schema)
    .sort()
    .map((name) => {
      const spec = schema[name];
      if (spec.type === "boolean") {
        return { name, kind: "checkbox" as const, required: spec.required };
      }
      if (spec.type === "enum") {
        return {
          name,
          kind: "select" as const,
          required: spec.required,
          options: spec.values ?? [],
        };
      }
      if (spec.type === "integer" || spec.type === "number") {
        return {
          name,
          kind: "numeric" as const,
          required: spec.required,
          min: spec.min,
          max: spec.max,
          integer: spec.type === "integer",
        };
      }
      return { name, kind: "text" as const, required: spec.required };
    });
}

/** Raw input values as the DOM yields them: strings, plus booleans from
 * checkboxes. Empty optional inputs are omitted from the document. */
export type RawFill = Record<string, string | boolean>;

export function collectOutcome(model: FieldModel[], fill: RawFill): OutcomeDoc {
  const doc: OutcomeDoc = {};
  for (const field of model) {
    const raw = fill[field.name];
    if (field.kind === "checkbox") {
      if (typeof raw === "boolean") doc[field.name] = raw;
      continue;
    }
    if (raw === undefined || raw === "") continue;
    if (field.kind === "numeric" && typeof raw === "string") {
      const parsed = field.integer ? parseInt(raw, 10) : parseFloat(raw);
      doc[field.name] = Number.isNaN(parsed) ? raw : parsed;
    } else {
      doc[field.name] = raw as string;
    }
  }
  return doc;
}

export interface FormCheck {
  document: OutcomeDoc;
  violations: Violation[];
  ok: boolean;
}

/** Client-side pre-check mirroring the server; a submit is only sent when it
 * passes, and server 422 violations render inline through the same shape. */
export function checkFill(schema: SchemaDef, fill: RawFill): FormCheck {
  const document = collectOutcome(formModel(schema), fill);
  const violations = validateOutcome(document, schema);
  return { document, violations, ok: violations.length === 0 };
}

export function renderForm(
  container: HTMLElement,
  schema: SchemaDef,
  doc: Document = window.document,
): void {
  container.textContent = "";
  for (const field of formModel(schema)) {
    const row = doc.createElement("label");
    row.className = "form-row";
    row.dataset.field = field.name;
    const caption = doc.createElement("span");
    caption.textContent = field.required ? `${field.name} *` : field.name;
    row.appendChild(caption);
    let input: HTMLElement;
    if (field.kind === "select") {
      const select = doc.createElement("select");
      select.name = field.name;
      const blank = doc.createElement("option");
      blank.value = "";
      blank.textContent = "—";
      select.appendChild(blank);
      for (const option of field.options ?? []) {
        const el = doc.createElement("option");
        el.value = option;
        el.textContent = option;
        select.appendChild(el);
      }
      input = select;
    } else if (field.kind === "checkbox") {
      const box = doc.createElement("input");
      box.type = "checkbox";
      box.name = field.name;
      input = box;
    } else {
      const text = doc.createElement("input");
      text.type = field.kind === "numeric" ? "number" : "text";
      text.name = field.name;
      if (field.min !== undefined) text.min = String(field.min);
      if (field.max !== undefined) text.max = String(field.max);
      if (field.integer) text.step = "1";
      input = text;
    }
    input.classList.add("form-input");
    row.appendChild(input);
    const note = doc.createElement("em");
    note.className = "violation";
    row.appendChild(note);
    container.appendChild(row);
  }
}

export function readFill(container: HTMLElement): RawFill {
  const fill: RawFill = {};
  container.querySelectorAll<HTMLElement>(".form-input").forEach((el) => {
    const input = el as HTMLInputElement | HTMLSelectElement;
    if (input instanceof HTMLInputElement && input.type === "checkbox") {
      fill[input.name] = input.checked;
    } else {
      fill[input.name] = input.value;
    }
  });
  return fill;
}

export function showViolations(container: HTMLElement, violations: Violation[]): void {
  container.querySelectorAll<HTMLElement>(".violation").forEach((el) => {
    el.textContent = "";
  });
  for (const violation of violations) {
    const row = container.querySelector<HTMLElement>(
      `[data-field="${violation.field}"] .violation`,
    );
    if (row) row.textContent = violation.message;
  }
}
