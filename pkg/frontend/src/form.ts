/** Schema-driven vehicle form: field model, validation, DOM rendering.
 * No column names are hardcoded; the form works for any trained checkpoint. */

import type { SchemaDoc } from "./api.js";

export const UNKNOWN_OPTION = "(unknown)";

export interface FieldSpec {
  name: string;
  input: "select" | "number" | "date";
  options?: string[];
  required: boolean;
}

export interface VehicleDraft {
  id: string;
  values: Record<string, string>;
}

/** Columns become inputs by kind; the target is never entered and the
 * offer-duration column is excluded (it is the sweep axis). */
export function buildFormModel(schema: SchemaDoc): FieldSpec[] {
  const fields: FieldSpec[] = [];
  for (const col of schema.columns) {
    if (col.kind === "target") continue;
    if (schema.offer_duration_column && col.name === schema.offer_duration_column) continue;
    if (col.kind === "categorical") {
      fields.push({
        name: col.name,
        input: "select",
        options: [UNKNOWN_OPTION, ...(schema.categories[col.name] ?? [])],
        required: false,
      });
    } else if (col.kind === "numeric") {
      fields.push({ name: col.name, input: "number", required: true });
    } else {
      fields.push({ name: col.name, input: "date", required: true });
    }
  }
  return fields;
}

export interface FieldState {
  valid: boolean;
  message: string;
}

export function validateField(field: FieldSpec, raw: string): FieldState {
  const value = raw.trim();
  if (value === "" || value === UNKNOWN_OPTION) {
    return field.required
      ? { valid: false, message: "required" }
      : { valid: true, message: "" };
  }
  if (field.input === "number") {
    return Number.isFinite(Number(value))
      ? { valid: true, message: "" }
      : { valid: false, message: "not a number" };
  }
  if (field.input === "date") {
    return /^\d{4}-\d{2}-\d{2}$/.test(value) && !Number.isNaN(Date.parse(value))
      ? { valid: true, message: "" }
      : { valid: false, message: "expected YYYY-MM-DD" };
  }
  return { valid: true, message: "" };
}

export function validateDraft(
  fields: FieldSpec[],
  draft: VehicleDraft,
): { states: Record<string, FieldState>; submitEnabled: boolean } {
  const states: Record<string, FieldState> = {};
  let submitEnabled = true;
  for (const field of fields) {
    const state = validateField(field, draft.values[field.name] ?? "");
    states[field.name] = state;
    if (!state.valid) submitEnabled = false;
  }
  return { states, submitEnabled };
}

/** Serialize the draft as a /v1 feature map. Unknown selections and empty
 * optional fields are sent as empty strings (the service's unknown/missing
 * convention). */
export function draftToFeatureMap(
  fields: FieldSpec[],
  draft: VehicleDraft,
): Record<string, string> {
  const out: Record<string, string> = {};
  for (const field of fields) {
    const raw = (draft.values[field.name] ?? "").trim();
    out[field.name] = raw === UNKNOWN_OPTION ? "" : raw;
  }
  return out;
}

export function renderVehicleForm(
  doc: Document,
  fields: FieldSpec[],
  draft: VehicleDraft,
  onChange: (name: string, value: string) => void,
): HTMLFormElement {
  const form = doc.createElement("form");
  form.className = "vehicle-form";
  for (const field of fields) {
    const label = doc.createElement("label");
    label.textContent = field.name;
    label.htmlFor = `field-${field.name}`;
    let input: HTMLInputElement | HTMLSelectElement;
    if (field.input === "select") {
      input = doc.createElement("select");
      for (const option of field.options ?? []) {
        const el = doc.createElement("option");
        el.value = option;
        el.textContent = option;
        input.appendChild(el);
      }
    } else {
      input = doc.createElement("input");
      input.type = field.input === "number" ? "number" : "date";
    }
    input.id = `field-${field.name}`;
    input.name = field.name;
    input.value = draft.values[field.name] ?? "";
    input.addEventListener("change", () => onChange(field.name, input.value));
    const row = doc.createElement("div");
    row.className = "form-row";
    row.appendChild(label);
    row.appendChild(input);
    const note = doc.createElement("span");
    note.className = "field-note";
    note.dataset.field = field.name;
    row.appendChild(note);
    form.appendChild(row);
  }
  return form;
}

export function applyValidation(
  form: HTMLFormElement,
  states: Record<string, FieldState>,
  submit: HTMLButtonElement,
  submitEnabled: boolean,
): void {
  for (const [name, state] of Object.entries(states)) {
    const note = form.querySelector<HTMLSpanElement>(`span[data-field="${name}"]`);
    if (note) {
      note.textContent = state.message;
      note.classList.toggle("invalid", !state.valid);
    }
  }
  submit.disabled = !submitEnabled;
}
