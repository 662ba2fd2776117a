/** Schema-driven form: field model, rendering, validation gating. */

import { describe, expect, it } from "vitest";

import {
  UNKNOWN_OPTION,
  applyValidation,
  buildFormModel,
  draftToFeatureMap,
  renderVehicleForm,
  validateDraft,
  validateField,
} from "../src/form.js";
import { schemaFixture } from "./fixtures.js";

describe("buildFormModel", () => {
  it("renders exactly the schema's columns minus target and sweep axis", () => {
    const schema = schemaFixture();
    const fields = buildFormModel(schema);
    const expected = schema.columns
      .filter((c) => c.kind !== "target" && c.name !== schema.offer_duration_column)
      .map((c) => c.name);
    expect(fields.map((f) => f.name)).toEqual(expected);
  });

  it("maps kinds to input types", () => {
    const fields = buildFormModel(schemaFixture());
    const byName = Object.fromEntries(fields.map((f) => [f.name, f]));
    expect(byName["brand"].input).toBe("select");
    expect(byName["age_years"].input).toBe("number");
    expect(byName["sale_date"].input).toBe("date");
    expect("sale_price" in byName).toBe(false);
    expect("offer_duration_days" in byName).toBe(false);
  });

  it("select options are the server vocabulary plus the unknown choice", () => {
    const schema = schemaFixture();
    const fields = buildFormModel(schema);
    const brand = fields.find((f) => f.name === "brand")!;
    expect(brand.options).toEqual([UNKNOWN_OPTION, ...schema.categories["brand"]]);
  });
});

describe("rendering", () => {
  it("creates one input per field", () => {
    const fields = buildFormModel(schemaFixture());
    const form = renderVehicleForm(document, fields, { id: "d", values: {} }, () => {});
    expect(form.querySelectorAll("select, input").length).toBe(fields.length);
  });
});

describe("validation", () => {
  it("empty required field disables submit", () => {
    const fields = buildFormModel(schemaFixture());
    const { submitEnabled, states } = validateDraft(fields, { id: "d", values: {} });
    expect(submitEnabled).toBe(false);
    expect(states["age_years"].valid).toBe(false);
  });

  it("complete draft enables submit", () => {
    const schema = schemaFixture();
    const fields = buildFormModel(schema);
    const values: Record<string, string> = {};
    for (const f of fields) {
      values[f.name] = f.input === "select" ? f.options![1] : f.input === "date" ? "2022-06-01" : "3";
    }
    const { submitEnabled } = validateDraft(fields, { id: "d", values });
    expect(submitEnabled).toBe(true);
  });

  it("rejects malformed numbers and dates", () => {
    expect(validateField({ name: "x", input: "number", required: true }, "abc").valid).toBe(false);
    expect(validateField({ name: "x", input: "date", required: true }, "06/01/2022").valid).toBe(false);
    expect(validateField({ name: "x", input: "date", required: true }, "2022-06-01").valid).toBe(true);
  });

  it("applyValidation toggles the submit button", () => {
    const fields = buildFormModel(schemaFixture());
    const form = renderVehicleForm(document, fields, { id: "d", values: {} }, () => {});
    const submit = document.createElement("button");
    const empty = validateDraft(fields, { id: "d", values: {} });
    applyValidation(form, empty.states, submit, empty.submitEnabled);
    expect(submit.disabled).toBe(true);
  });

  it("unknown selection serializes as the empty string", () => {
    const fields = buildFormModel(schemaFixture());
    const values: Record<string, string> = { brand: UNKNOWN_OPTION, age_years: "4" };
    const payload = draftToFeatureMap(fields, { id: "d", values });
    expect(payload["brand"]).toBe("");
    expect(payload["age_years"]).toBe("4");
  });
});
