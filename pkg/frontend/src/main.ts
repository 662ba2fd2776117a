/** App wiring: schema-driven form, sweep requests, comparison, decisions. */

import { PricingClient, ServiceError, SweepResponse } from "./api.js";
import {
  FieldSpec,
  VehicleDraft,
  applyValidation,
  buildFormModel,
  draftToFeatureMap,
  renderVehicleForm,
  validateDraft,
} from "./form.js";
import { renderSweepChart, SERIES_COLORS } from "./chart.js";
import {
  DEFAULT_CONFIDENCE_THRESHOLD,
  buildSweepView,
  makeRequestTracker,
} from "./sweep.js";
import { DecisionRecord, exportDecisions, importDecisions, makeDecision, outOfBand } from "./decisions.js";

const MAX_COMPARE = 3;

interface AppState {
  fields: FieldSpec[];
  draft: VehicleDraft;
  sweeps: SweepResponse[];
  normalized: boolean;
  threshold: number;
  decisions: DecisionRecord[];
  modelVersion: string;
}

function el<T extends HTMLElement>(doc: Document, id: string): T {
  const found = doc.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

export async function startApp(doc: Document, client: PricingClient): Promise<void> {
  const banner = el<HTMLDivElement>(doc, "banner");
  const formHost = el<HTMLDivElement>(doc, "form-host");
  const chartHost = el<HTMLDivElement>(doc, "chart-host");
  const submit = el<HTMLButtonElement>(doc, "run-sweep");
  const normalizedToggle = el<HTMLInputElement>(doc, "normalized-toggle");
  const thresholdInput = el<HTMLInputElement>(doc, "confidence-threshold");
  const clearButton = el<HTMLButtonElement>(doc, "clear-sweeps");
  const legend = el<HTMLUListElement>(doc, "legend");
  const decisionPrice = el<HTMLInputElement>(doc, "decision-price");
  const decisionDuration = el<HTMLInputElement>(doc, "decision-duration");
  const decisionSave = el<HTMLButtonElement>(doc, "save-decision");
  const decisionWarning = el<HTMLSpanElement>(doc, "decision-warning");
  const exportButton = el<HTMLButtonElement>(doc, "export-decisions");
  const importInput = el<HTMLInputElement>(doc, "import-decisions");
  const decisionList = el<HTMLUListElement>(doc, "decision-list");

  const state: AppState = {
    fields: [],
    draft: { id: "draft-1", values: {} },
    sweeps: [],
    normalized: false,
    threshold: DEFAULT_CONFIDENCE_THRESHOLD,
    decisions: [],
    modelVersion: "",
  };
  const tracker = makeRequestTracker<SweepResponse>();

  async function loadSchema(): Promise<void> {
    banner.textContent = "";
    banner.classList.remove("error");
    try {
      const schema = await client.schema();
      const meta = await client.model();
      state.modelVersion = meta.model_version;
      state.fields = buildFormModel(schema);
      formHost.textContent = "";
      const form = renderVehicleForm(doc, state.fields, state.draft, (name, value) => {
        state.draft.values[name] = value;
        const { states, submitEnabled } = validateDraft(state.fields, state.draft);
        applyValidation(form, states, submit, submitEnabled);
      });
      formHost.appendChild(form);
      const { states, submitEnabled } = validateDraft(state.fields, state.draft);
      applyValidation(form, states, submit, submitEnabled);
    } catch (e) {
      banner.classList.add("error");
      banner.textContent = "pricing service unreachable — ";
      const retry = doc.createElement("button");
      retry.textContent = "retry";
      retry.addEventListener("click", () => void loadSchema());
      banner.appendChild(retry);
      console.error(e);
    }
  }

  function redraw(): void {
    const views = state.sweeps.map((s) => buildSweepView(s, state.normalized, state.threshold));
    chartHost.innerHTML = renderSweepChart(views);
    legend.textContent = "";
    state.sweeps.forEach((s, i) => {
      const item = doc.createElement("li");
      item.style.color = SERIES_COLORS[i % SERIES_COLORS.length];
      item.textContent = `${s.vehicle_id} (model ${s.model_version.slice(0, 8)})`;
      legend.appendChild(item);
    });
  }

  function redrawDecisions(): void {
    decisionList.textContent = "";
    for (const d of state.decisions) {
      const item = doc.createElement("li");
      item.textContent = `${d.vehicle_id}: ${d.chosen_price} @ ${d.chosen_duration}d (${d.timestamp})`;
      decisionList.appendChild(item);
    }
  }

  submit.addEventListener("click", async (ev) => {
    ev.preventDefault();
    const requestId = tracker.nextId();
    const vehicle = draftToFeatureMap(state.fields, state.draft);
    try {
      const sweep = await client.sweep(vehicle, undefined, `vehicle-${requestId}`);
      if (!tracker.resolve(requestId, sweep)) return; // superseded in flight
      state.sweeps.push(sweep);
      if (state.sweeps.length > MAX_COMPARE) state.sweeps.shift();
      redraw();
    } catch (e) {
      if (e instanceof ServiceError && e.rows) {
        banner.classList.add("error");
        banner.textContent = `row validation failed: ${e.message}`;
      } else {
        banner.classList.add("error");
        banner.textContent = String(e);
      }
    }
  });

  normalizedToggle.addEventListener("change", () => {
    state.normalized = normalizedToggle.checked;
    redraw();
  });
  thresholdInput.value = String(state.threshold);
  thresholdInput.addEventListener("change", () => {
    const v = Number(thresholdInput.value);
    if (Number.isFinite(v) && v > 0 && v < 1) state.threshold = v;
    redraw();
  });
  clearButton.addEventListener("click", () => {
    state.sweeps = [];
    redraw();
  });

  decisionSave.addEventListener("click", () => {
    const latest = state.sweeps[state.sweeps.length - 1];
    if (!latest) return;
    const price = Number(decisionPrice.value);
    const duration = Number(decisionDuration.value);
    if (!Number.isFinite(price) || !Number.isFinite(duration)) return;
    const record = makeDecision(
      latest.vehicle_id,
      draftToFeatureMap(state.fields, state.draft),
      price,
      duration,
      state.modelVersion,
    );
    decisionWarning.textContent = outOfBand(record, latest)
      ? "warning: chosen price is outside mu ± 3 sigma at that duration"
      : "";
    state.decisions.push(record);
    redrawDecisions();
  });

  exportButton.addEventListener("click", () => {
    const blob = new Blob([exportDecisions(state.decisions)], { type: "application/json" });
    const a = doc.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "pricing-decisions.json";
    a.click();
    URL.revokeObjectURL(a.href);
  });

  importInput.addEventListener("change", async () => {
    const file = importInput.files?.[0];
    if (!file) return;
    state.decisions = importDecisions(await file.text());
    redrawDecisions();
  });

  await loadSchema();
}

declare global {
  interface Window {
    __PROBSAINT_BASE_URL__?: string;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined" && document.getElementById("form-host")) {
  const base = window.__PROBSAINT_BASE_URL__ ?? "";
  void startApp(document, new PricingClient(base));
}
