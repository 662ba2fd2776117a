/** Sweep view-model: mu line, +/- sigma band, normalized toggle, confidence flags.
 * Pure transforms of the service payload; toggling is lossless. */

import type { SweepResponse } from "./api.js";

export const DEFAULT_CONFIDENCE_THRESHOLD = 0.9;

export interface SweepView {
  vehicleId: string;
  durations: number[];
  /** plotted line: mu (raw) or mu / mu[0] (normalized) */
  line: number[];
  bandLo: number[];
  bandHi: number[];
  confidence: (number | null)[];
  lowConfidence: boolean[];
  normalized: boolean;
  modelVersion: string;
}

export function buildSweepView(
  resp: SweepResponse,
  normalized: boolean,
  confidenceThreshold: number = DEFAULT_CONFIDENCE_THRESHOLD,
): SweepView {
  const anchor = resp.mu[0];
  if (normalized && !(anchor > 0 || anchor < 0)) {
    throw new Error("cannot normalize a sweep whose first price is 0");
  }
  const scale = normalized ? 1 / anchor : 1;
  const line = normalized && resp.mu_normalized ? [...resp.mu_normalized] : resp.mu.map((m) => m * scale);
  const bandLo = resp.mu.map((m, i) => (m - resp.sigma[i]) * scale);
  const bandHi = resp.mu.map((m, i) => (m + resp.sigma[i]) * scale);
  return {
    vehicleId: resp.vehicle_id,
    durations: [...resp.durations],
    line,
    bandLo,
    bandHi,
    confidence: [...resp.confidence],
    lowConfidence: resp.confidence.map((c) => c === null || c < confidenceThreshold),
    normalized,
    modelVersion: resp.model_version,
  };
}

/** Band ordering must hold pointwise for any valid payload. */
export function bandIsOrdered(view: SweepView): boolean {
  return view.line.every((v, i) => view.bandLo[i] <= v && v <= view.bandHi[i]);
}

export interface SweepRequestTracker<T> {
  nextId(): number;
  resolve(id: number, value: T): boolean;
}

/** Match concurrent in-flight sweeps by client-side request id; stale
 * responses (superseded by a newer request) are dropped. */
export function makeRequestTracker<T>(): SweepRequestTracker<T> {
  let counter = 0;
  let latest = 0;
  return {
    nextId() {
      counter += 1;
      latest = counter;
      return counter;
    },
    resolve(id: number): boolean {
      return id === latest;
    },
  };
}
