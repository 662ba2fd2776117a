/** Analyst decision records: chosen price and duration per vehicle, exported
 * as JSON for audit and re-importable without loss. */

import type { SweepResponse } from "./api.js";

export interface DecisionRecord {
  vehicle_id: string;
  vehicle: Record<string, string>;
  chosen_price: number;
  chosen_duration: number;
  model_version: string;
  timestamp: string;
}

export function makeDecision(
  vehicleId: string,
  vehicle: Record<string, string>,
  chosenPrice: number,
  chosenDuration: number,
  modelVersion: string,
  timestamp: string = new Date().toISOString(),
): DecisionRecord {
  return {
    vehicle_id: vehicleId,
    vehicle: { ...vehicle },
    chosen_price: chosenPrice,
    chosen_duration: chosenDuration,
    model_version: modelVersion,
    timestamp,
  };
}

export function exportDecisions(records: DecisionRecord[]): string {
  return JSON.stringify({ format: "probsaint-decisions/1", records }, null, 2);
}

export function importDecisions(text: string): DecisionRecord[] {
  const doc = JSON.parse(text);
  if (doc?.format !== "probsaint-decisions/1" || !Array.isArray(doc.records)) {
    throw new Error("not a decision-record export");
  }
  for (const r of doc.records) {
    for (const key of [
      "vehicle_id",
      "vehicle",
      "chosen_price",
      "chosen_duration",
      "model_version",
      "timestamp",
    ]) {
      if (!(key in r)) throw new Error(`decision record missing ${key}`);
    }
  }
  return doc.records as DecisionRecord[];
}

/** A price outside mu +/- 3 sigma at the nearest swept duration is suspect.
 * Pure client-side arithmetic on the service payload. */
export function outOfBand(record: DecisionRecord, sweep: SweepResponse): boolean {
  let best = 0;
  for (let i = 1; i < sweep.durations.length; i++) {
    if (
      Math.abs(sweep.durations[i] - record.chosen_duration) <
      Math.abs(sweep.durations[best] - record.chosen_duration)
    ) {
      best = i;
    }
  }
  const mu = sweep.mu[best];
  const sigma = sweep.sigma[best];
  return Math.abs(record.chosen_price - mu) > 3 * sigma;
}
