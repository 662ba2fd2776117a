/** Recorded service responses (raw bytes from the live /v1 endpoints). */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { SchemaDoc, SweepResponse, PredictResponse, ModelMeta } from "../src/api.js";

const here = dirname(fileURLToPath(import.meta.url));

export function fixtureText(name: string): string {
  return readFileSync(join(here, "fixtures", name), "utf-8");
}

export const schemaFixture = (): SchemaDoc => JSON.parse(fixtureText("schema.json"));
export const sweepFixture = (): SweepResponse => JSON.parse(fixtureText("sweep.json"));
export const predictFixture = (): PredictResponse => JSON.parse(fixtureText("predict.json"));
export const modelFixture = (): ModelMeta => JSON.parse(fixtureText("model.json"));
export const vehicleFixture = (): Record<string, string> => JSON.parse(fixtureText("vehicle.json"));

/** A fetch stub that replays the recorded bytes for each endpoint. */
export function fixtureFetch(): typeof fetch {
  return (async (input: RequestInfo | URL) => {
    const url = String(input);
    const body = url.endsWith("/healthz")
      ? "ok"
      : url.endsWith("/v1/schema")
        ? fixtureText("schema.json")
        : url.endsWith("/v1/model")
          ? fixtureText("model.json")
          : url.endsWith("/v1/sweep")
            ? fixtureText("sweep.json")
            : url.endsWith("/v1/predict")
              ? fixtureText("predict.json")
              : null;
    if (body === null) return new Response("not found", { status: 404 });
    return new Response(body, { status: 200, headers: { "content-type": "application/json" } });
  }) as typeof fetch;
}
