/** Typed client for the pricing service (/v1). The UI never computes model
 * math: every mu/sigma/confidence it shows comes out of these payloads. */

export interface SchemaColumn {
  name: string;
  kind: "categorical" | "numeric" | "date" | "target" | "sale_date";
  missing_placeholder?: number;
}

export interface SchemaDoc {
  columns: SchemaColumn[];
  reference_date: string;
  target: string;
  sale_date: string;
  categories: Record<string, string[]>;
  offer_duration_column: string | null;
}

export interface Prediction {
  mu: number;
  sigma: number;
  confidence: number | null;
  excluded_flag: boolean;
}

export interface PredictResponse {
  predictions: Prediction[];
  model_version: string;
}

export interface SweepResponse {
  vehicle_id: string;
  durations: number[];
  mu: number[];
  sigma: number[];
  mu_normalized: number[] | null;
  confidence: (number | null)[];
  model_version: string;
}

export interface ModelMeta {
  model_version: string;
  model_kind: string;
  config: Record<string, unknown>;
  objective: string;
  train_data_fingerprint: string;
}

export class ServiceError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly rows?: number[],
  ) {
    super(message);
  }
}

async function parseOrThrow<T>(resp: Response): Promise<T> {
  const text = await resp.text();
  if (!resp.ok) {
    let message = `service error ${resp.status}`;
    let rows: number[] | undefined;
    try {
      const doc = JSON.parse(text);
      if (typeof doc.error === "string") message = doc.error;
      if (Array.isArray(doc.rows)) rows = doc.rows;
    } catch {
      /* non-JSON error body; keep the generic message */
    }
    throw new ServiceError(message, resp.status, rows);
  }
  return JSON.parse(text) as T;
}

export class PricingClient {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async health(): Promise<boolean> {
    try {
      const resp = await this.fetchFn(this.url("/healthz"));
      return resp.ok;
    } catch {
      return false;
    }
  }

  schema(): Promise<SchemaDoc> {
    return this.fetchFn(this.url("/v1/schema")).then((r) => parseOrThrow<SchemaDoc>(r));
  }

  model(): Promise<ModelMeta> {
    return this.fetchFn(this.url("/v1/model")).then((r) => parseOrThrow<ModelMeta>(r));
  }

  predict(rows: Record<string, string>[]): Promise<PredictResponse> {
    return this.fetchFn(this.url("/v1/predict"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ rows }),
    }).then((r) => parseOrThrow<PredictResponse>(r));
  }

  sweep(
    vehicle: Record<string, string>,
    durations?: number[],
    vehicleId?: string,
  ): Promise<SweepResponse> {
    const body: Record<string, unknown> = { vehicle };
    if (durations) body.durations = durations;
    if (vehicleId) body.vehicle_id = vehicleId;
    return this.fetchFn(this.url("/v1/sweep"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    }).then((r) => parseOrThrow<SweepResponse>(r));
  }
}
