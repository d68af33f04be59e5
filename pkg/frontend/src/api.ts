// Typed client for the prediction service. Every response is validated
// against its schema before anything downstream may touch it, and every
// exchange (request plus parsed response) is appended to a log so the UI's
// rendered numbers stay traceable to a concrete server reply.

import { z } from "zod";

export const eventSchema = z.object({
  t: z.number(),
  y: z.number().nullish(),
  a: z.string().nullish(),
});

export const traceSummarySchema = z.object({
  id: z.string(),
  tau: z.number(),
  default_cut: z.number(),
  n_outcomes: z.number(),
  n_actions: z.number(),
});

export const traceListSchema = z.object({
  model_id: z.string(),
  traces: z.array(traceSummarySchema),
});

export const traceDetailSchema = z.object({
  id: z.string(),
  tau: z.number(),
  default_cut: z.number(),
  events: z.array(eventSchema),
});

export const modelInfoSchema = z.object({
  model_id: z.string(),
  n_components: z.number(),
  weights: z.array(z.number()),
  action_types: z.array(z.string()),
  has_event_action_model: z.boolean(),
});

export const predictResponseSchema = z
  .object({
    times: z.array(z.number()),
    mean: z.array(z.number()),
    lower95: z.array(z.number()),
    upper95: z.array(z.number()),
    class_log_posterior: z.array(z.number()),
    model_id: z.string(),
  })
  .refine(
    (r) => r.mean.length === r.times.length
      && r.lower95.length === r.times.length
      && r.upper95.length === r.times.length,
    { message: "prediction arrays must share one length" },
  );

export type TraceEvent = z.infer<typeof eventSchema>;
export type TraceSummary = z.infer<typeof traceSummarySchema>;
export type TraceDetail = z.infer<typeof traceDetailSchema>;
export type ModelInfo = z.infer<typeof modelInfoSchema>;
export type PredictResponse = z.infer<typeof predictResponseSchema>;

export interface PlannedActionBody {
  type: string;
  time: number;
}

export interface PredictRequest {
  history: { events: TraceEvent[]; cut_time: number };
  plan: { actions: PlannedActionBody[] };
  query_times: number[];
  mode: "mixture" | "map_class";
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export interface ExchangeLogEntry {
  kind: "model" | "traces" | "trace" | "predict";
  request: unknown;
  response: unknown;
}

const errorBodySchema = z.object({
  error: z.string(),
  message: z.string().optional(),
});

async function messageFrom(response: Response): Promise<string> {
  try {
    const body = errorBodySchema.parse(await response.json());
    return body.message ? `${body.error}: ${body.message}` : body.error;
  } catch {
    return `request failed with status ${response.status}`;
  }
}

export class ApiClient {
  readonly log: ExchangeLogEntry[] = [];
  private readonly fetchImpl: typeof fetch;

  constructor(
    private readonly baseUrl: string = "",
    fetchImpl?: typeof fetch,
  ) {
    // Bind here: an unbound window.fetch throws "illegal invocation".
    this.fetchImpl = fetchImpl ?? ((...args) => fetch(...args));
  }

  private async getJson(path: string): Promise<unknown> {
    const response = await this.fetchImpl(this.baseUrl + path);
    if (!response.ok) {
      throw new ApiError(response.status, await messageFrom(response));
    }
    return response.json();
  }

  async getModel(): Promise<ModelInfo> {
    const parsed = modelInfoSchema.parse(await this.getJson("/api/model"));
    this.log.push({ kind: "model", request: "/api/model", response: parsed });
    return parsed;
  }

  async listTraces(): Promise<TraceSummary[]> {
    const parsed = traceListSchema.parse(await this.getJson("/api/traces"));
    this.log.push({ kind: "traces", request: "/api/traces", response: parsed });
    return parsed.traces;
  }

  async getTrace(id: string): Promise<TraceDetail> {
    const path = `/api/trace/${encodeURIComponent(id)}`;
    const parsed = traceDetailSchema.parse(await this.getJson(path));
    this.log.push({ kind: "trace", request: path, response: parsed });
    return parsed;
  }

  async predict(request: PredictRequest): Promise<PredictResponse> {
    const response = await this.fetchImpl(this.baseUrl + "/api/predict", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
    if (!response.ok) {
      throw new ApiError(response.status, await messageFrom(response));
    }
    const parsed = predictResponseSchema.parse(await response.json());
    this.log.push({ kind: "predict", request, response: parsed });
    return parsed;
  }
}
