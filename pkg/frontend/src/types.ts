// Payload shapes of the labeling service. The console renders these verbatim
// and never computes scores or rules locally.

export interface Progress {
  session_id: string;
  status: "active" | "completed";
  budget: number;
  queries_made: number;
  anomalies_seen: number;
  curve: number[];
}

export interface BatchDetail {
  instance_id: number;
  features: number[];
  score: number;
  rules_text: string;
}

export interface QueryPayload {
  session_id: string;
  status: "active" | "completed";
  instance_id?: number;
  features?: number[];
  feature_names?: string[];
  score?: number;
  rules?: { disjuncts: { f: number; op: string; thr: number }[][] };
  rules_text?: string;
  batch?: number[];
  batch_details?: BatchDetail[];
  progress: Progress;
}

export type Label = "anomaly" | "nominal";

function isNumberArray(v: unknown): v is number[] {
  return Array.isArray(v) && v.every((x) => typeof x === "number" && Number.isFinite(x));
}

export function validateProgress(v: unknown): Progress {
  const p = v as Progress;
  if (
    !p ||
    typeof p.budget !== "number" ||
    typeof p.queries_made !== "number" ||
    typeof p.anomalies_seen !== "number" ||
    !isNumberArray(p.curve) ||
    (p.status !== "active" && p.status !== "completed")
  ) {
    throw new Error("malformed progress payload");
  }
  return p;
}

export function validateQuery(v: unknown): QueryPayload {
  const q = v as QueryPayload;
  if (!q || (q.status !== "active" && q.status !== "completed")) {
    throw new Error("malformed query payload");
  }
  validateProgress(q.progress);
  if (q.status === "active") {
    if (
      typeof q.instance_id !== "number" ||
      !isNumberArray(q.features) ||
      typeof q.rules_text !== "string" ||
      typeof q.score !== "number"
    ) {
      throw new Error("malformed query payload");
    }
  }
  return q;
}
