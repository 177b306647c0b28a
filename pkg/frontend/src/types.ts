/**
 * Wire types for the match service HTTP API, plus the parsed domain
 * shapes the UI works with. Every payload in both directions carries
 * "v": 1; parsers reject anything else so a schema drift fails loudly
 * instead of rendering garbage.
 */

export const PAYLOAD_V = 1;

export class SchemaError extends Error {}

export type DecisionKind =
  | "accept"
  | "reject"
  | "prefer_alternate"
  | "label_similar"
  | "label_dissimilar";

/** Kinds that change model weights and therefore the snapshot version. */
export const MODEL_UPDATE_KINDS: readonly DecisionKind[] = [
  "prefer_alternate",
  "label_similar",
  "label_dissimilar",
];

export interface CandidateView {
  id: string;
  text: string;
  score: number;
  rank: number;
}

/** One served query, mirroring the /query response field for field. */
export interface ReviewCard {
  queryId: string;
  queryText: string;
  best: CandidateView;
  alternates: CandidateView[];
  gatePassed: boolean;
  poolVersion: string;
  snapshotVersion: number;
}

/** Wire shape of a feedback event; keys as the server expects them. */
export interface FeedbackEventBody {
  v: number;
  event_id: number;
  kind: DecisionKind;
  query_id: string;
  query_text: string;
  candidate_id: string;
  alternate_id: string | null;
  agent_id: string;
  ts: number;
}

export interface FeedbackAck {
  exampleKind: "none" | "triple" | "pair";
  snapshotVersion: number;
  duplicate: boolean;
}

export interface SideMetrics {
  seen: number;
  correct: number;
  precision: number;
}

export interface MetricsSnapshot {
  snapshotVersion: number;
  poolVersion: string;
  eventsTotal: number;
  accepts: number;
  rejects: number;
  ranker: SideMetrics;
  classifier: SideMetrics;
}

function expectV(data: Record<string, unknown>, where: string): void {
  if (data["v"] !== PAYLOAD_V) {
    throw new SchemaError(`${where}: unsupported payload version ${data["v"]}`);
  }
}

function candidate(raw: unknown, where: string): CandidateView {
  const c = raw as Record<string, unknown>;
  if (
    typeof c?.["id"] !== "string" ||
    typeof c?.["text"] !== "string" ||
    typeof c?.["score"] !== "number" ||
    typeof c?.["rank"] !== "number"
  ) {
    throw new SchemaError(`${where}: malformed candidate`);
  }
  return { id: c["id"], text: c["text"], score: c["score"], rank: c["rank"] };
}

export function parseReviewCard(data: Record<string, unknown>): ReviewCard {
  expectV(data, "query response");
  if (typeof data["query_id"] !== "string" || !data["query_id"]) {
    throw new SchemaError("query response: missing query_id");
  }
  return {
    queryId: data["query_id"],
    queryText: String(data["query_text"]),
    best: candidate(data["best"], "query response"),
    alternates: (data["alternates"] as unknown[]).map((a) =>
      candidate(a, "query response")
    ),
    gatePassed: Boolean(data["gate_passed"]),
    poolVersion: String(data["pool_version"]),
    snapshotVersion: Number(data["snapshot_version"]),
  };
}

export function parseFeedbackAck(data: Record<string, unknown>): FeedbackAck {
  expectV(data, "feedback ack");
  return {
    exampleKind: data["example_kind"] as FeedbackAck["exampleKind"],
    snapshotVersion: Number(data["snapshot_version"]),
    duplicate: Boolean(data["duplicate"]),
  };
}

function side(raw: unknown, where: string): SideMetrics {
  const s = raw as Record<string, unknown>;
  if (
    typeof s?.["seen"] !== "number" ||
    typeof s?.["correct"] !== "number" ||
    typeof s?.["precision"] !== "number"
  ) {
    throw new SchemaError(`${where}: malformed side metrics`);
  }
  return { seen: s["seen"], correct: s["correct"], precision: s["precision"] };
}

export function parseMetrics(data: Record<string, unknown>): MetricsSnapshot {
  expectV(data, "metrics");
  return {
    snapshotVersion: Number(data["snapshot_version"]),
    poolVersion: String(data["pool_version"]),
    eventsTotal: Number(data["events_total"]),
    accepts: Number(data["accepts"]),
    rejects: Number(data["rejects"]),
    ranker: side(data["ranker"], "metrics"),
    classifier: side(data["classifier"], "metrics"),
  };
}
