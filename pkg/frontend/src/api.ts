/**
 * Thin typed client over the service's five endpoints. No state here;
 * retry and queueing live in events.ts. Errors carry the HTTP status
 * so callers can tell a stale event id (409) from a bad request (400)
 * from the service being down (network throw).
 */

import {
  FeedbackAck,
  FeedbackEventBody,
  MetricsSnapshot,
  PAYLOAD_V,
  ReviewCard,
  parseFeedbackAck,
  parseMetrics,
  parseReviewCard,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string
  ) {
    super(message);
  }
}

/** 409: the event id is behind the server's log head. */
export class StaleEventIdError extends ApiError {
  constructor(message: string) {
    super(409, message);
  }
}

export interface ServiceClient {
  poolVersion(): Promise<string>;
  query(text: string): Promise<ReviewCard>;
  feedback(body: FeedbackEventBody): Promise<FeedbackAck>;
  metrics(): Promise<MetricsSnapshot>;
  /** Last event id folded into the given snapshot; primes id minting. */
  lastEventId(snapshotVersion: number): Promise<number>;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function readJson(res: Response): Promise<Record<string, unknown>> {
  const data = (await res.json()) as Record<string, unknown>;
  if (!res.ok) {
    const message = String(data?.["error"] ?? res.statusText);
    if (res.status === 409) throw new StaleEventIdError(message);
    throw new ApiError(res.status, message);
  }
  return data;
}

export function httpClient(
  baseUrl: string,
  fetchFn: FetchLike = fetch
): ServiceClient {
  const base = baseUrl.replace(/\/$/, "");
  const post = (path: string, body: unknown) =>
    fetchFn(`${base}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });

  return {
    async poolVersion() {
      const data = await readJson(await fetchFn(`${base}/pool/version`));
      return String(data["pool_version"]);
    },
    async query(text) {
      const data = await readJson(await post("/query", { v: PAYLOAD_V, text }));
      return parseReviewCard(data);
    },
    async feedback(body) {
      const data = await readJson(
        await post("/feedback", { v: PAYLOAD_V, event: body })
      );
      return parseFeedbackAck(data);
    },
    async metrics() {
      const data = await readJson(await fetchFn(`${base}/model/metrics`));
      return parseMetrics(data);
    },
    async lastEventId(snapshotVersion) {
      const data = await readJson(
        await fetchFn(`${base}/snapshot/${snapshotVersion}`)
      );
      return Number(data["last_event_id"]);
    },
  };
}
