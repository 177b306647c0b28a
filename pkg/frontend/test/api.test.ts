import { describe, expect, it } from "vitest";

import { ApiError, httpClient, StaleEventIdError } from "../src/api.js";
import { SchemaError } from "../src/types.js";

function fakeFetch(
  handler: (url: string, init?: RequestInit) => { status: number; body: unknown }
) {
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  const fetchFn = async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    const { status, body } = handler(url, init);
    return {
      ok: status >= 200 && status < 300,
      status,
      statusText: `status ${status}`,
      json: async () => body,
    } as Response;
  };
  return { fetchFn, calls };
}

const CARD_PAYLOAD = {
  v: 1,
  query_id: "q1",
  query_text: "tres ker",
  best: { id: "po1", text: "TRES 0.739L CD KER Smth", score: 0.8, rank: 1 },
  alternates: [
    { id: "po2", text: "Tres Soya Smooth Conditioner", score: 0.5, rank: 2 },
  ],
  gate_passed: true,
  pool_version: "abc123",
  snapshot_version: 4,
};

describe("httpClient", () => {
  it("parses a query response into a card", async () => {
    const { fetchFn, calls } = fakeFetch(() => ({
      status: 200,
      body: CARD_PAYLOAD,
    }));
    const client = httpClient("http://svc:8400/", fetchFn);
    const card = await client.query("tres ker");
    expect(card.queryId).toBe("q1");
    expect(card.best.id).toBe("po1");
    expect(card.alternates).toHaveLength(1);
    expect(card.snapshotVersion).toBe(4);
    // trailing slash trimmed, payload stamped v1
    expect(calls[0]!.url).toBe("http://svc:8400/query");
    expect(JSON.parse(String(calls[0]!.init?.body))).toEqual({
      v: 1,
      text: "tres ker",
    });
  });

  it("maps 409 to the stale id error with the server message", async () => {
    const { fetchFn } = fakeFetch(() => ({
      status: 409,
      body: { v: 1, error: "event id 3 is behind the log head 9" },
    }));
    const client = httpClient("http://svc:8400", fetchFn);
    await expect(
      client.feedback({
        v: 1,
        event_id: 3,
        kind: "accept",
        query_id: "q1",
        query_text: "x",
        candidate_id: "po1",
        alternate_id: null,
        agent_id: "t",
        ts: 0,
      })
    ).rejects.toThrow(StaleEventIdError);
  });

  it("maps other failures to ApiError with the status", async () => {
    const { fetchFn } = fakeFetch(() => ({
      status: 400,
      body: { v: 1, error: "empty query text" },
    }));
    const client = httpClient("http://svc:8400", fetchFn);
    const failure = client.query("   ");
    await expect(failure).rejects.toThrow(ApiError);
    await expect(failure).rejects.toThrow("empty query text");
  });

  it("rejects payloads with a different schema version", async () => {
    const { fetchFn } = fakeFetch(() => ({
      status: 200,
      body: { ...CARD_PAYLOAD, v: 2 },
    }));
    const client = httpClient("http://svc:8400", fetchFn);
    await expect(client.query("tres")).rejects.toThrow(SchemaError);
  });

  it("reads the event log head out of a snapshot", async () => {
    const { fetchFn, calls } = fakeFetch(() => ({
      status: 200,
      body: { v: 1, kind: "service_snapshot", version: 7, last_event_id: 31 },
    }));
    const client = httpClient("http://svc:8400", fetchFn);
    expect(await client.lastEventId(7)).toBe(31);
    expect(calls[0]!.url).toBe("http://svc:8400/snapshot/7");
  });
});
