/**
 * End-to-end feedback integrity over a scripted session: 50 decisions
 * of mixed kinds, every click doubled, the network dropped twice, and
 * one ack lost after the server recorded. The service must end up with
 * exactly 50 deduplicated events, the chart must mirror the metrics
 * endpoint, and a model moving underneath a served card must surface
 * the refresh prompt.
 */

import { describe, expect, it } from "vitest";

import { EventOutbox } from "../src/events.js";
import { renderQueue } from "../src/render.js";
import { ReviewSession } from "../src/store.js";
import { MetricsSnapshot } from "../src/types.js";
import { MockService, SAMPLE_POOL } from "./mock.js";

const SCRIPT = [
  "accept",
  "prefer",
  "plain-reject",
  "label-similar",
  "label-dissimilar",
] as const;

async function flushWithRetries(outbox: EventOutbox, tries = 4): Promise<void> {
  for (let attempt = 0; attempt < tries; attempt++) {
    try {
      await outbox.flush();
      return;
    } catch {
      // connectivity hiccup: queue intact, try again
    }
  }
  throw new Error("outbox never drained");
}

describe("feedback integrity", () => {
  it("50 doubled decisions land as exactly 50 events", async () => {
    const server = new MockService(SAMPLE_POOL);
    const outbox = new EventOutbox(server, { agentId: "scripted" });
    const session = new ReviewSession(outbox);
    const polled: MetricsSnapshot[] = [];

    for (let i = 0; i < 50; i++) {
      const base = SAMPLE_POOL[i % SAMPLE_POOL.length]!;
      const card = await server.query(`${base.text} lot ${i}`);
      session.addCard(card);
      const q = card.queryId;

      const step = SCRIPT[i % SCRIPT.length]!;
      if (step === "accept") {
        session.accept(q);
        session.accept(q); // double click
      } else if (step === "prefer") {
        session.reject(q);
        session.reject(q);
        session.preferRevealed(q);
        session.preferRevealed(q);
      } else if (step === "plain-reject") {
        session.reject(q);
        session.rejectRevealed(q);
        session.rejectRevealed(q);
      } else if (step === "label-similar") {
        session.labelSimilar(q);
        session.labelSimilar(q);
      } else {
        session.labelDissimilar(q);
        session.labelDissimilar(q);
      }

      if (i === 17) server.failNextFeedback = 1; // clean network drop
      if (i === 33) server.loseAckAfterRecording = 1; // recorded, ack lost
      await flushWithRetries(outbox);

      if ((i + 1) % 10 === 0) {
        const m = await server.metrics();
        polled.push(m);
        session.recordMetrics(m);
      }
    }

    // exactly one server-side event per decision, in log order
    expect(server.log).toHaveLength(50);
    const ids = server.log.map((e) => e.event_id);
    expect(new Set(ids).size).toBe(50);
    expect(ids).toEqual([...ids].sort((a, b) => a - b));

    const byKind = new Map<string, number>();
    for (const e of server.log) {
      byKind.set(e.kind, (byKind.get(e.kind) ?? 0) + 1);
    }
    expect(byKind.get("accept")).toBe(10);
    expect(byKind.get("prefer_alternate")).toBe(10);
    expect(byKind.get("reject")).toBe(10);
    expect(byKind.get("label_similar")).toBe(10);
    expect(byKind.get("label_dissimilar")).toBe(10);

    // every prefer event names the alternate that forms the triple
    for (const e of server.log) {
      if (e.kind === "prefer_alternate") expect(e.alternate_id).toBeTruthy();
      else expect(e.alternate_id).toBeNull();
    }

    // the chart is exactly what the metrics endpoint said, poll by poll
    expect(session.chart).toHaveLength(polled.length);
    session.chart.forEach((point, i) => {
      const m = polled[i]!;
      expect(point.eventsTotal).toBe(m.eventsTotal);
      expect(point.snapshotVersion).toBe(m.snapshotVersion);
      expect(point.rankerPrecision).toBe(m.ranker.precision);
      expect(point.classifierPrecision).toBe(m.classifier.precision);
    });
    const final = polled[polled.length - 1]!;
    expect(final.eventsTotal).toBe(50);
    expect(final.snapshotVersion).toBe(30); // 10 prefers + 20 labels
  });

  it("a model update underneath a served card prompts a refresh", async () => {
    const server = new MockService(SAMPLE_POOL);
    const outbox = new EventOutbox(server, { agentId: "this-tab" });
    const session = new ReviewSession(outbox);

    session.addCard(await server.query("sunflower oil 2 lt"));
    expect(renderQueue(session)).not.toContain('data-action="refresh"');

    // a different agent trains the model while our card sits open
    const other = new EventOutbox(server, { agentId: "other-tab" });
    const otherSession = new ReviewSession(other);
    const theirs = await server.query("coconut oil 1 lt");
    otherSession.addCard(theirs);
    otherSession.reject(theirs.queryId);
    otherSession.preferRevealed(theirs.queryId);
    await other.flush();

    session.recordMetrics(await server.metrics());
    expect(session.needsRefresh).toBe(true);
    expect(renderQueue(session)).toContain('data-action="refresh"');
  });
});
