/**
 * Feedback outbox: every user decision becomes exactly one event with
 * a client-minted monotonic id, queued locally and pushed to the
 * service in order. Retries reuse the id, so a send that actually
 * landed before the network error is deduplicated server-side and the
 * model never trains twice on one decision.
 */

import { ServiceClient, StaleEventIdError } from "./api.js";
import { DecisionKind, FeedbackAck, FeedbackEventBody } from "./types.js";

export type EntryState = "pending" | "inflight" | "acked" | "failed";

export interface OutboxEntry {
  key: string;
  body: FeedbackEventBody;
  state: EntryState;
  attempts: number;
  ack?: FeedbackAck;
  error?: string;
}

export interface DecisionInput {
  kind: DecisionKind;
  queryId: string;
  queryText: string;
  candidateId: string;
  alternateId?: string | null;
}

/** One logical decision, one key: a double-click maps to the same key. */
export function decisionKey(d: DecisionInput): string {
  return `${d.kind}|${d.queryId}|${d.candidateId}|${d.alternateId ?? ""}`;
}

export interface OutboxOptions {
  agentId?: string;
  now?: () => number;
}

export class EventOutbox {
  private entries: OutboxEntry[] = [];
  private byKey = new Map<string, OutboxEntry>();
  private nextId = 1;
  private readonly agentId: string;
  private readonly now: () => number;
  private listeners = new Set<() => void>();

  constructor(
    private readonly client: ServiceClient,
    options: OutboxOptions = {}
  ) {
    this.agentId = options.agentId ?? "ui";
    this.now = options.now ?? (() => Date.now() / 1000);
  }

  /** Start minting after the server's last known event id. */
  prime(lastEventId: number): void {
    this.nextId = Math.max(this.nextId, lastEventId + 1);
  }

  subscribe(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  all(): readonly OutboxEntry[] {
    return this.entries;
  }

  pendingCount(): number {
    return this.entries.filter(
      (e) => e.state === "pending" || e.state === "inflight"
    ).length;
  }

  /**
   * Queue one decision. Returns the entry; a repeat of the same
   * decision (same key) returns the existing entry without minting a
   * second event.
   */
  enqueue(decision: DecisionInput): OutboxEntry {
    const key = decisionKey(decision);
    const existing = this.byKey.get(key);
    if (existing && existing.state !== "failed") return existing;

    const entry: OutboxEntry = {
      key,
      state: "pending",
      attempts: 0,
      body: {
        v: 1,
        event_id: this.nextId++,
        kind: decision.kind,
        query_id: decision.queryId,
        query_text: decision.queryText,
        candidate_id: decision.candidateId,
        alternate_id: decision.alternateId ?? null,
        agent_id: this.agentId,
        ts: this.now(),
      },
    };
    this.entries.push(entry);
    this.byKey.set(key, entry);
    this.notify();
    return entry;
  }

  /**
   * Push pending entries in id order. Network failures leave the rest
   * of the queue pending for the next flush; the ids stay the same, so
   * a send that landed before the line dropped resolves as a duplicate
   * no-op on retry. A 409 means another writer advanced the log, so
   * unsent entries get fresh ids past the server's head. A duplicate
   * ack on a first attempt means another writer claimed our id before
   * we used it, so the entry never landed: re-mint and resend.
   */
  async flush(): Promise<FeedbackAck[]> {
    const acks: FeedbackAck[] = [];
    let i = 0;
    let collisions = 0;
    const queue = () => this.entries.filter((e) => e.state === "pending");

    let batch = queue();
    while (i < batch.length) {
      const entry = batch[i]!;
      entry.state = "inflight";
      entry.attempts += 1;
      this.notify();

      let ack: FeedbackAck;
      try {
        ack = await this.client.feedback(entry.body);
      } catch (err) {
        entry.state = "pending";
        if (err instanceof StaleEventIdError) {
          const before = this.nextId;
          await this.resyncIds(err.message);
          if (this.nextId > before) {
            batch = queue();
            i = 0;
            continue;
          }
        }
        entry.error = err instanceof Error ? err.message : String(err);
        this.notify();
        throw err;
      }

      if (ack.duplicate && entry.attempts === 1) {
        if (++collisions > 16) {
          entry.state = "failed";
          entry.error = "event id keeps colliding with another writer";
          this.notify();
          throw new Error(entry.error);
        }
        entry.state = "pending";
        entry.attempts = 0;
        entry.body.event_id = this.nextId++;
        continue;
      }
      entry.ack = ack;
      entry.state = "acked";
      acks.push(ack);
      i += 1;
    }
    this.notify();
    return acks;
  }

  /**
   * Re-mint ids for everything unsent, starting past the log head.
   * The 409 message names the head exactly; the snapshot endpoint is
   * the fallback (it can trail the head when the latest events were
   * log-only, so the message is preferred).
   */
  private async resyncIds(staleMessage: string): Promise<void> {
    const fromMessage = /log head (\d+)/.exec(staleMessage);
    let head: number;
    if (fromMessage) {
      head = Number(fromMessage[1]);
    } else {
      const metrics = await this.client.metrics();
      head = await this.client.lastEventId(metrics.snapshotVersion);
    }
    this.nextId = Math.max(this.nextId, head + 1);
    for (const entry of this.entries) {
      if (entry.state === "pending") {
        entry.body.event_id = this.nextId++;
      }
    }
  }
}
