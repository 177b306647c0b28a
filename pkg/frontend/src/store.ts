/**
 * Review session state. Cards arrive from /query responses, decisions
 * go out through the outbox, and everything the view needs is derived
 * from those two plus the latest metrics poll. No DOM in here.
 */

import { EventOutbox, OutboxEntry } from "./events.js";
import {
  CandidateView,
  DecisionKind,
  MetricsSnapshot,
  ReviewCard,
} from "./types.js";

export type CardPhase = "deciding" | "revealing" | "done";

/** How the alternate is chosen when the agent rejects the best match. */
export type AlternateStrategy = "second_best" | "uniform_random";

export interface CardState {
  card: ReviewCard;
  phase: CardPhase;
  /** Set while phase is "revealing": the candidate offered instead. */
  revealed?: CandidateView;
  /** Terminal decision kind once phase is "done". */
  decision?: DecisionKind;
}

export interface ChartPoint {
  eventsTotal: number;
  snapshotVersion: number;
  rankerPrecision: number;
  classifierPrecision: number;
}

export interface SessionOptions {
  strategy?: AlternateStrategy;
  /** Injectable for deterministic uniform_random tests. */
  random?: () => number;
}

export class ReviewSession {
  private states: CardState[] = [];
  private byQuery = new Map<string, CardState>();
  private chartPoints: ChartPoint[] = [];
  strategy: AlternateStrategy;
  /** Highest snapshot version seen in any service response. */
  serverSnapshot = 0;
  /** Pool fingerprint of the first card; a later mismatch forces reload. */
  private poolVersion: string | null = null;
  poolChanged = false;
  private readonly random: () => number;

  constructor(
    private readonly outbox: EventOutbox,
    options: SessionOptions = {}
  ) {
    this.strategy = options.strategy ?? "second_best";
    this.random = options.random ?? Math.random;
  }

  get cards(): readonly CardState[] {
    return this.states;
  }

  card(queryId: string): CardState {
    const state = this.byQuery.get(queryId);
    if (!state) throw new Error(`unknown card ${queryId}`);
    return state;
  }

  addCard(card: ReviewCard): CardState {
    const state: CardState = { card, phase: "deciding" };
    this.states.push(state);
    this.byQuery.set(card.queryId, state);
    this.observeSnapshot(card.snapshotVersion);
    if (this.poolVersion === null) this.poolVersion = card.poolVersion;
    else if (this.poolVersion !== card.poolVersion) this.poolChanged = true;
    return state;
  }

  private observeSnapshot(version: number): void {
    if (version > this.serverSnapshot) this.serverSnapshot = version;
  }

  /** A card served under an older model than the server now runs. */
  isStale(state: CardState): boolean {
    return state.phase !== "done" &&
      state.card.snapshotVersion < this.serverSnapshot;
  }

  /** True when any undecided card should be re-queried before judging. */
  get needsRefresh(): boolean {
    return this.poolChanged || this.states.some((s) => this.isStale(s));
  }

  /**
   * Terminal transition. A repeat of the decision already taken (the
   * double-click case: the second click lands before any re-render) is
   * absorbed by the outbox's key dedup and mints no second event; a
   * conflicting decision on a decided card is a bug and throws.
   */
  private decide(
    state: CardState,
    kind: DecisionKind,
    candidateId: string,
    alternateId?: string | null
  ): OutboxEntry {
    if (state.phase === "done" && state.decision !== kind) {
      throw new Error("card already decided");
    }
    const entry = this.outbox.enqueue({
      kind,
      queryId: state.card.queryId,
      queryText: state.card.queryText,
      candidateId,
      alternateId,
    });
    state.phase = "done";
    state.decision = kind;
    return entry;
  }

  /** The best match is right: one accept event, nothing revealed. */
  accept(queryId: string): OutboxEntry {
    const state = this.card(queryId);
    return this.decide(state, "accept", state.card.best.id);
  }

  /**
   * The best match is wrong. No event yet: reveal an alternate and let
   * the agent pick, so the whole interaction stays a single event. A
   * card with no alternates degrades to a plain reject immediately.
   * Re-clicking while revealed keeps the same alternate.
   */
  reject(queryId: string): OutboxEntry | null {
    const state = this.card(queryId);
    if (state.phase === "revealing") return null;
    if (state.phase === "done") {
      return this.decide(state, "reject", state.card.best.id);
    }
    const alternate = this.pickAlternate(state.card);
    if (!alternate) {
      return this.decide(state, "reject", state.card.best.id);
    }
    state.phase = "revealing";
    state.revealed = alternate;
    return null;
  }

  /** The revealed alternate is the right match: one preference event. */
  preferRevealed(queryId: string): OutboxEntry {
    const state = this.card(queryId);
    if (!state.revealed) throw new Error("nothing revealed for this card");
    return this.decide(
      state,
      "prefer_alternate",
      state.card.best.id,
      state.revealed.id
    );
  }

  /** Neither the best nor the alternate fits: one reject event. */
  rejectRevealed(queryId: string): OutboxEntry {
    const state = this.card(queryId);
    if (!state.revealed) throw new Error("nothing revealed for this card");
    return this.decide(state, "reject", state.card.best.id);
  }

  labelSimilar(queryId: string): OutboxEntry {
    const state = this.card(queryId);
    return this.decide(state, "label_similar", state.card.best.id);
  }

  labelDissimilar(queryId: string): OutboxEntry {
    const state = this.card(queryId);
    return this.decide(state, "label_dissimilar", state.card.best.id);
  }

  private pickAlternate(card: ReviewCard): CandidateView | null {
    if (card.alternates.length === 0) return null;
    if (this.strategy === "second_best") return card.alternates[0]!;
    const i = Math.floor(this.random() * card.alternates.length);
    return card.alternates[Math.min(i, card.alternates.length - 1)]!;
  }

  /** Fold a feedback ack: the server's version may have moved. */
  recordAck(snapshotVersion: number): void {
    this.observeSnapshot(snapshotVersion);
  }

  /** One chart point per metrics poll; values are the server's own. */
  recordMetrics(m: MetricsSnapshot): void {
    this.observeSnapshot(m.snapshotVersion);
    this.chartPoints.push({
      eventsTotal: m.eventsTotal,
      snapshotVersion: m.snapshotVersion,
      rankerPrecision: m.ranker.precision,
      classifierPrecision: m.classifier.precision,
    });
  }

  get chart(): readonly ChartPoint[] {
    return this.chartPoints;
  }

  get pendingEvents(): number {
    return this.outbox.pendingCount();
  }
}
