/**
 * HTML rendering as pure string functions so views are testable
 * without a browser. main.ts owns the live DOM and event wiring;
 * everything here is (state) -> markup, with data-action attributes
 * as the contract between the two.
 */

import { CardState, ChartPoint, ReviewSession } from "./store.js";
import { CandidateView } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function pct(x: number): string {
  return `${(100 * x).toFixed(1)}%`;
}

function button(action: string, queryId: string, label: string): string {
  return (
    `<button data-action="${action}" data-query="${escapeHtml(queryId)}">` +
    `${label}</button>`
  );
}

function candidateRow(c: CandidateView, tag: string): string {
  return (
    `<div class="candidate ${tag}">` +
    `<span class="rank">#${c.rank}</span> ` +
    `<span class="text">${escapeHtml(c.text)}</span> ` +
    `<span class="score">${c.score.toFixed(4)}</span>` +
    `</div>`
  );
}

export function renderCard(state: CardState): string {
  const { card } = state;
  const rows: string[] = [
    `<div class="query">${escapeHtml(card.queryText)}</div>`,
    candidateRow(card.best, "best"),
  ];
  if (!card.gatePassed) {
    rows.push(`<div class="gate-warning">weak match, gate not passed</div>`);
  }
  if (state.phase === "deciding") {
    rows.push(
      `<div class="actions">` +
        button("accept", card.queryId, "Accept") +
        button("reject", card.queryId, "Reject") +
        button("label-similar", card.queryId, "Similar") +
        button("label-dissimilar", card.queryId, "Not similar") +
        `</div>`
    );
  } else if (state.phase === "revealing" && state.revealed) {
    rows.push(
      `<div class="alternate">How about this one instead?</div>`,
      candidateRow(state.revealed, "revealed"),
      `<div class="actions">` +
        button("prefer-revealed", card.queryId, "Prefer this one") +
        button("reject-revealed", card.queryId, "Neither") +
        `</div>`
    );
  } else {
    rows.push(`<div class="decided">${state.decision}</div>`);
  }
  return `<article class="card ${state.phase}">${rows.join("")}</article>`;
}

export interface QueueViewOptions {
  serviceDown?: boolean;
}

export function renderQueue(
  session: ReviewSession,
  options: QueueViewOptions = {}
): string {
  const banners: string[] = [];
  if (options.serviceDown) {
    banners.push(
      `<div class="banner error">service unreachable, retrying` +
        ` (${session.pendingEvents} unsent)</div>`
    );
  }
  if (session.needsRefresh) {
    banners.push(
      `<div class="banner stale">the model moved on, refresh to` +
        ` re-rank pending cards` +
        ` <button data-action="refresh">Refresh</button></div>`
    );
  }
  if (session.cards.length === 0) {
    return (
      banners.join("") +
      `<div class="empty">nothing waiting for review</div>`
    );
  }
  return banners.join("") + session.cards.map(renderCard).join("");
}

/** Inline SVG of server-reported precision per poll; no chart deps. */
export function renderChart(points: readonly ChartPoint[]): string {
  if (points.length === 0) {
    return `<div class="empty chart-empty">no feedback yet</div>`;
  }
  const w = 320;
  const h = 96;
  const xs = (i: number) =>
    points.length === 1 ? w / 2 : (i / (points.length - 1)) * w;
  const ys = (p: number) => h - p * h;
  const line = (pick: (p: ChartPoint) => number) =>
    points.map((p, i) => `${xs(i).toFixed(1)},${ys(pick(p)).toFixed(1)}`)
      .join(" ");
  const last = points[points.length - 1]!;
  return (
    `<svg viewBox="0 0 ${w} ${h}" class="chart" data-points="${points.length}">` +
    `<polyline class="ranker" fill="none" points="${line((p) => p.rankerPrecision)}" />` +
    `<polyline class="classifier" fill="none" points="${line((p) => p.classifierPrecision)}" />` +
    `</svg>` +
    `<div class="chart-legend">ranker ${pct(last.rankerPrecision)}, ` +
    `classifier ${pct(last.classifierPrecision)} ` +
    `after ${last.eventsTotal} events</div>`
  );
}
