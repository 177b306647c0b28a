/**
 * Browser bootstrap: wires the store, outbox, and renderers to the
 * real DOM and the real service. Kept as thin glue; everything with
 * behavior worth testing lives in the other modules.
 */

import { httpClient } from "./api.js";
import { EventOutbox } from "./events.js";
import { renderChart, renderQueue } from "./render.js";
import { AlternateStrategy, ReviewSession } from "./store.js";

const baseUrl =
  new URLSearchParams(location.search).get("service") ??
  "http://127.0.0.1:8400";

const client = httpClient(baseUrl);
const outbox = new EventOutbox(client, {
  agentId: `ui-${Math.random().toString(36).slice(2, 8)}`,
});
const session = new ReviewSession(outbox);

const queueEl = document.getElementById("queue")!;
const chartEl = document.getElementById("chart")!;
const statusEl = document.getElementById("status")!;
const inputEl = document.getElementById("query-input") as HTMLTextAreaElement;
const strategyEl = document.getElementById("strategy") as HTMLSelectElement;

let serviceDown = false;

function redraw(): void {
  queueEl.innerHTML = renderQueue(session, { serviceDown });
  chartEl.innerHTML = renderChart(session.chart);
  statusEl.textContent =
    `snapshot v${session.serverSnapshot}` +
    (session.pendingEvents ? `, ${session.pendingEvents} unsent` : "");
}

async function pushFeedback(): Promise<void> {
  try {
    const acks = await outbox.flush();
    for (const ack of acks) session.recordAck(ack.snapshotVersion);
    serviceDown = false;
  } catch {
    serviceDown = true; // queue is intact, the poll loop retries
  }
  redraw();
}

async function queueQueries(): Promise<void> {
  const lines = inputEl.value.split("\n").map((s) => s.trim()).filter(Boolean);
  inputEl.value = "";
  for (const line of lines) {
    try {
      session.addCard(await client.query(line));
      serviceDown = false;
    } catch {
      serviceDown = true;
    }
  }
  redraw();
}

document.addEventListener("click", (ev) => {
  const target = (ev.target as HTMLElement).closest<HTMLElement>(
    "[data-action]"
  );
  if (!target) return;
  const action = target.dataset["action"]!;
  const queryId = target.dataset["query"] ?? "";
  if (action === "queue") void queueQueries();
  else if (action === "refresh") location.reload();
  else if (action === "accept") session.accept(queryId);
  else if (action === "reject") session.reject(queryId);
  else if (action === "prefer-revealed") session.preferRevealed(queryId);
  else if (action === "reject-revealed") session.rejectRevealed(queryId);
  else if (action === "label-similar") session.labelSimilar(queryId);
  else if (action === "label-dissimilar") session.labelDissimilar(queryId);
  void pushFeedback();
});

strategyEl.addEventListener("change", () => {
  session.strategy = strategyEl.value as AlternateStrategy;
});

async function poll(): Promise<void> {
  try {
    session.recordMetrics(await client.metrics());
    serviceDown = false;
  } catch {
    serviceDown = true;
  }
  if (outbox.pendingCount() > 0) await pushFeedback();
  redraw();
}

async function start(): Promise<void> {
  try {
    const metrics = await client.metrics();
    outbox.prime(await client.lastEventId(metrics.snapshotVersion));
    session.recordMetrics(metrics);
  } catch {
    serviceDown = true;
  }
  redraw();
  setInterval(() => void poll(), 3000);
}

void start();
