// Pure HTML renderers for the console views; snapshot-tested against golden
// service payloads. All content comes from the payloads verbatim.

import { renderChart } from "./chart.js";
import { BatchDetail, Progress, QueryPayload } from "./types.js";

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function featureTable(names: string[], values: number[]): string {
  const rows = values
    .map((v, i) => `<tr><td>${esc(names[i] ?? `x${i}`)}</td><td>${v.toFixed(6)}</td></tr>`)
    .join("");
  return `<table class="features"><thead><tr><th>feature</th><th>value</th></tr></thead><tbody>${rows}</tbody></table>`;
}

export function renderRules(rulesText: string | undefined): string {
  if (!rulesText || rulesText === "false") {
    return `<p class="rules-empty">no description available</p>`;
  }
  const rows = rulesText
    .split(" or ")
    .map((disjunct) => `<li class="rule-row"><code>${esc(disjunct)}</code></li>`)
    .join("");
  return `<ul class="rules">${rows}</ul>`;
}

function batchStrip(details: BatchDetail[], pendingId: number): string {
  if (details.length <= 1) return "";
  const cards = details
    .map(
      (d) => `
<div class="batch-card${d.instance_id === pendingId ? " pending" : ""}">
  <div class="batch-id">#${d.instance_id}</div>
  <div class="batch-score">score ${d.score.toFixed(4)}</div>
  ${renderRules(d.rules_text)}
</div>`,
    )
    .join("");
  return `<section class="batch-strip"><h3>query batch</h3>${cards}</section>`;
}

export function renderQuery(payload: QueryPayload): string {
  if (payload.status === "completed") {
    const p = payload.progress;
    return `
<section class="query completed">
  <h2>session complete</h2>
  <p class="summary">${p.anomalies_seen} anomalies found in ${p.queries_made} queries (budget ${p.budget}).</p>
  <button class="label-btn" data-label="anomaly" disabled>anomaly</button>
  <button class="label-btn" data-label="nominal" disabled>nominal</button>
</section>`;
  }
  const names = payload.feature_names ?? [];
  return `
<section class="query active" data-instance="${payload.instance_id}">
  <h2>instance #${payload.instance_id}</h2>
  <p class="score">score ${payload.score!.toFixed(6)}</p>
  ${featureTable(names, payload.features!)}
  <h3>description</h3>
  ${renderRules(payload.rules_text)}
  ${batchStrip(payload.batch_details ?? [], payload.instance_id!)}
  <button class="label-btn" data-label="anomaly">anomaly</button>
  <button class="label-btn" data-label="nominal">nominal</button>
</section>`;
}

export function renderProgress(progress: Progress): string {
  return `
<section class="progress">
  <h2>progress</h2>
  <p>${progress.queries_made} / ${progress.budget} queries, ${progress.anomalies_seen} anomalies</p>
  ${renderChart(progress)}
</section>`;
}

export function renderError(message: string): string {
  return `<div class="banner error">service error: ${esc(message)}</div>`;
}
