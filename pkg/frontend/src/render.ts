/** Pure HTML renderers for the dashboard. Every number shown to the expert
 * is the verbatim API value (String(v), no rounding, no arithmetic); the
 * only derived geometry is plot coordinates. */

import type { DashboardState } from "./controller.js";
import type {
  ChoiceView,
  ChoicesPayload,
  HistoryRow,
  PosteriorRow,
  RunSummary,
} from "./types.js";

export const fmt = (v: number): string => String(v);

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function fmtPoint(point: number[]): string {
  return `(${point.map(fmt).join(", ")})`;
}

export function renderChoiceCards(payload: ChoicesPayload): string {
  const spans = intervalSpans(payload.choices);
  const cards = payload.choices
    .map((choice, i) => renderChoiceCard(choice, i, spans))
    .join("\n");
  const summary = payload.pareto_summary;
  const note = summary
    ? `<p class="pareto-note">front of ${summary.front_size}` +
      `${summary.degenerate ? " (degenerate, space-filling alternates)" : ""}</p>`
    : "";
  return `<section class="choices" data-iteration="${payload.iteration}">
<h2>Iteration ${payload.iteration}: pick the next experiment</h2>
${note}
<div class="cards">
${cards}
</div>
</section>`;
}

interface Span {
  lo: number;
  hi: number;
}

function intervalSpans(choices: ChoiceView[]): Span {
  // shared axis so the interval strips are comparable across cards
  let lo = Infinity;
  let hi = -Infinity;
  for (const c of choices) {
    lo = Math.min(lo, c.predicted_mean - 2 * c.predicted_std);
    hi = Math.max(hi, c.predicted_mean + 2 * c.predicted_std);
  }
  if (!(hi > lo)) {
    lo -= 1;
    hi += 1;
  }
  return { lo, hi };
}

function renderChoiceCard(choice: ChoiceView, index: number, span: Span): string {
  const isOptimum = choice.source === "utility_optimum";
  const badge = isOptimum
    ? '<span class="badge optimum">utility optimum</span>'
    : '<span class="badge alternate">alternate</span>';
  return `<article class="card ${isOptimum ? "card-optimum" : ""}" data-index="${index}">
  <header><span class="choice-no">Choice ${index + 1}</span>${badge}</header>
  <dl>
    <dt>point</dt><dd class="point">${fmtPoint(choice.point)}</dd>
    <dt>utility</dt><dd class="utility">${fmt(choice.utility)}</dd>
    <dt>predicted</dt><dd class="predicted">${fmt(choice.predicted_mean)} &plusmn; ${fmt(choice.predicted_std)}</dd>
  </dl>
  ${renderIntervalStrip(choice, span)}
  <button class="select-btn" data-index="${index}">evaluate this</button>
</article>`;
}

function renderIntervalStrip(choice: ChoiceView, span: Span): string {
  const scale = (v: number) => ((v - span.lo) / (span.hi - span.lo)) * 100;
  const left = scale(choice.predicted_mean - 2 * choice.predicted_std);
  const right = scale(choice.predicted_mean + 2 * choice.predicted_std);
  const mid = scale(choice.predicted_mean);
  return `<svg class="strip" viewBox="0 0 100 10" preserveAspectRatio="none">
    <line x1="0" y1="5" x2="100" y2="5" class="strip-axis" />
    <rect x="${left.toFixed(3)}" y="2" width="${Math.max(right - left, 0.5).toFixed(3)}" height="6" class="strip-band" />
    <line x1="${mid.toFixed(3)}" y1="0" x2="${mid.toFixed(3)}" y2="10" class="strip-mean" />
  </svg>`;
}

export function renderHistoryTable(rows: HistoryRow[]): string {
  if (rows.length === 0) {
    return '<p class="empty">no evaluations yet</p>';
  }
  const body = rows
    .map(
      (r, i) => `<tr class="${r.source}">
  <td>${i + 1}</td><td>${fmtPoint(r.point)}</td><td>${fmt(r.value)}</td><td>${r.source}</td>
</tr>`,
    )
    .join("\n");
  return `<table class="history">
<thead><tr><th>#</th><th>point</th><th>observed</th><th>source</th></tr></thead>
<tbody>
${body}
</tbody>
</table>`;
}

export function renderOutcomeForm(point: number[]): string {
  return `<section class="outcome">
<h2>Run this experiment</h2>
<p class="run-point">evaluate at <strong>x = ${fmtPoint(point)}</strong></p>
<form id="outcome-form">
  <label>measured outcome <input type="text" name="y" id="outcome-value" autocomplete="off" /></label>
  <button type="submit">submit observation</button>
</form>
</section>`;
}

export function renderInitialQueue(points: number[][]): string {
  const items = points.map((p) => `<li>${fmtPoint(p)}</li>`).join("\n");
  return `<section class="initial-queue">
<h2>Initial design</h2>
<p>measure these points first; enter outcomes one at a time (next is first in the list)</p>
<ol>
${items}
</ol>
</section>`;
}

export function renderSummary(summary: RunSummary): string {
  const regret = summary.simple_regret
    ? `<p>final simple regret: ${fmt(summary.simple_regret[summary.simple_regret.length - 1]!)}</p>`
    : "";
  return `<section class="summary">
<h2>Finished</h2>
<p>best value <strong>${fmt(summary.best_value)}</strong> at ${fmtPoint(summary.best_point)}
after ${summary.evaluations} evaluations</p>
${regret}
</section>`;
}

// ---------------------------------------------------------------------------
// posterior plots
// ---------------------------------------------------------------------------

const W = 640;
const H = 280;
const PAD = 36;

export function renderPosterior(
  rows: PosteriorRow[],
  history: HistoryRow[],
  choices: ChoiceView[] | null,
  dimension: number,
): string {
  if (rows.length === 0) return "";
  if (dimension === 1) return posterior1d(rows, history, choices);
  if (dimension === 2) return posterior2d(rows, history, choices);
  return choices ? parallelCoordinates(choices) : "";
}

function posterior1d(
  rows: PosteriorRow[],
  history: HistoryRow[],
  choices: ChoiceView[] | null,
): string {
  const xs = rows.map((r) => r.x[0]!);
  const lo = Math.min(...rows.map((r) => r.mean - 2 * r.std));
  const hi = Math.max(...rows.map((r) => r.mean + 2 * r.std));
  const yObs = history.map((h) => h.value);
  const yLo = Math.min(lo, ...yObs);
  const yHi = Math.max(hi, ...yObs);
  const sx = (x: number) =>
    PAD + ((x - xs[0]!) / (xs[xs.length - 1]! - xs[0]!)) * (W - 2 * PAD);
  const sy = (y: number) => H - PAD - ((y - yLo) / (yHi - yLo || 1)) * (H - 2 * PAD);

  const meanPath = rows
    .map((r, i) => `${i ? "L" : "M"}${sx(r.x[0]!).toFixed(1)},${sy(r.mean).toFixed(1)}`)
    .join(" ");
  const bandTop = rows.map(
    (r) => `${sx(r.x[0]!).toFixed(1)},${sy(r.mean + 2 * r.std).toFixed(1)}`,
  );
  const bandBot = rows
    .map((r) => `${sx(r.x[0]!).toFixed(1)},${sy(r.mean - 2 * r.std).toFixed(1)}`)
    .reverse();
  const evalDots = history
    .map(
      (h) =>
        `<circle cx="${sx(h.point[0]!).toFixed(1)}" cy="${sy(h.value).toFixed(1)}" r="3" class="dot-${h.source}" />`,
    )
    .join("\n");
  const candidateMarks = (choices ?? [])
    .map(
      (c) =>
        `<line x1="${sx(c.point[0]!).toFixed(1)}" y1="${PAD}" x2="${sx(c.point[0]!).toFixed(1)}" y2="${H - PAD}" class="cand-${c.source}" />`,
    )
    .join("\n");
  return `<svg class="plot" viewBox="0 0 ${W} ${H}" role="img" aria-label="posterior mean and uncertainty">
<polygon points="${[...bandTop, ...bandBot].join(" ")}" class="band" />
<path d="${meanPath}" class="mean-line" />
${candidateMarks}
${evalDots}
</svg>`;
}

function posterior2d(
  rows: PosteriorRow[],
  history: HistoryRow[],
  choices: ChoiceView[] | null,
): string {
  const xs = [...new Set(rows.map((r) => r.x[0]!))].sort((a, b) => a - b);
  const ys = [...new Set(rows.map((r) => r.x[1]!))].sort((a, b) => a - b);
  const means = rows.map((r) => r.mean);
  const stds = rows.map((r) => r.std);
  const mLo = Math.min(...means);
  const mHi = Math.max(...means);
  const sHi = Math.max(...stds, 1e-12);
  const cw = (W - 2 * PAD) / xs.length;
  const ch = (H - 2 * PAD) / ys.length;
  const sx = (x: number) =>
    PAD + ((x - xs[0]!) / (xs[xs.length - 1]! - xs[0]! || 1)) * (W - 2 * PAD - cw) ;
  const sy = (y: number) =>
    PAD + ((y - ys[0]!) / (ys[ys.length - 1]! - ys[0]! || 1)) * (H - 2 * PAD - ch);
  const cells = rows
    .map((r) => {
      const heat = (r.mean - mLo) / (mHi - mLo || 1);
      const veil = r.std / sHi; // uncertainty overlay: whiter where less known
      return `<rect x="${sx(r.x[0]!).toFixed(1)}" y="${sy(r.x[1]!).toFixed(1)}" width="${cw.toFixed(1)}" height="${ch.toFixed(1)}" fill="hsl(${(240 - heat * 240).toFixed(0)},80%,50%)" opacity="${(1 - 0.6 * veil).toFixed(3)}" />`;
    })
    .join("\n");
  const dots = history
    .map(
      (h) =>
        `<circle cx="${(sx(h.point[0]!) + cw / 2).toFixed(1)}" cy="${(sy(h.point[1]!) + ch / 2).toFixed(1)}" r="3" class="dot-${h.source}" />`,
    )
    .join("\n");
  const marks = (choices ?? [])
    .map(
      (c) =>
        `<circle cx="${(sx(c.point[0]!) + cw / 2).toFixed(1)}" cy="${(sy(c.point[1]!) + ch / 2).toFixed(1)}" r="6" class="cand-${c.source}" />`,
    )
    .join("\n");
  return `<svg class="plot" viewBox="0 0 ${W} ${H}" role="img" aria-label="posterior mean heatmap with uncertainty veil">
${cells}
${dots}
${marks}
</svg>`;
}

function parallelCoordinates(choices: ChoiceView[]): string {
  const dim = choices[0]!.point.length;
  const axes = Array.from({ length: dim }, (_, d) => {
    const x = PAD + (d / (dim - 1 || 1)) * (W - 2 * PAD);
    return `<line x1="${x.toFixed(1)}" y1="${PAD}" x2="${x.toFixed(1)}" y2="${H - PAD}" class="axis" />`;
  }).join("\n");
  const los = Array.from({ length: dim }, (_, d) =>
    Math.min(...choices.map((c) => c.point[d]!)),
  );
  const his = Array.from({ length: dim }, (_, d) =>
    Math.max(...choices.map((c) => c.point[d]!)),
  );
  const lines = choices
    .map((c) => {
      const pts = c.point
        .map((v, d) => {
          const x = PAD + (d / (dim - 1 || 1)) * (W - 2 * PAD);
          const span = his[d]! - los[d]! || 1;
          const y = H - PAD - ((v - los[d]!) / span) * (H - 2 * PAD);
          return `${x.toFixed(1)},${y.toFixed(1)}`;
        })
        .join(" ");
      return `<polyline points="${pts}" class="cand-${c.source}" fill="none" />`;
    })
    .join("\n");
  return `<svg class="plot" viewBox="0 0 ${W} ${H}" role="img" aria-label="choices across dimensions">
${axes}
${lines}
</svg>`;
}

// ---------------------------------------------------------------------------
// full dashboard
// ---------------------------------------------------------------------------

export function renderDashboard(state: DashboardState): string {
  const parts: string[] = [];
  const session = state.session;
  parts.push(renderStatusBar(state));
  if (state.toast) {
    parts.push(`<div class="toast">${escapeHtml(state.toast)}</div>`);
  }
  if (session && state.phase === "choose" && state.choices) {
    parts.push(renderChoiceCards(state.choices));
    parts.push(
      renderPosterior(
        state.choices.posterior ?? [],
        state.choices.history,
        state.choices.choices,
        session.dimension,
      ),
    );
    parts.push(`<h2>History</h2>${renderHistoryTable(state.choices.history)}`);
  } else if (state.phase === "report_outcome") {
    if (state.remainingInitial && state.remainingInitial.length > 0) {
      parts.push(renderInitialQueue(state.remainingInitial));
      parts.push(renderOutcomeForm(state.remainingInitial[0]!));
    } else if (state.nextPoint) {
      parts.push(renderOutcomeForm(state.nextPoint));
    }
  } else if (state.phase === "working") {
    parts.push('<p class="working">computing the next choice panel&hellip;</p>');
  } else if (state.phase === "done" && state.summary) {
    parts.push(renderSummary(state.summary));
  } else if (state.phase === "failed") {
    parts.push('<p class="failed">session failed; see message above</p>');
  }
  return `<div class="dashboard" data-phase="${state.phase}">
${parts.filter(Boolean).join("\n")}
</div>`;
}

function renderStatusBar(state: DashboardState): string {
  const s = state.session;
  if (!s) return '<header class="status">connecting&hellip;</header>';
  return `<header class="status" data-status="${s.status}">
<span class="sid">session ${escapeHtml(s.id)}</span>
<span class="mode">${s.mode}</span>
<span class="progress">${s.evaluations} / ${s.budget} evaluations</span>
<span class="state">${s.status.replaceAll("_", " ")}</span>
</header>`;
}
