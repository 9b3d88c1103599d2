/** Rendering is pure and verbatim: every utility/mean/std from the recorded
 * API fixture must appear byte-identical in the HTML, and the full dashboard
 * snapshot is pinned. */

import assert from "node:assert/strict";
import { readFileSync } from "node:fs";
import { join } from "node:path";
import test from "node:test";

import type { DashboardState } from "../src/controller.js";
import {
  fmt,
  fmtPoint,
  renderChoiceCards,
  renderDashboard,
  renderHistoryTable,
  renderPosterior,
} from "../src/render.js";
import type { ChoicesPayload, SessionView } from "../src/types.js";

const fixturesDir = new URL("../../fixtures/", import.meta.url).pathname;

const choicesFixture = JSON.parse(
  readFileSync(join(fixturesDir, "choices.json"), "utf8"),
) as ChoicesPayload;
const sessionFixture = JSON.parse(
  readFileSync(join(fixturesDir, "session.json"), "utf8"),
) as SessionView;

test("choice cards display utilities, means and stds verbatim", () => {
  const html = renderChoiceCards(choicesFixture);
  for (const choice of choicesFixture.choices) {
    assert.ok(
      html.includes(`<dd class="utility">${fmt(choice.utility)}</dd>`),
      `utility ${choice.utility} must appear byte-identical`,
    );
    assert.ok(
      html.includes(
        `${fmt(choice.predicted_mean)} &plusmn; ${fmt(choice.predicted_std)}`,
      ),
      `mean/std pair for ${fmtPoint(choice.point)} must appear byte-identical`,
    );
    assert.ok(html.includes(fmtPoint(choice.point)));
  }
});

test("exactly one card is badged as the utility optimum", () => {
  const html = renderChoiceCards(choicesFixture);
  assert.equal(html.split('class="badge optimum"').length - 1, 1);
  assert.equal(
    html.split('class="badge alternate"').length - 1,
    choicesFixture.choices.length - 1,
  );
});

test("every choice gets a select button with its index", () => {
  const html = renderChoiceCards(choicesFixture);
  for (let i = 0; i < choicesFixture.choices.length; i++) {
    assert.ok(html.includes(`<button class="select-btn" data-index="${i}">`));
  }
});

test("history table shows observed values verbatim", () => {
  const html = renderHistoryTable(choicesFixture.history);
  for (const row of choicesFixture.history) {
    assert.ok(html.includes(`<td>${fmt(row.value)}</td>`));
  }
  assert.equal(html.split("<tr").length - 2, choicesFixture.history.length);
});

test("1-d posterior plot includes a band, mean line and candidate markers", () => {
  const html = renderPosterior(
    choicesFixture.posterior ?? [],
    choicesFixture.history,
    choicesFixture.choices,
    1,
  );
  assert.ok(html.includes('class="band"'));
  assert.ok(html.includes('class="mean-line"'));
  assert.equal(
    html.split('class="cand-').length - 1,
    choicesFixture.choices.length,
  );
  assert.equal(
    html.split('class="dot-').length - 1,
    choicesFixture.history.length,
  );
});

test("full dashboard snapshot is stable", () => {
  const state: DashboardState = {
    phase: "choose",
    session: sessionFixture,
    choices: choicesFixture,
    nextPoint: null,
    remainingInitial: null,
    summary: null,
    toast: null,
  };
  const html = renderDashboard(state);
  const snapshot = readFileSync(join(fixturesDir, "dashboard.html"), "utf8");
  assert.equal(html.trimEnd(), snapshot.trimEnd());
});

test("dashboard renders the outcome form in external mode", () => {
  const state: DashboardState = {
    phase: "report_outcome",
    session: { ...sessionFixture, mode: "external", status: "awaiting_observation" },
    choices: null,
    nextPoint: [4.25],
    remainingInitial: null,
    summary: null,
    toast: null,
  };
  const html = renderDashboard(state);
  assert.ok(html.includes("x = (4.25)"));
  assert.ok(html.includes('id="outcome-form"'));
});

test("toast messages are HTML-escaped", () => {
  const state: DashboardState = {
    phase: "working",
    session: sessionFixture,
    choices: null,
    nextPoint: null,
    remainingInitial: null,
    summary: null,
    toast: '<script>alert("x")</script>',
  };
  const html = renderDashboard(state);
  assert.ok(!html.includes("<script>"));
  assert.ok(html.includes("&lt;script&gt;"));
});
