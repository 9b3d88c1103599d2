/** Integration against the real service: the dashboard completes full
 * select -> observe -> next-choices cycles in both modes, and a service
 * restart resumes with the identical pending choice set. */

import assert from "node:assert/strict";
import test from "node:test";

import { SessionApi } from "../src/api.js";
import { SessionController } from "../src/controller.js";
import { renderDashboard } from "../src/render.js";
import { demoPayload, FAST_SOLVER, startService } from "./helpers.js";

const POLL_MS = 100;

test("demo mode: select advances to the next choice panel", async () => {
  const service = await startService();
  try {
    const api = new SessionApi(service.baseUrl);
    const session = await api.createSession(demoPayload());
    const controller = new SessionController(api, session.id, POLL_MS);

    let state = await controller.waitForActionable();
    assert.equal(state.phase, "choose");
    assert.equal(state.choices?.choices.length, 4);
    const before = state.choices!;
    assert.equal(state.session?.evaluations, 4);

    state = await controller.select(1);
    state = await controller.waitForActionable();
    assert.equal(state.phase, "choose");
    assert.equal(state.choices?.iteration, before.iteration + 1);
    assert.equal(state.session?.evaluations, 5);
    // the observed outcome of the selected point entered the history
    const selected = state.choices!.history.filter((h) => h.source === "selected");
    assert.equal(selected.length, 1);
    assert.deepEqual(selected[0]!.point, before.choices[1]!.point);
  } finally {
    await service.stop();
  }
});

test("external mode: initial design, selection, outcome entry, next panel", async () => {
  const service = await startService();
  try {
    const api = new SessionApi(service.baseUrl);
    const session = await api.createSession({
      mode: "external",
      bounds: { lower: [0], upper: [10] },
      budget: 6,
      seed: 9,
      ...FAST_SOLVER,
    });
    const controller = new SessionController(api, session.id, POLL_MS);

    let state = await controller.waitForActionable();
    assert.equal(state.phase, "report_outcome");
    assert.equal(state.remainingInitial?.length, 4);

    // the expert measures the four initial points (a known toy objective)
    const f = (x: number) => -Math.abs(x - 6.3);
    for (let i = 0; i < 4; i++) {
      const point = controller.current().remainingInitial?.[0] ??
        controller.current().nextPoint!;
      state = await controller.observe(f(point[0]!));
      state = await controller.waitForActionable();
    }
    assert.equal(state.phase, "choose");
    const panel = state.choices!;
    assert.equal(panel.choices.length, 4);

    // select an alternate, report its outcome, and get the next panel
    state = await controller.select(2);
    assert.equal(state.phase, "report_outcome");
    assert.deepEqual(state.nextPoint, panel.choices[2]!.point);
    state = await controller.observe(f(state.nextPoint![0]!));
    state = await controller.waitForActionable();
    assert.equal(state.phase, "choose");
    assert.equal(state.choices!.iteration, 1);
    assert.equal(state.session?.evaluations, 5);
  } finally {
    await service.stop();
  }
});

test("demo session runs to completion and reports a summary", async () => {
  const service = await startService();
  try {
    const api = new SessionApi(service.baseUrl);
    const session = await api.createSession(demoPayload({ budget: 6 }));
    const controller = new SessionController(api, session.id, POLL_MS);
    let state = await controller.waitForActionable();
    for (let guard = 0; state.phase === "choose" && guard < 10; guard++) {
      state = await controller.select(0);
      state = await controller.waitForActionable();
    }
    assert.equal(state.phase, "done");
    assert.equal(state.summary?.evaluations, 6);
    const html = renderDashboard(state);
    assert.ok(html.includes("Finished"));
    assert.ok(html.includes(String(state.summary!.best_value)));
  } finally {
    await service.stop();
  }
});

test("service restart resumes the identical pending choice set", async () => {
  const service = await startService();
  let second: Awaited<ReturnType<typeof startService>> | null = null;
  try {
    const api = new SessionApi(service.baseUrl);
    const session = await api.createSession(demoPayload());
    const controller = new SessionController(api, session.id, POLL_MS);
    const before = await controller.waitForActionable();
    assert.equal(before.phase, "choose");

    await service.stop();
    second = await startService(service.dataDir);

    const api2 = new SessionApi(second.baseUrl);
    const controller2 = new SessionController(api2, session.id, POLL_MS);
    const after = await controller2.waitForActionable();
    assert.equal(after.phase, "choose");
    // byte-identical pending panel across the restart
    assert.equal(
      JSON.stringify(after.choices!.choices),
      JSON.stringify(before.choices!.choices),
    );
    assert.equal(after.choices!.iteration, before.choices!.iteration);
    // and the renderered cards are identical too
    assert.equal(
      renderDashboard({ ...after, session: { ...after.session!, updated: 0 } }),
      renderDashboard({ ...before, session: { ...before.session!, updated: 0 } }),
    );

    // the resumed session still accepts a selection
    const advanced = await controller2.select(0);
    assert.notEqual(advanced.phase, "failed");
  } finally {
    if (second) await second.stop();
  }
});

test("conflicting selection surfaces as a toast, not a mutation", async () => {
  const service = await startService();
  try {
    const api = new SessionApi(service.baseUrl);
    const session = await api.createSession(demoPayload());
    const controller = new SessionController(api, session.id, POLL_MS);
    await controller.waitForActionable();
    // submit twice without waiting: the second must hit a 409 and only one
    // evaluation may be appended
    await Promise.all([controller.select(0), controller.select(0)]);
    const state = await controller.waitForActionable();
    assert.equal(state.session?.evaluations, 5);
  } finally {
    await service.stop();
  }
});
