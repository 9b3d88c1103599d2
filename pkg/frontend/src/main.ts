/** Browser bootstrap: query-string wiring, 1s polling while the service
 * computes, and event delegation for the two expert actions. */

import { SessionApi } from "./api.js";
import { SessionController } from "./controller.js";
import { renderDashboard } from "./render.js";

const params = new URLSearchParams(window.location.search);
const apiBase = params.get("api") ?? "http://127.0.0.1:8080";
const sessionId = params.get("session");

const root = document.getElementById("app")!;
const api = new SessionApi(apiBase);

function attach(controller: SessionController): void {
  controller.subscribe((state) => {
    root.innerHTML = renderDashboard(state);
  });

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const btn = target.closest<HTMLElement>(".select-btn");
    if (btn && controller.current().phase === "choose") {
      void controller.select(Number(btn.dataset.index));
    }
  });

  root.addEventListener("submit", (event) => {
    const form = event.target as HTMLFormElement;
    if (form.id === "outcome-form") {
      event.preventDefault();
      const input = form.querySelector<HTMLInputElement>("#outcome-value")!;
      void controller.observe(Number(input.value));
    }
  });

  setInterval(() => {
    const phase = controller.current().phase;
    if (phase === "working" || phase === "connecting") {
      void controller.tick();
    }
  }, controller.pollIntervalMs);

  void controller.tick();
}

function renderCreateForm(): void {
  root.innerHTML = `<div class="create">
<h2>New session</h2>
<form id="create-form">
  <label>mode
    <select name="mode"><option>demo</option><option>external</option></select>
  </label>
  <label>dimension <input name="dimension" type="number" value="1" min="1" /></label>
  <label>budget <input name="budget" type="number" value="12" min="5" /></label>
  <label>seed <input name="seed" type="number" value="0" /></label>
  <p class="hint">demo mode optimises a sampled synthetic objective;
  external mode asks you for every measured outcome</p>
  <button type="submit">create</button>
</form>
</div>`;
  document.getElementById("create-form")!.addEventListener("submit", (event) => {
    event.preventDefault();
    const data = new FormData(event.target as HTMLFormElement);
    const dimension = Number(data.get("dimension"));
    const payload: Record<string, unknown> = {
      mode: String(data.get("mode")),
      budget: Number(data.get("budget")),
      seed: Number(data.get("seed")),
    };
    if (payload.mode === "demo") {
      payload.function = { kind: "gp", dimension, seed: Number(data.get("seed")) };
    } else {
      payload.bounds = {
        lower: Array(dimension).fill(0),
        upper: Array(dimension).fill(10),
      };
    }
    void api.createSession(payload).then((session) => {
      const next = new URL(window.location.href);
      next.searchParams.set("session", session.id);
      window.location.href = next.toString();
    });
  });
}

if (sessionId) {
  attach(new SessionController(api, sessionId));
} else {
  renderCreateForm();
}
