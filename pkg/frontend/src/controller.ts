/** Dashboard state machine. One controller per session: it polls the
 * service while a proposal is computing, exposes the pending choice panel,
 * and forwards the expert's two actions (select a choice, report the
 * measured outcome). All numbers shown to the expert pass through untouched.
 */

import { ApiError, SessionApi } from "./api.js";
import type {
  ChoicesPayload,
  RunSummary,
  SessionView,
} from "./types.js";

export type DashboardPhase =
  | "connecting"
  | "choose" // awaiting_selection: render the choice cards
  | "report_outcome" // awaiting_observation: show the point to run + entry form
  | "working" // running_proposal: poll
  | "done"
  | "failed";

export interface DashboardState {
  phase: DashboardPhase;
  session: SessionView | null;
  choices: ChoicesPayload | null;
  nextPoint: number[] | null;
  remainingInitial: number[][] | null;
  summary: RunSummary | null;
  toast: string | null;
}

export type Listener = (state: DashboardState) => void;

const sleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class SessionController {
  private state: DashboardState = {
    phase: "connecting",
    session: null,
    choices: null,
    nextPoint: null,
    remainingInitial: null,
    summary: null,
    toast: null,
  };
  private listeners: Listener[] = [];

  constructor(
    readonly api: SessionApi,
    readonly sessionId: string,
    readonly pollIntervalMs = 1000,
  ) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    listener(this.state);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  current(): DashboardState {
    return this.state;
  }

  private emit(partial: Partial<DashboardState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) listener(this.state);
  }

  /** One poll step: fetch the session and, when selectable, the choices. */
  async tick(): Promise<DashboardState> {
    let session: SessionView;
    try {
      session = await this.api.getSession(this.sessionId);
    } catch (err) {
      this.emit({ phase: "failed", toast: describe(err) });
      return this.state;
    }
    const base: Partial<DashboardState> = {
      session,
      summary: session.summary ?? null,
      nextPoint: session.next_point ?? null,
      remainingInitial: session.required_observations ?? null,
    };
    switch (session.status) {
      case "awaiting_selection": {
        // keep the already-fetched panel when it is still the pending one
        const stale =
          this.state.choices === null ||
          this.state.choices.history.length !== session.evaluations;
        if (stale) {
          try {
            base.choices = await this.api.getChoices(this.sessionId);
          } catch (err) {
            if (err instanceof ApiError && err.status === 409) {
              // raced a concurrent mutation; next tick resolves it
              this.emit({ ...base, phase: "working" });
              return this.state;
            }
            throw err;
          }
        }
        this.emit({ ...base, phase: "choose" });
        break;
      }
      case "awaiting_observation":
        this.emit({ ...base, phase: "report_outcome", choices: null });
        break;
      case "running_proposal":
        this.emit({ ...base, phase: "working", choices: null });
        break;
      case "finished":
        this.emit({
          ...base,
          phase: session.error ? "failed" : "done",
          choices: null,
          toast: session.error,
        });
        break;
    }
    return this.state;
  }

  /** Poll until the session needs the expert (or finished), with a deadline. */
  async waitForActionable(timeoutMs = 120_000): Promise<DashboardState> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const state = await this.tick();
      if (state.phase !== "working" && state.phase !== "connecting") {
        return state;
      }
      if (Date.now() > deadline) {
        throw new Error(`session ${this.sessionId} still busy after ${timeoutMs}ms`);
      }
      await sleep(this.pollIntervalMs);
    }
  }

  /** The expert clicks a choice card. Conflicts refresh instead of mutating. */
  async select(index: number): Promise<DashboardState> {
    try {
      await this.api.submitSelection(this.sessionId, index);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.emit({ toast: `selection rejected: ${err.message}` });
      } else {
        throw err;
      }
    }
    return this.tick();
  }

  /** External mode: the expert reports the measured outcome for the point. */
  async observe(y: number): Promise<DashboardState> {
    if (!Number.isFinite(y)) {
      this.emit({ toast: "outcome must be a finite number" });
      return this.state;
    }
    try {
      await this.api.submitObservation(this.sessionId, y);
    } catch (err) {
      if (err instanceof ApiError && (err.status === 409 || err.status === 400)) {
        this.emit({ toast: `observation rejected: ${err.message}` });
      } else {
        throw err;
      }
    }
    return this.tick();
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.message}`;
  return err instanceof Error ? err.message : String(err);
}
