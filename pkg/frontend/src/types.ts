/** Payload shapes of the session service API, mirrored field-for-field.
 * The UI never recomputes any of these numbers; it displays them verbatim. */

export type SessionStatus =
  | "awaiting_selection"
  | "awaiting_observation"
  | "running_proposal"
  | "finished";

export interface SessionView {
  id: string;
  mode: "demo" | "external";
  status: SessionStatus;
  evaluations: number;
  budget: number;
  p: number;
  dimension: number;
  bounds: { lower: number[]; upper: number[] };
  created: number;
  updated: number;
  error: string | null;
  required_observations?: number[][];
  next_point?: number[];
  summary?: RunSummary;
}

export interface RunSummary {
  best_point: number[];
  best_value: number;
  evaluations: number;
  simple_regret?: number[];
  average_regret?: number[];
}

export interface ChoiceView {
  point: number[];
  utility: number;
  predicted_mean: number;
  predicted_std: number;
  source: "utility_optimum" | "knee_alternate";
}

export interface ParetoSummaryView {
  front_size: number;
  knee_utility: number;
  knee_variability: number;
  degenerate: boolean;
  repaired: number;
}

export interface HistoryRow {
  point: number[];
  value: number;
  source: "initial" | "selected";
}

export interface PosteriorRow {
  x: number[];
  mean: number;
  std: number;
  utility: number;
}

export interface ChoicesPayload {
  id: string;
  iteration: number;
  choices: ChoiceView[];
  pareto_summary: ParetoSummaryView | null;
  history: HistoryRow[];
  posterior?: PosteriorRow[];
}

export interface SelectionAck {
  id: string;
  status: SessionStatus;
  point: number[];
  iteration: number;
  observed_y?: number;
  evaluations?: number;
}

export interface HistoryPayload {
  id: string;
  evaluations: HistoryRow[];
  selections: {
    iteration: number;
    selected_index: number;
    observed_y: number;
    choices: ChoiceView[];
  }[];
}

export interface ApiErrorBody {
  code: string;
  message: string;
}
