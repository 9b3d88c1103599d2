/** Thin typed client over the session service. GETs are retried by the
 * polling layer; the two POSTs are submitted exactly once and conflicts
 * surface as ApiError so the view can refresh instead of mutating. */

import type {
  ApiErrorBody,
  ChoicesPayload,
  HistoryPayload,
  PosteriorRow,
  SelectionAck,
  SessionStatus,
  SessionView,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  const text = await resp.text();
  let body: unknown = null;
  try {
    body = text ? JSON.parse(text) : null;
  } catch {
    throw new ApiError(resp.status, "bad_json", `unparseable response: ${text}`);
  }
  if (!resp.ok) {
    const err = body as ApiErrorBody | null;
    throw new ApiError(resp.status, err?.code ?? "http", err?.message ?? text);
  }
  return body as T;
}

export class SessionApi {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  createSession(payload: Record<string, unknown>): Promise<SessionView> {
    return request(this.url("/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  getSession(id: string): Promise<SessionView> {
    return request(this.url(`/sessions/${id}`));
  }

  getChoices(id: string): Promise<ChoicesPayload> {
    return request(this.url(`/sessions/${id}/choices`));
  }

  submitSelection(id: string, index: number): Promise<SelectionAck> {
    return request(this.url(`/sessions/${id}/selection`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ index }),
    });
  }

  submitFreePoint(id: string, point: number[]): Promise<SelectionAck> {
    return request(this.url(`/sessions/${id}/selection`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ point }),
    });
  }

  submitObservation(id: string, y: number): Promise<{ id: string; status: SessionStatus }> {
    return request(this.url(`/sessions/${id}/observation`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ y }),
    });
  }

  getHistory(id: string): Promise<HistoryPayload> {
    return request(this.url(`/sessions/${id}/history`));
  }

  getPosterior(id: string, grid: number): Promise<{ id: string; grid: PosteriorRow[] }> {
    return request(this.url(`/sessions/${id}/posterior?grid=${grid}`));
  }
}
