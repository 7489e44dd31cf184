/** Thin typed client over the RSU HTTP endpoints (/state, /observe). */

import type {
  AlertsSnapshot,
  LatestSnapshot,
  ObservationAck,
  ObservationForm,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number | null = null,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function getJson<T>(url: string): Promise<T> {
  let response: Response;
  try {
    response = await fetch(url);
  } catch (err) {
    throw new ApiError(`RSU unreachable: ${String(err)}`);
  }
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    throw new ApiError(body?.error ?? `request failed (${response.status})`, response.status);
  }
  return body as T;
}

export function fetchAlerts(base: string): Promise<AlertsSnapshot> {
  return getJson<AlertsSnapshot>(`${base}/state?kind=alerts`);
}

export function fetchLatest(base: string): Promise<LatestSnapshot> {
  return getJson<LatestSnapshot>(`${base}/state?kind=latest`);
}

export async function submitObservation(
  base: string,
  form: ObservationForm,
): Promise<ObservationAck> {
  let response: Response;
  try {
    response = await fetch(`${base}/observe`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        category: form.category,
        text: form.text,
        reporter: form.reporter ?? "access-window",
      }),
    });
  } catch (err) {
    throw new ApiError(`RSU unreachable: ${String(err)}`);
  }
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    throw new ApiError(body?.error ?? `request failed (${response.status})`, response.status);
  }
  return body as ObservationAck;
}
