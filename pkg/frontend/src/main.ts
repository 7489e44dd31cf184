/**
 * Access-window page: pick an RSU, watch its live alert feed and latest
 * narration/reasoning, and upload blind-spot observations.
 *
 * Pure view over the RSU endpoints; no scoring or hazard logic runs here.
 */

import { fetchLatest, submitObservation, ApiError } from "./api.js";
import { validateObservation } from "./form.js";
import { AlertPoller, DEFAULT_POLL_INTERVAL_MS } from "./poller.js";
import type { AlertView, ObservationCategory } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function defaultAddresses(): string[] {
  const params = new URLSearchParams(window.location.search);
  const raw = params.get("rsus") ?? "http://127.0.0.1:8700,http://127.0.0.1:8701,http://127.0.0.1:8702";
  return raw.split(",").map((s) => s.trim()).filter(Boolean);
}

function renderAlert(alert: AlertView, fresh: boolean): HTMLElement {
  const item = document.createElement("li");
  item.className = fresh ? "alert fresh" : "alert";
  const when = (alert.timestamp_ms / 1000).toFixed(2);
  item.innerHTML =
    `<span class="label">${alert.hazard_label}</span>` +
    `<span class="origin">${alert.origin}</span>` +
    `<span class="time">t+${when}s</span>` +
    `<div class="evidence">${alert.evidence}</div>`;
  return item;
}

function main(): void {
  const rsuSelect = el<HTMLSelectElement>("rsu-select");
  const statusBadge = el<HTMLSpanElement>("status");
  const feedList = el<HTMLUListElement>("alert-feed");
  const narration = el<HTMLPreElement>("narration");
  const reasoning = el<HTMLPreElement>("reasoning");
  const form = el<HTMLFormElement>("observe-form");
  const categoryInput = el<HTMLSelectElement>("obs-category");
  const textInput = el<HTMLTextAreaElement>("obs-text");
  const formMessage = el<HTMLSpanElement>("form-message");

  for (const address of defaultAddresses()) {
    const option = document.createElement("option");
    option.value = address;
    option.textContent = address;
    rsuSelect.appendChild(option);
  }

  let poller: AlertPoller | null = null;
  let latestTimer: ReturnType<typeof setInterval> | null = null;

  function renderFeed(alerts: AlertView[], newIds: string[]): void {
    feedList.replaceChildren(...alerts.map((a) => renderAlert(a, newIds.includes(a.alert_id))));
  }

  async function refreshLatest(base: string): Promise<void> {
    try {
      const snapshot = await fetchLatest(base);
      narration.textContent = snapshot.output?.narration_text ?? "(no output yet)";
      reasoning.textContent = snapshot.output?.reasoning_text ?? "";
    } catch {
      // Connection state is already surfaced by the poller badge.
    }
  }

  function connect(base: string): void {
    poller?.stop();
    if (latestTimer !== null) clearInterval(latestTimer);
    feedList.replaceChildren();
    poller = new AlertPoller(base, {
      intervalMs: DEFAULT_POLL_INTERVAL_MS,
      onUpdate: renderFeed,
      onStatus: (status) => {
        statusBadge.textContent = status;
        statusBadge.className = `badge ${status}`;
      },
    });
    poller.start();
    void refreshLatest(base);
    latestTimer = setInterval(() => void refreshLatest(base), 2000);
  }

  rsuSelect.addEventListener("change", () => connect(rsuSelect.value));
  connect(rsuSelect.value);

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const payload = {
      category: categoryInput.value as ObservationCategory | "",
      text: textInput.value,
    };
    const problem = validateObservation(payload);
    if (problem) {
      formMessage.textContent = problem;
      formMessage.className = "error";
      return;
    }
    formMessage.textContent = "sending...";
    formMessage.className = "";
    submitObservation(rsuSelect.value, payload)
      .then((ack) => {
        formMessage.textContent = `accepted as ${ack.observation_id}`;
        formMessage.className = "ok";
        textInput.value = "";
      })
      .catch((err: unknown) => {
        const message = err instanceof ApiError ? err.message : String(err);
        formMessage.textContent = `failed: ${message} (retry?)`;
        formMessage.className = "error";
      });
  });
}

document.addEventListener("DOMContentLoaded", main);
