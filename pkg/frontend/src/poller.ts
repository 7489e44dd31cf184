/**
 * Live alert subscription by polling one RSU's query endpoint.
 *
 * One poll is in flight at a time. A failed poll flips the status to
 * "disconnected" and retries with doubling backoff (capped); the first
 * successful poll restores the base interval.
 */

import { fetchAlerts } from "./api.js";
import { mergeAlerts } from "./feed.js";
import type { AlertView, ConnectionStatus } from "./types.js";

export interface PollerOptions {
  intervalMs?: number;
  maxBackoffMs?: number;
  onUpdate?: (alerts: AlertView[], newIds: string[]) => void;
  onStatus?: (status: ConnectionStatus) => void;
}

export const DEFAULT_POLL_INTERVAL_MS = 500;

export class AlertPoller {
  private alerts: AlertView[] = [];
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = true;
  private currentInterval: number;
  private status: ConnectionStatus = "idle";

  constructor(
    private readonly base: string,
    private readonly options: PollerOptions = {},
  ) {
    this.currentInterval = options.intervalMs ?? DEFAULT_POLL_INTERVAL_MS;
  }

  get feed(): AlertView[] {
    return this.alerts;
  }

  get connectionStatus(): ConnectionStatus {
    return this.status;
  }

  start(): void {
    if (!this.stopped) return;
    this.stopped = false;
    void this.pollOnce();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  private setStatus(status: ConnectionStatus): void {
    if (this.status !== status) {
      this.status = status;
      this.options.onStatus?.(status);
    }
  }

  private schedule(delay: number): void {
    if (this.stopped) return;
    this.timer = setTimeout(() => void this.pollOnce(), delay);
  }

  private async pollOnce(): Promise<void> {
    if (this.stopped) return;
    const base = this.options.intervalMs ?? DEFAULT_POLL_INTERVAL_MS;
    try {
      const snapshot = await fetchAlerts(this.base);
      const update = mergeAlerts(this.alerts, snapshot.alerts);
      this.setStatus("connected");
      this.currentInterval = base;
      if (update.changed) {
        this.alerts = update.alerts;
        this.options.onUpdate?.(update.alerts, update.newIds);
      }
    } catch {
      this.setStatus("disconnected");
      this.currentInterval = Math.min(
        this.currentInterval * 2,
        this.options.maxBackoffMs ?? 5000,
      );
    }
    this.schedule(this.currentInterval);
  }
}
