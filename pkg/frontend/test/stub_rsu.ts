/** Minimal in-process stand-in for one RSU's HTTP endpoints. */

import { createServer, type Server } from "node:http";
import type { AddressInfo } from "node:net";

import type { AlertView } from "../src/types.js";

export class StubRsu {
  alerts: AlertView[] = [];
  observations: Array<{ category: string; text: string }> = [];
  failing = false;
  private server: Server;

  constructor() {
    this.server = createServer((req, res) => {
      if (this.failing) {
        res.destroy();
        return;
      }
      const url = new URL(req.url ?? "/", "http://localhost");
      if (req.method === "GET" && url.pathname === "/state") {
        const kind = url.searchParams.get("kind") ?? "latest";
        if (kind !== "alerts") {
          res.writeHead(400, { "Content-Type": "application/json" });
          res.end(JSON.stringify({ error: `unsupported kind ${kind} in stub` }));
          return;
        }
        res.writeHead(200, { "Content-Type": "application/json" });
        res.end(JSON.stringify({ rsu_id: "stub", kind: "alerts", alerts: this.alerts }));
        return;
      }
      if (req.method === "POST" && url.pathname === "/observe") {
        let body = "";
        req.on("data", (chunk) => (body += chunk));
        req.on("end", () => {
          const payload = JSON.parse(body || "{}");
          if (!payload.text) {
            res.writeHead(400, { "Content-Type": "application/json" });
            res.end(JSON.stringify({ error: "observation text must be non-empty" }));
            return;
          }
          this.observations.push(payload);
          res.writeHead(200, { "Content-Type": "application/json" });
          res.end(
            JSON.stringify({
              observation_id: `stub-o${this.observations.length}`,
              received_at_ms: 1.0,
            }),
          );
        });
        return;
      }
      res.writeHead(404, { "Content-Type": "application/json" });
      res.end(JSON.stringify({ error: "no such path" }));
    });
  }

  async start(): Promise<string> {
    await new Promise<void>((resolve) => this.server.listen(0, "127.0.0.1", resolve));
    const { port } = this.server.address() as AddressInfo;
    return `http://127.0.0.1:${port}`;
  }

  async stop(): Promise<void> {
    await new Promise<void>((resolve) => this.server.close(() => resolve()));
  }

  raiseAlert(id: string, label = "speeding"): void {
    this.alerts = [
      {
        alert_id: id,
        origin: "rsu-1",
        hazard_label: label,
        evidence: `vehicle ${label}`,
        timestamp_ms: this.alerts.length + 1,
        received_at_ms: this.alerts.length + 1,
      },
      ...this.alerts,
    ];
  }
}
