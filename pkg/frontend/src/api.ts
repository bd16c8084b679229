import { Label, Progress, QueryPayload, validateProgress, validateQuery } from "./types.js";

export class ConflictError extends Error {}

export interface SessionConfig {
  arm?: string;
  strategy?: string;
  dataset?: string | null;
  synthetic?: Record<string, unknown>;
  seed?: number;
  B?: number;
  [key: string]: unknown;
}

export class ApiClient {
  constructor(private base: string) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const resp = await fetch(this.base + path, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (resp.status === 409) {
      throw new ConflictError(await resp.text());
    }
    if (!resp.ok) {
      throw new Error(`${resp.status} ${await resp.text()}`);
    }
    return resp.json();
  }

  async createSession(config: SessionConfig): Promise<{ session_id: string; budget: number; status: string }> {
    return (await this.request("/sessions", {
      method: "POST",
      body: JSON.stringify(config),
    })) as { session_id: string; budget: number; status: string };
  }

  async getQuery(sessionId: string): Promise<QueryPayload> {
    return validateQuery(await this.request(`/sessions/${sessionId}/query`));
  }

  async submitLabel(sessionId: string, instanceId: number, label: Label): Promise<Progress> {
    return validateProgress(
      await this.request(`/sessions/${sessionId}/label`, {
        method: "POST",
        body: JSON.stringify({ instance_id: instanceId, label }),
      }),
    );
  }

  async getProgress(sessionId: string): Promise<Progress> {
    return validateProgress(await this.request(`/sessions/${sessionId}/progress`));
  }

  async getHistory(sessionId: string): Promise<{ history: unknown[] }> {
    return (await this.request(`/sessions/${sessionId}/history`)) as { history: unknown[] };
  }
}
