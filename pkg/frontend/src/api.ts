/**
 * REST client for the twin service: polling reads, one in-flight mutation
 * at a time, optimistic concurrency through the event index.
 */

import { SummaryPayload, WhatIfPayload, validateSummary } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parse(response: Response): Promise<unknown> {
  const text = await response.text();
  let doc: unknown = null;
  try {
    doc = text ? JSON.parse(text) : null;
  } catch {
    doc = null;
  }
  if (!response.ok) {
    const detail =
      doc && typeof doc === "object" && "detail" in (doc as Record<string, unknown>)
        ? String((doc as Record<string, unknown>).detail)
        : text;
    throw new ApiError(response.status, detail);
  }
  return doc;
}

export class TwinClient {
  private mutationInFlight = false;

  constructor(
    private baseUrl: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  async createSession(body: {
    seed: number;
    heuristic?: { h0_m?: number; cov_th?: number; p_th?: number };
    n_particles?: number;
  }): Promise<{ sessionId: string; summary: SummaryPayload }> {
    const doc = (await this.mutate("/sessions", body)) as Record<string, unknown>;
    const sessionId = String(doc.session_id);
    return { sessionId, summary: validateSummary(doc) };
  }

  async summary(sessionId: string): Promise<SummaryPayload> {
    const doc = await parse(await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}`));
    return validateSummary(doc);
  }

  async addMeasurement(sessionId: string, tWeeks: number, zSM: number): Promise<SummaryPayload> {
    const doc = await this.mutate(`/sessions/${sessionId}/measurements`, {
      t_weeks: tWeeks,
      z_s_m: zSM,
    });
    return validateSummary(doc);
  }

  async whatIf(sessionId: string, hAddM: number, fast = false): Promise<WhatIfPayload> {
    const url = `${this.baseUrl}/sessions/${sessionId}/whatif?h_add_m=${hAddM}${fast ? "&fast=true" : ""}`;
    return (await parse(await this.fetchImpl(url))) as WhatIfPayload;
  }

  async commitAction(
    sessionId: string,
    hAddM: number,
    expectedEventIndex: number,
  ): Promise<SummaryPayload> {
    const doc = await this.mutate(`/sessions/${sessionId}/actions`, {
      h_add_m: hAddM,
      expected_event_index: expectedEventIndex,
    });
    return validateSummary(doc);
  }

  async closeSession(sessionId: string): Promise<unknown> {
    return this.mutate(`/sessions/${sessionId}/close`, {});
  }

  /** Serialized POST: rejects when another mutation is still in flight. */
  private async mutate(path: string, body: unknown): Promise<unknown> {
    if (this.mutationInFlight) {
      throw new ApiError(0, "another action is still in flight");
    }
    this.mutationInFlight = true;
    try {
      const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      });
      return await parse(response);
    } finally {
      this.mutationInFlight = false;
    }
  }
}

/** Calls onUpdate whenever the server's event index moves. */
export class SummaryPoller {
  private timer: ReturnType<typeof setInterval> | null = null;
  private lastEventIndex = -1;

  constructor(
    private client: TwinClient,
    private sessionId: string,
    private onUpdate: (summary: SummaryPayload) => void,
    private onError: (err: unknown) => void,
    private intervalMs = 4000,
  ) {}

  start(): void {
    this.stop();
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
    void this.tick();
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  /** Force the next tick to re-render even at an unchanged index. */
  invalidate(): void {
    this.lastEventIndex = -1;
  }

  private async tick(): Promise<void> {
    try {
      const summary = await this.client.summary(this.sessionId);
      if (summary.event_index !== this.lastEventIndex) {
        this.lastEventIndex = summary.event_index;
        this.onUpdate(summary);
      }
    } catch (err) {
      this.onError(err);
    }
  }
}

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): (...args: A) => void {
  let timer: ReturnType<typeof setTimeout> | null = null;
  return (...args: A) => {
    if (timer !== null) {
      clearTimeout(timer);
    }
    timer = setTimeout(() => fn(...args), waitMs);
  };
}
