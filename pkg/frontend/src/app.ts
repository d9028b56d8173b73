/**
 * DOM wiring: renders the four panels and the decision controls from the
 * latest summary payload, drives what-if exploration through a debounced
 * slider, and commits actions with optimistic concurrency. All numbers on
 * screen come from the API; this module only formats them.
 */

import { ApiError, SummaryPoller, TwinClient, debounce } from "./api.js";
import {
  controlsState,
  fanPanel,
  isOverride,
  posteriorReadout,
  recommendationCard,
  surchargePanel,
  ciPanel,
  whatifReadout,
  WhatIfReadout,
} from "./panels.js";
import { renderCi, renderFan, renderTimeline } from "./svg.js";
import { SchemaMismatch, SummaryPayload } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function fmtProb(p: number | null): string {
  return p === null ? "-" : `${(p * 100).toFixed(1)}%`;
}

function fmtM(v: number | null): string {
  return v === null ? "-" : `${v.toFixed(3)} m`;
}

function readoutHtml(label: string, r: WhatIfReadout): string {
  return (
    `<h3>${label}</h3>` +
    `<dl>` +
    `<dt>increment</dt><dd>${r.hAddM.toFixed(2)} m</dd>` +
    `<dt>Pr[miss target]</dt><dd>${fmtProb(r.probNoncompliant)}</dd>` +
    `<dt>S(t_max) median</dt><dd>${fmtM(r.sTmaxQ50M)}</dd>` +
    `<dt>OCR(t_max) median</dt><dd>${r.ocrTmaxQ50 === null ? "-" : r.ocrTmaxQ50.toFixed(3)}</dd>` +
    `<dt>marginal cost</dt><dd>${r.marginalCostMsek.toFixed(2)} MSEK</dd>` +
    `</dl>${r.fast ? "<p class='fast-note'>fast (reduced particles)</p>" : ""}`
  );
}

export class DashboardApp {
  private client: TwinClient;
  private poller: SummaryPoller | null = null;
  private sessionId: string | null = null;
  private current: SummaryPayload | null = null;
  private lastCommit: { recommendedM: number; committedM: number } | null = null;

  constructor(baseUrl: string) {
    this.client = new TwinClient(baseUrl);
  }

  bind(): void {
    el<HTMLButtonElement>("create-session").addEventListener("click", () => void this.create());
    el<HTMLInputElement>("whatif-slider").addEventListener(
      "input",
      debounce(() => void this.explore(), 250),
    );
    el<HTMLButtonElement>("commit-action").addEventListener("click", () => void this.commit());
    el<HTMLButtonElement>("add-measurement").addEventListener(
      "click",
      () => void this.addMeasurement(),
    );
  }

  private banner(message: string | null): void {
    const node = el<HTMLDivElement>("error-banner");
    node.textContent = message ?? "";
    node.hidden = message === null;
  }

  private async create(): Promise<void> {
    try {
      const seed = Number(el<HTMLInputElement>("seed").value || "0");
      const h0 = Number(el<HTMLInputElement>("h0").value || "1.0");
      const covTh = Number(el<HTMLInputElement>("cov-th").value || "0.3");
      const pTh = Number(el<HTMLInputElement>("p-th").value || "0.5");
      const { sessionId, summary } = await this.client.createSession({
        seed,
        heuristic: { h0_m: h0, cov_th: covTh, p_th: pTh },
      });
      this.sessionId = sessionId;
      el<HTMLSpanElement>("session-id").textContent = sessionId;
      this.render(summary);
      this.poller?.stop();
      this.poller = new SummaryPoller(
        this.client,
        sessionId,
        (s) => this.render(s),
        (err) => this.handleError(err),
      );
      this.poller.start();
      this.banner(null);
    } catch (err) {
      this.handleError(err);
    }
  }

  private async addMeasurement(): Promise<void> {
    if (!this.sessionId || !this.current) {
      return;
    }
    try {
      const week = Number(el<HTMLInputElement>("meas-week").value);
      const value = Number(el<HTMLInputElement>("meas-value").value);
      const summary = await this.client.addMeasurement(this.sessionId, week, value);
      this.render(summary);
      this.banner(null);
    } catch (err) {
      this.handleError(err);
    }
  }

  private async explore(): Promise<void> {
    if (!this.sessionId || !this.current) {
      return;
    }
    const slider = el<HTMLInputElement>("whatif-slider");
    if (slider.disabled) {
      return;
    }
    const hAdd = Number(slider.value);
    el<HTMLSpanElement>("whatif-value").textContent = `${hAdd.toFixed(2)} m`;
    try {
      const readout =
        hAdd === 0
          ? posteriorReadout(this.current)
          : whatifReadout(await this.client.whatIf(this.sessionId, hAdd));
      el<HTMLDivElement>("whatif-readout").innerHTML = readoutHtml("What-if", readout);
      this.banner(null);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        slider.disabled = true;
        el<HTMLDivElement>("whatif-readout").innerHTML =
          `<p class="status-reason">what-if unavailable: ${err.detail}</p>`;
        return;
      }
      this.handleError(err);
    }
  }

  private async commit(): Promise<void> {
    if (!this.sessionId || !this.current) {
      return;
    }
    try {
      const hAdd = Number(el<HTMLInputElement>("whatif-slider").value);
      const rec = this.current.recommendation;
      const summary = await this.client.commitAction(
        this.sessionId,
        hAdd,
        this.current.event_index,
      );
      this.lastCommit = { recommendedM: rec.h_add_m ?? 0, committedM: hAdd };
      this.render(summary);
      this.banner(null);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.banner(`commit rejected (${err.detail}); refreshing`);
        this.poller?.invalidate();
        return;
      }
      this.handleError(err);
    }
  }

  private handleError(err: unknown): void {
    if (err instanceof SchemaMismatch) {
      this.banner(`API payload mismatch: ${err.message}`);
      return;
    }
    if (err instanceof ApiError) {
      this.banner(err.message);
      return;
    }
    this.banner(String(err));
  }

  private render(summary: SummaryPayload): void {
    this.current = summary;
    el<HTMLDivElement>("panel-timeline").innerHTML = renderTimeline(surchargePanel(summary));
    el<HTMLDivElement>("panel-fan").innerHTML = renderFan(fanPanel(summary));
    el<HTMLDivElement>("panel-ci-s").innerHTML = renderCi(ciPanel(summary, "s_tmax"));
    el<HTMLDivElement>("panel-ci-ocr").innerHTML = renderCi(ciPanel(summary, "ocr_tmax"));

    const controls = controlsState(summary);
    el<HTMLButtonElement>("commit-action").disabled = !controls.commitEnabled;
    el<HTMLInputElement>("whatif-slider").disabled = !controls.sliderEnabled;
    el<HTMLSpanElement>("session-status").textContent = controls.status;
    el<HTMLParagraphElement>("status-reason").textContent = controls.statusReason;
    el<HTMLSpanElement>("event-index").textContent = String(summary.event_index);

    const rec = recommendationCard(summary.recommendation);
    const overridden =
      this.lastCommit !== null &&
      isOverride({ h_add_m: this.lastCommit.recommendedM, action: "adjust" }, this.lastCommit.committedM);
    el<HTMLDivElement>("recommendation-card").innerHTML =
      `<h3>Recommendation${overridden ? ' <span class="badge-overridden">overridden</span>' : ""}</h3>` +
      `<dl>` +
      `<dt>action</dt><dd>${rec.action}</dd>` +
      `<dt>increment</dt><dd>${rec.hAddM.toFixed(2)} m</dd>` +
      `<dt>gate</dt><dd>${rec.gateStatistic === null ? "-" : rec.gateStatistic.toFixed(4)} vs ${rec.gateThreshold ?? "-"}</dd>` +
      `<dt>Pr[miss]</dt><dd>${fmtProb(rec.probNoncompliant)} vs ${rec.pThreshold ?? "-"}</dd>` +
      `</dl>${rec.gridExhausted ? "<p class='warn'>grid exhausted: largest increment still misses p_th</p>" : ""}`;

    el<HTMLDivElement>("whatif-readout").innerHTML = readoutHtml(
      "Posterior (no increment)",
      posteriorReadout(summary),
    );
    const warning = summary.degenerate_update_warning;
    el<HTMLParagraphElement>("update-warning").textContent = warning ?? "";
  }
}
