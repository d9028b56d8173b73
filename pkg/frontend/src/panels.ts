/**
 * Pure payload -> panel-dataset transforms for the four dashboard panels
 * plus the control/recommendation cards. Everything here is a pure
 * function of the last API payload (snapshot-testable); no physics, no
 * fetches, no DOM.
 */

import {
  CiHistoryEntry,
  QuantileCard,
  Recommendation,
  SummaryPayload,
  WhatIfPayload,
} from "./types.js";

export interface TimelinePanel {
  kind: "surcharge-timeline";
  weeks: number[];
  heightM: number[];
  decisionWeek: number | null;
  unit: "m";
}

export interface FanPanel {
  kind: "settlement-fan";
  weeks: number[];
  bands: { q05: number[]; q25: number[]; q50: number[]; q75: number[]; q95: number[] };
  measurements: { week: number; valueM: number }[];
  sTargetM: number;
  tMaxWeeks: number;
  decisionWeek: number | null;
  empty: boolean;
  unit: "m";
}

export interface CiPanel {
  kind: "ci-evolution";
  quantity: "s_tmax" | "ocr_tmax";
  weeks: number[];
  lo: number[];
  mid: number[];
  hi: number[];
  target: number;
  trueValueKnown: false;
  unit: "m" | "-";
  empty: boolean;
}

export interface WhatIfReadout {
  hAddM: number;
  probNoncompliant: number;
  sTmaxQ50M: number | null;
  ocrTmaxQ50: number | null;
  marginalCostMsek: number;
  fast: boolean;
}

export interface RecommendationCard {
  action: string;
  hAddM: number;
  gateStatistic: number | null;
  gateThreshold: number | null;
  pThreshold: number | null;
  probNoncompliant: number | null;
  gridExhausted: boolean;
}

export interface ControlsState {
  status: string;
  commitEnabled: boolean;
  sliderEnabled: boolean;
  statusReason: string;
}

/** Week of the committed increment, or the pending decision week. */
export function decisionWeek(summary: SummaryPayload): number | null {
  const { weeks_list, height_m } = summary.surcharge_timeline;
  for (let i = 1; i < weeks_list.length; i += 1) {
    if (height_m[i] !== height_m[i - 1]) {
      return weeks_list[i];
    }
  }
  if (summary.session_status === "decision-pending") {
    return summary.week;
  }
  return null;
}

export function surchargePanel(summary: SummaryPayload): TimelinePanel {
  return {
    kind: "surcharge-timeline",
    weeks: [...summary.surcharge_timeline.weeks_list],
    heightM: [...summary.surcharge_timeline.height_m],
    decisionWeek: decisionWeek(summary),
    unit: "m",
  };
}

function bandsOrdered(fan: SummaryPayload["settlement_fan"]): boolean {
  for (let i = 0; i < fan.weeks_list.length; i += 1) {
    if (
      !(
        fan.q05_m[i] <= fan.q25_m[i] &&
        fan.q25_m[i] <= fan.q50_m[i] &&
        fan.q50_m[i] <= fan.q75_m[i] &&
        fan.q75_m[i] <= fan.q95_m[i]
      )
    ) {
      return false;
    }
  }
  return true;
}

export function fanPanel(summary: SummaryPayload): FanPanel {
  const fan = summary.settlement_fan;
  if (!bandsOrdered(fan)) {
    // quantiles out of order mean a corrupted payload, not a render choice
    throw new Error("settlement fan quantile bands are not ordered");
  }
  return {
    kind: "settlement-fan",
    weeks: [...fan.weeks_list],
    bands: {
      q05: [...fan.q05_m],
      q25: [...fan.q25_m],
      q50: [...fan.q50_m],
      q75: [...fan.q75_m],
      q95: [...fan.q95_m],
    },
    measurements: summary.measurements.map((m) => ({ week: m.t, valueM: m.z_s_m })),
    sTargetM: summary.s_target_m,
    tMaxWeeks: summary.t_max_weeks,
    decisionWeek: decisionWeek(summary),
    empty: fan.weeks_list.length === 0,
    unit: "m",
  };
}

function cardValues(card: QuantileCard, metric: "s_tmax" | "ocr_tmax") {
  if (metric === "s_tmax") {
    return { lo: card.q025_m ?? null, mid: card.q50_m ?? null, hi: card.q975_m ?? null };
  }
  return { lo: card.q025 ?? null, mid: card.q50 ?? null, hi: card.q975 ?? null };
}

export function ciPanel(summary: SummaryPayload, quantity: "s_tmax" | "ocr_tmax"): CiPanel {
  const weeks: number[] = [];
  const lo: number[] = [];
  const mid: number[] = [];
  const hi: number[] = [];
  for (const entry of summary.ci_history as CiHistoryEntry[]) {
    const card = quantity === "s_tmax" ? entry.s_tmax : entry.ocr_tmax;
    const v = cardValues(card, quantity);
    if (v.lo === null || v.mid === null || v.hi === null) {
      continue;
    }
    weeks.push(entry.t);
    lo.push(v.lo);
    mid.push(v.mid);
    hi.push(v.hi);
  }
  return {
    kind: "ci-evolution",
    quantity,
    weeks,
    lo,
    mid,
    hi,
    target: quantity === "s_tmax" ? summary.s_target_m : summary.ocr_target,
    trueValueKnown: false,
    unit: quantity === "s_tmax" ? "m" : "-",
    empty: weeks.length === 0,
  };
}

export function whatifReadout(whatif: WhatIfPayload): WhatIfReadout {
  return {
    hAddM: whatif.h_add_m,
    probNoncompliant: whatif.prob_noncompliant,
    sTmaxQ50M: whatif.s_tmax.q50_m ?? null,
    ocrTmaxQ50: whatif.ocr_tmax.q50 ?? null,
    marginalCostMsek: whatif.marginal_cost_sek / 1e6,
    fast: whatif.fast,
  };
}

/** The posterior card rendered next to the slider; slider at 0 must match it. */
export function posteriorReadout(summary: SummaryPayload): WhatIfReadout {
  return {
    hAddM: 0,
    probNoncompliant: summary.prob_noncompliant,
    sTmaxQ50M: summary.s_tmax.q50_m ?? null,
    ocrTmaxQ50: summary.ocr_tmax.q50 ?? null,
    marginalCostMsek: 0,
    fast: false,
  };
}

export function recommendationCard(rec: Recommendation): RecommendationCard {
  return {
    action: rec.action,
    hAddM: rec.h_add_m ?? 0,
    gateStatistic: rec.gate_statistic ?? null,
    gateThreshold: rec.gate_threshold ?? null,
    pThreshold: rec.p_threshold ?? null,
    probNoncompliant: rec.prob_noncompliant ?? null,
    gridExhausted: rec.grid_exhausted ?? false,
  };
}

/** True when the engineer's committed height contradicts the suggestion. */
export function isOverride(rec: Recommendation, committedHAddM: number): boolean {
  return Math.abs((rec.h_add_m ?? 0) - committedHAddM) > 1e-12;
}

export function controlsState(summary: SummaryPayload): ControlsState {
  const pending = summary.session_status === "decision-pending";
  return {
    status: summary.session_status,
    commitEnabled: pending,
    sliderEnabled: pending,
    statusReason: pending
      ? "uncertainty gate open: choose an increment or commit 0 to keep measuring"
      : summary.session_status === "measuring"
        ? "collecting measurements until the uncertainty gate opens"
        : summary.session_status === "adjusted"
          ? "increment placed; monitoring continues"
          : "session closed",
  };
}

/** True when the rendered payload is older than the server's event index. */
export function isStale(renderedEventIndex: number, latestEventIndex: number): boolean {
  return latestEventIndex > renderedEventIndex;
}
