/**
 * Payload types mirroring the twin-service JSON API. Field names carry
 * units exactly as the service emits them. validateSummary is the schema
 * gate: a payload that fails it must never reach the render path.
 */

export type SessionStatus = "measuring" | "decision-pending" | "adjusted" | "closed";

export interface QuantileCard {
  mean_m?: number;
  std_m?: number;
  mean?: number;
  std?: number;
  cov?: number;
  q025_m?: number;
  q50_m?: number;
  q975_m?: number;
  q025?: number;
  q50?: number;
  q975?: number;
}

export interface SettlementFan {
  weeks_list: number[];
  q05_m: number[];
  q25_m: number[];
  q50_m: number[];
  q75_m: number[];
  q95_m: number[];
}

export interface MeasurementPoint {
  t: number;
  z_s_m: number;
}

export interface CiHistoryEntry {
  t: number;
  s_tmax: QuantileCard;
  ocr_tmax: QuantileCard;
  prob_noncompliant: number;
  gate_statistic: number;
  gate_open: boolean;
}

export interface Recommendation {
  action: string;
  h_add_m?: number;
  gate_statistic?: number | null;
  gate_threshold?: number;
  p_threshold?: number;
  prob_noncompliant?: number;
  grid_exhausted?: boolean;
  reason?: string;
}

export interface SummaryPayload {
  scenario_hash: string;
  event_index: number;
  session_status: SessionStatus;
  week: number;
  n_particles: number;
  settlement_fan: SettlementFan;
  measurements: MeasurementPoint[];
  surcharge_timeline: { weeks_list: number[]; height_m: number[] };
  ci_history: CiHistoryEntry[];
  s_tmax: QuantileCard;
  ocr_tmax: QuantileCard;
  prob_noncompliant: number;
  gate_statistic: number;
  gate_open: boolean;
  s_target_m: number;
  ocr_target: number;
  t_max_weeks: number;
  recommendation: Recommendation;
  degenerate_update_warning?: string;
}

export interface WhatIfPayload {
  scenario_hash: string;
  event_index: number;
  h_add_m: number;
  fast: boolean;
  prob_noncompliant: number;
  s_tmax: QuantileCard;
  ocr_tmax: QuantileCard;
  marginal_cost_sek: number;
}

export class SchemaMismatch extends Error {}

function isNumberArray(value: unknown): value is number[] {
  return Array.isArray(value) && value.every((v) => typeof v === "number" && Number.isFinite(v));
}

function need(condition: boolean, field: string): void {
  if (!condition) {
    throw new SchemaMismatch(`summary payload field missing or malformed: ${field}`);
  }
}

/** Throws SchemaMismatch unless the payload matches the API contract. */
export function validateSummary(doc: unknown): SummaryPayload {
  need(typeof doc === "object" && doc !== null, "<root>");
  const d = doc as Record<string, unknown>;
  need(typeof d.scenario_hash === "string", "scenario_hash");
  need(typeof d.event_index === "number", "event_index");
  need(
    d.session_status === "measuring" ||
      d.session_status === "decision-pending" ||
      d.session_status === "adjusted" ||
      d.session_status === "closed",
    "session_status",
  );
  need(typeof d.week === "number", "week");
  const fan = d.settlement_fan as Record<string, unknown> | undefined;
  need(typeof fan === "object" && fan !== null, "settlement_fan");
  for (const key of ["weeks_list", "q05_m", "q25_m", "q50_m", "q75_m", "q95_m"]) {
    need(isNumberArray((fan as Record<string, unknown>)[key]), `settlement_fan.${key}`);
  }
  const weeks = (fan as { weeks_list: number[] }).weeks_list;
  for (const key of ["q05_m", "q25_m", "q50_m", "q75_m", "q95_m"]) {
    need(
      ((fan as Record<string, unknown>)[key] as number[]).length === weeks.length,
      `settlement_fan.${key}.length`,
    );
  }
  need(Array.isArray(d.measurements), "measurements");
  const timeline = d.surcharge_timeline as Record<string, unknown> | undefined;
  need(typeof timeline === "object" && timeline !== null, "surcharge_timeline");
  need(isNumberArray((timeline as Record<string, unknown>).weeks_list), "surcharge_timeline.weeks_list");
  need(isNumberArray((timeline as Record<string, unknown>).height_m), "surcharge_timeline.height_m");
  need(Array.isArray(d.ci_history), "ci_history");
  need(typeof d.prob_noncompliant === "number", "prob_noncompliant");
  need(typeof d.gate_statistic === "number", "gate_statistic");
  need(typeof d.s_target_m === "number", "s_target_m");
  need(typeof d.t_max_weeks === "number", "t_max_weeks");
  need(typeof d.recommendation === "object" && d.recommendation !== null, "recommendation");
  return doc as SummaryPayload;
}
