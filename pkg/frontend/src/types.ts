/** Payload shapes mirroring docs/api.md. Nothing here is computed
 * client-side; these are the service's words, typed. */

export interface HealthResponse {
  status: string;
  tracts: number;
  pairs: number;
}

export interface IndicatorInfo {
  name: string;
  category: string;
  nonnegative: boolean;
}

export interface TractInfo {
  id: string;
  centroid: { lat: number; lon: number };
  indicators: Record<string, number>;
}

export interface TractsResponse {
  tracts: TractInfo[];
  indicators: IndicatorInfo[];
}

export type EditOp = "set" | "add";

export interface ScenarioEditDoc {
  tract_id: string;
  indicator: string;
  op: EditOp;
  value: number;
}

/** The scenario document as submitted to POST /scenarios. */
export interface ScenarioDocument {
  name: string;
  edits: ScenarioEditDoc[];
  note?: string;
}

export interface SubmitResponse {
  id: string;
  name: string;
  created: boolean;
}

export interface ScenarioListResponse {
  scenarios: { id: string; name: string; edits: number }[];
}

export interface PairDiff {
  origin: string;
  destination: string;
  baseline: number;
  scenario: number;
  relative_change: number;
}

export interface UndefinedPairDiff {
  origin: string;
  destination: string;
  baseline: number;
  scenario: number;
}

export interface DiffSummary {
  mean_relative_change: number;
  std_relative_change: number;
  histogram: { bin_edges: number[]; counts: number[] };
  filter: string;
  n_defined: number;
  n_undefined: number;
}

export interface DiffPayload {
  scenario_id: string;
  name: string;
  radius_km: number | null;
  bins: number;
  diff: {
    scenario: string;
    pairs: PairDiff[];
    undefined_relative: UndefinedPairDiff[];
  };
  summary: DiffSummary;
}

/** One indicator edit within a draft, same vocabulary as the document. */
export interface DraftEdit {
  indicator: string;
  op: EditOp;
  value: number;
}

/**
 * Work-in-progress scenario on the client.
 *
 * Mirrors the scenario document exactly: `selected` holds the edited tract
 * ids in document order and `edits` groups each tract's edits in document
 * order, so draft -> document -> draft loses nothing. A tract is selected
 * if and only if it carries at least one edit.
 */
export interface UiScenarioDraft {
  name: string;
  note?: string;
  selected: string[];
  edits: Record<string, DraftEdit[]>;
}
