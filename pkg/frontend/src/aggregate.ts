import type { DiffPayload, PairDiff, UndefinedPairDiff } from "./types.js";

/** A map arc worth drawing: one pair and its served flow difference. */
export interface Arc {
  origin: string;
  destination: string;
  delta: number;
}

/**
 * Tract-level aggregation for the choropleth: per tract, the sum of
 * relative-change-weighted baseline flows over the defined pairs touching
 * it (both endpoint roles). Pair-level arcs overwhelm the map at scale;
 * this keeps one number per tract while every term is a product of two
 * served fields.
 */
export function tractChange(payload: DiffPayload): Map<string, number> {
  const out = new Map<string, number>();
  for (const p of payload.diff.pairs) {
    const weighted = p.baseline * p.relative_change;
    out.set(p.origin, (out.get(p.origin) ?? 0) + weighted);
    out.set(p.destination, (out.get(p.destination) ?? 0) + weighted);
  }
  return out;
}

function pairDelta(p: PairDiff | UndefinedPairDiff): number {
  return "relative_change" in p
    ? p.baseline * p.relative_change
    : p.scenario - p.baseline;
}

/** The K pairs with the largest absolute flow difference, spanning both
 * defined and zero-baseline pairs, ordered by |delta| descending. */
export function topArcs(payload: DiffPayload, k: number): Arc[] {
  const all: Arc[] = [
    ...payload.diff.pairs,
    ...payload.diff.undefined_relative,
  ].map((p) => ({
    origin: p.origin,
    destination: p.destination,
    delta: pairDelta(p),
  }));
  all.sort(
    (a, b) =>
      Math.abs(b.delta) - Math.abs(a.delta) ||
      a.origin.localeCompare(b.origin) ||
      a.destination.localeCompare(b.destination),
  );
  return all.slice(0, Math.max(0, k));
}

/** True when the scenario changed no prediction at all. */
export function isNoChange(payload: DiffPayload): boolean {
  return (
    payload.diff.pairs.every((p) => p.relative_change === 0) &&
    payload.diff.undefined_relative.every((p) => p.scenario === p.baseline)
  );
}

/**
 * Histogram exactly as served: same edges, same counts, no re-binning.
 * Returned bars carry the served count and its two served edges.
 */
export interface HistogramBar {
  x0: number;
  x1: number;
  count: number;
}

export function histogramBars(payload: DiffPayload): HistogramBar[] {
  const { bin_edges, counts } = payload.summary.histogram;
  return counts.map((count, i) => ({
    x0: bin_edges[i],
    x1: bin_edges[i + 1],
    count,
  }));
}
