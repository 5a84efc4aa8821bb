import type { Arc, HistogramBar } from "./aggregate.js";
import type {
  DiffPayload,
  IndicatorInfo,
  TractInfo,
  UiScenarioDraft,
} from "./types.js";

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

const NEUTRAL = "#d4d4d4";

function mix(from: [number, number, number], t: number): string {
  // interpolate from neutral grey toward the pole color
  const grey = [212, 212, 212];
  const c = from.map((v, i) => Math.round(grey[i] + (v - grey[i]) * t));
  return `rgb(${c[0]},${c[1]},${c[2]})`;
}

/** Diverging color for a tract change value given the layer's max |value|. */
export function changeColor(value: number, maxAbs: number): string {
  if (maxAbs === 0 || value === 0) return NEUTRAL;
  const t = Math.min(1, Math.abs(value) / maxAbs);
  return value > 0 ? mix([192, 57, 43], t) : mix([36, 113, 163], t);
}

interface Projection {
  x(lon: number): number;
  y(lat: number): number;
}

function projector(tracts: TractInfo[], size: number, pad: number): Projection {
  const lats = tracts.map((t) => t.centroid.lat);
  const lons = tracts.map((t) => t.centroid.lon);
  const latMin = Math.min(...lats);
  const latMax = Math.max(...lats);
  const lonMin = Math.min(...lons);
  const lonMax = Math.max(...lons);
  const latSpan = latMax - latMin || 1;
  const lonSpan = lonMax - lonMin || 1;
  const inner = size - 2 * pad;
  return {
    x: (lon) => pad + ((lon - lonMin) / lonSpan) * inner,
    // lat grows north; SVG y grows down
    y: (lat) => pad + ((latMax - lat) / latSpan) * inner,
  };
}

export interface MapOptions {
  /** tract id -> aggregated change; omit for the neutral pre-diff map */
  changes?: Map<string, number>;
  selected?: Set<string>;
  arcs?: Arc[];
  size?: number;
}

/**
 * SVG choropleth of tract centroids. Fill encodes the aggregated change
 * (red up, blue down, grey unchanged), a thick outline marks selected
 * tracts, and optional arcs overlay the largest pair differences. Each
 * circle carries its id and raw value in data attributes.
 */
export function renderMap(tracts: TractInfo[], opts: MapOptions = {}): string {
  const size = opts.size ?? 420;
  const pad = 24;
  const proj = projector(tracts, size, pad);
  const changes = opts.changes ?? new Map<string, number>();
  const maxAbs = Math.max(0, ...[...changes.values()].map(Math.abs));
  const byId = new Map(tracts.map((t) => [t.id, t]));

  const arcLines = (opts.arcs ?? [])
    .map((a) => {
      const o = byId.get(a.origin);
      const d = byId.get(a.destination);
      if (!o || !d) return "";
      const cls = a.delta >= 0 ? "arc up" : "arc down";
      return (
        `<line class="${cls}" x1="${proj.x(o.centroid.lon).toFixed(2)}" ` +
        `y1="${proj.y(o.centroid.lat).toFixed(2)}" ` +
        `x2="${proj.x(d.centroid.lon).toFixed(2)}" ` +
        `y2="${proj.y(d.centroid.lat).toFixed(2)}" ` +
        `data-origin="${escapeHtml(a.origin)}" ` +
        `data-destination="${escapeHtml(a.destination)}" ` +
        `data-delta="${String(a.delta)}"></line>`
      );
    })
    .join("");

  const circles = tracts
    .map((t) => {
      const value = changes.get(t.id) ?? 0;
      const sel = opts.selected?.has(t.id) ? " selected" : "";
      return (
        `<circle class="tract${sel}" r="7" ` +
        `cx="${proj.x(t.centroid.lon).toFixed(2)}" ` +
        `cy="${proj.y(t.centroid.lat).toFixed(2)}" ` +
        `fill="${changeColor(value, maxAbs)}" ` +
        `data-id="${escapeHtml(t.id)}" data-change="${String(value)}">` +
        `<title>${escapeHtml(t.id)}: ${value >= 0 ? "+" : ""}${value.toFixed(3)}</title>` +
        `</circle>`
      );
    })
    .join("");

  return (
    `<svg class="tract-map" viewBox="0 0 ${size} ${size}" ` +
    `role="img" aria-label="tract map">${arcLines}${circles}</svg>`
  );
}

/** SVG bar chart of the served histogram; one bar per served count. */
export function renderHistogram(bars: HistogramBar[]): string {
  const width = 420;
  const height = 160;
  const pad = 28;
  const maxCount = Math.max(1, ...bars.map((b) => b.count));
  const barWidth = (width - 2 * pad) / Math.max(1, bars.length);
  const rects = bars
    .map((b, i) => {
      const h = ((height - 2 * pad) * b.count) / maxCount;
      return (
        `<rect class="bin" x="${(pad + i * barWidth).toFixed(2)}" ` +
        `y="${(height - pad - h).toFixed(2)}" ` +
        `width="${(barWidth * 0.92).toFixed(2)}" height="${h.toFixed(2)}" ` +
        `data-count="${b.count}" data-x0="${String(b.x0)}" ` +
        `data-x1="${String(b.x1)}">` +
        `<title>[${b.x0.toFixed(3)}, ${b.x1.toFixed(3)}): ${b.count}</title>` +
        `</rect>`
      );
    })
    .join("");
  const lo = bars.length ? bars[0].x0.toFixed(3) : "";
  const hi = bars.length ? bars[bars.length - 1].x1.toFixed(3) : "";
  return (
    `<svg class="diff-histogram" viewBox="0 0 ${width} ${height}" ` +
    `role="img" aria-label="relative change histogram">${rects}` +
    `<text class="axis" x="${pad}" y="${height - 8}">${lo}</text>` +
    `<text class="axis" x="${width - pad}" y="${height - 8}" ` +
    `text-anchor="end">${hi}</text></svg>`
  );
}

/** Summary panel; raw payload numbers ride along in data attributes. */
export function renderSummary(payload: DiffPayload): string {
  const s = payload.summary;
  const pct = (v: number) => `${v >= 0 ? "+" : ""}${(100 * v).toFixed(2)}%`;
  return (
    `<dl class="diff-summary" data-mean="${String(s.mean_relative_change)}" ` +
    `data-std="${String(s.std_relative_change)}" ` +
    `data-n-defined="${s.n_defined}" data-n-undefined="${s.n_undefined}">` +
    `<dt>scenario</dt><dd>${escapeHtml(payload.name)}</dd>` +
    `<dt>filter</dt><dd>${escapeHtml(s.filter)}</dd>` +
    `<dt>mean relative change</dt><dd>${pct(s.mean_relative_change)}</dd>` +
    `<dt>std</dt><dd>${(100 * s.std_relative_change).toFixed(2)}%</dd>` +
    `<dt>pairs</dt><dd>${s.n_defined} defined, ${s.n_undefined} zero-baseline</dd>` +
    `</dl>`
  );
}

export function renderNoChangeBanner(): string {
  return `<div class="banner no-change">No change: this scenario leaves every predicted flow untouched.</div>`;
}

export function renderErrorBanner(message: string): string {
  return `<div class="banner error">${escapeHtml(message)}</div>`;
}

export function renderRetryBanner(message: string): string {
  return (
    `<div class="banner network-error">${escapeHtml(message)} ` +
    `<button type="button" data-action="retry">Retry</button></div>`
  );
}

export function renderRenamePrompt(name: string): string {
  return (
    `<div class="banner rename">Name <strong>${escapeHtml(name)}</strong> ` +
    `is already used with different content. Pick another: ` +
    `<input type="text" data-field="rename" value="${escapeHtml(name)}"> ` +
    `<button type="button" data-action="rename">Rename and resubmit</button></div>`
  );
}

export interface InlineError {
  tractId?: string;
  indicator?: string;
  detail: string;
}

/**
 * The scenario editor: one section per selected tract listing its edits,
 * plus controls to add more. A located validation error renders inline at
 * its tract/indicator row; an unlocated one belongs in the banner slot.
 */
export function renderEditor(
  draft: UiScenarioDraft,
  indicators: IndicatorInfo[],
  error?: InlineError,
): string {
  const options = indicators
    .map((i) => `<option value="${escapeHtml(i.name)}">${escapeHtml(i.name)}</option>`)
    .join("");
  const sections = draft.selected
    .map((tractId) => {
      const rows = (draft.edits[tractId] ?? [])
        .map((e, idx) => {
          const bad =
            error &&
            error.tractId === tractId &&
            (error.indicator === undefined || error.indicator === e.indicator);
          const note = bad
            ? `<span class="inline-error" data-error-for="${escapeHtml(tractId)}/${escapeHtml(e.indicator)}">${escapeHtml(error.detail)}</span>`
            : "";
          return (
            `<li class="edit-row${bad ? " invalid" : ""}">` +
            `<code>${escapeHtml(e.indicator)}</code> ${e.op} ` +
            `<span class="value">${String(e.value)}</span> ` +
            `<button type="button" data-action="remove-edit" ` +
            `data-tract="${escapeHtml(tractId)}" data-index="${idx}">remove</button>` +
            `${note}</li>`
          );
        })
        .join("");
      const tractErr =
        error && error.tractId === tractId && error.indicator === undefined
          ? ` data-error-for="${escapeHtml(tractId)}"`
          : "";
      return (
        `<section class="tract-edits"${tractErr} data-tract="${escapeHtml(tractId)}">` +
        `<h3>${escapeHtml(tractId)}</h3><ul>${rows}</ul></section>`
      );
    })
    .join("");

  return (
    `<form class="scenario-editor">` +
    `<label>Scenario name <input type="text" data-field="name" ` +
    `value="${escapeHtml(draft.name)}"></label>` +
    sections +
    `<fieldset class="add-edit"><legend>Add edit</legend>` +
    `<input type="text" data-field="tract" placeholder="tract id">` +
    `<select data-field="indicator">${options}</select>` +
    `<select data-field="op"><option value="add">add</option>` +
    `<option value="set">set</option></select>` +
    `<input type="number" step="any" data-field="value" value="0">` +
    `<button type="button" data-action="add-edit">Add</button></fieldset>` +
    `<button type="submit" data-action="submit" ` +
    `${editCountZero(draft) ? "disabled" : ""}>Submit scenario</button>` +
    `</form>`
  );
}

function editCountZero(draft: UiScenarioDraft): boolean {
  return Object.values(draft.edits).every((e) => e.length === 0);
}
