import type {
  DraftEdit,
  ScenarioDocument,
  UiScenarioDraft,
} from "./types.js";

export function emptyDraft(name = ""): UiScenarioDraft {
  return { name, selected: [], edits: {} };
}

/** Append an edit, keeping selection order and the edit-implies-selected
 * invariant. */
export function addEdit(
  draft: UiScenarioDraft,
  tractId: string,
  edit: DraftEdit,
): UiScenarioDraft {
  const edits = { ...draft.edits };
  edits[tractId] = [...(edits[tractId] ?? []), edit];
  const selected = draft.selected.includes(tractId)
    ? draft.selected
    : [...draft.selected, tractId];
  return { ...draft, selected, edits };
}

export function removeEdit(
  draft: UiScenarioDraft,
  tractId: string,
  index: number,
): UiScenarioDraft {
  const kept = (draft.edits[tractId] ?? []).filter((_, i) => i !== index);
  const edits = { ...draft.edits };
  const selected = draft.selected.slice();
  if (kept.length === 0) {
    delete edits[tractId];
    const at = selected.indexOf(tractId);
    if (at >= 0) selected.splice(at, 1);
  } else {
    edits[tractId] = kept;
  }
  return { ...draft, selected, edits };
}

export function editCount(draft: UiScenarioDraft): number {
  return Object.values(draft.edits).reduce((n, e) => n + e.length, 0);
}

/** Draft -> scenario document, tract selection order preserved. */
export function draftToDocument(draft: UiScenarioDraft): ScenarioDocument {
  const edits = draft.selected.flatMap((tractId) =>
    (draft.edits[tractId] ?? []).map((e) => ({
      tract_id: tractId,
      indicator: e.indicator,
      op: e.op,
      value: e.value,
    })),
  );
  const doc: ScenarioDocument = { name: draft.name, edits };
  if (draft.note !== undefined && draft.note !== "") doc.note = draft.note;
  return doc;
}

/** Scenario document -> draft; inverse of draftToDocument. */
export function documentToDraft(doc: ScenarioDocument): UiScenarioDraft {
  let draft = emptyDraft(doc.name);
  if (doc.note !== undefined && doc.note !== "") draft.note = doc.note;
  for (const e of doc.edits) {
    draft = addEdit(draft, e.tract_id, {
      indicator: e.indicator,
      op: e.op,
      value: e.value,
    });
  }
  return draft;
}

/**
 * Pin a 422 detail message to the offending tract/indicator of the draft.
 *
 * The service quotes offending names ('t01', 'tram_stops', ...); any quoted
 * token matching a selected tract or an edited indicator locates the error.
 * Unmatched messages fall back to the scenario level (banner display).
 */
export function locateError(
  detail: string,
  draft: UiScenarioDraft,
): { tractId?: string; indicator?: string } {
  const quoted = [...detail.matchAll(/'([^']*)'/g)].map((m) => m[1]);
  const out: { tractId?: string; indicator?: string } = {};
  for (const token of quoted) {
    if (out.tractId === undefined && draft.selected.includes(token)) {
      out.tractId = token;
    }
    const indicatorUsed = Object.values(draft.edits).some((edits) =>
      edits.some((e) => e.indicator === token),
    );
    if (out.indicator === undefined && indicatorUsed) out.indicator = token;
  }
  return out;
}
