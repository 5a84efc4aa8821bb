import { histogramBars, isNoChange, topArcs, tractChange } from "./aggregate.js";
import { ApiClient } from "./api.js";
import { Controller } from "./controller.js";
import { addEdit, emptyDraft, removeEdit } from "./draft.js";
import {
  renderEditor,
  renderErrorBanner,
  renderHistogram,
  renderMap,
  renderNoChangeBanner,
  renderRenamePrompt,
  renderRetryBanner,
  renderSummary,
} from "./render.js";
import type { EditOp } from "./types.js";

const TOP_ARCS = 15;

function $(root: ParentNode, sel: string): HTMLElement {
  const el = root.querySelector(sel);
  if (!el) throw new Error(`missing element ${sel}`);
  return el as HTMLElement;
}

function draw(controller: Controller, root: HTMLElement): void {
  const s = controller.state;
  const banners: string[] = [];
  if (s.networkFailure) banners.push(renderRetryBanner(s.networkFailure));
  if (s.renamePending) banners.push(renderRenamePrompt(s.draft.name));
  if (s.bannerError) banners.push(renderErrorBanner(s.bannerError));

  const selected = new Set(s.draft.selected);
  let mapHtml: string;
  let resultHtml = "";
  if (s.diff) {
    if (isNoChange(s.diff)) banners.push(renderNoChangeBanner());
    const arcsOn =
      (root.querySelector("[data-field=arcs]") as HTMLInputElement | null)
        ?.checked ?? false;
    mapHtml = renderMap(s.tracts, {
      changes: tractChange(s.diff),
      selected,
      arcs: arcsOn ? topArcs(s.diff, TOP_ARCS) : undefined,
    });
    resultHtml =
      renderSummary(s.diff) + renderHistogram(histogramBars(s.diff));
  } else {
    mapHtml = renderMap(s.tracts, { selected });
  }

  $(root, "#banners").innerHTML = banners.join("");
  $(root, "#map").innerHTML = mapHtml;
  $(root, "#results").innerHTML = resultHtml;
  $(root, "#editor").innerHTML = renderEditor(
    s.draft,
    s.indicators,
    s.inlineError ?? undefined,
  );
}

export async function boot(root: HTMLElement): Promise<void> {
  const controller = new Controller(new ApiClient(""), emptyDraft("untitled"));
  await controller.load();
  draw(controller, root);

  root.addEventListener("click", (ev) => {
    const target = ev.target as HTMLElement;
    const action = target.dataset.action;
    if (!action) return;
    ev.preventDefault();
    const field = (name: string) =>
      (root.querySelector(`[data-field=${name}]`) as HTMLInputElement).value;
    const run = async () => {
      if (action === "add-edit") {
        const tract = field("tract").trim();
        if (tract) {
          controller.state.draft = addEdit(controller.state.draft, tract, {
            indicator: field("indicator"),
            op: field("op") as EditOp,
            value: Number(field("value")),
          });
        }
      } else if (action === "remove-edit") {
        controller.state.draft = removeEdit(
          controller.state.draft,
          target.dataset.tract ?? "",
          Number(target.dataset.index),
        );
      } else if (action === "submit") {
        controller.state.draft.name = field("name");
        await controller.submit();
      } else if (action === "rename") {
        await controller.rename(field("rename"));
      } else if (action === "retry") {
        await controller.retry();
      }
      draw(controller, root);
    };
    void run();
  });

  root.addEventListener("change", (ev) => {
    const target = ev.target as HTMLElement;
    if (target.dataset.field === "arcs") draw(controller, root);
    if (target.dataset.field === "name") {
      controller.state.draft.name = (target as HTMLInputElement).value;
    }
  });

  // clicking a map circle selects the tract id into the add-edit form
  root.addEventListener("click", (ev) => {
    const target = ev.target as Element;
    const circle = target.closest?.("circle.tract");
    if (circle) {
      const input = root.querySelector(
        "[data-field=tract]",
      ) as HTMLInputElement | null;
      if (input) input.value = circle.getAttribute("data-id") ?? "";
    }
  });
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void boot(document.getElementById("app") as HTMLElement);
}
