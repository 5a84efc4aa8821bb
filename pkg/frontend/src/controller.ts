import { ApiClient, ApiError, NetworkError } from "./api.js";
import type { DiffOptions } from "./api.js";
import { draftToDocument, editCount, locateError } from "./draft.js";
import type { InlineError } from "./render.js";
import type {
  DiffPayload,
  IndicatorInfo,
  TractInfo,
  UiScenarioDraft,
} from "./types.js";

export interface ControllerState {
  tracts: TractInfo[];
  indicators: IndicatorInfo[];
  draft: UiScenarioDraft;
  /** last successfully fetched diff payload, exactly as served */
  diff: DiffPayload | null;
  inlineError: InlineError | null;
  bannerError: string | null;
  /** 409: the server holds different content under this name */
  renamePending: boolean;
  /** network failure message; a retry re-runs the interrupted action */
  networkFailure: string | null;
  diffOptions: DiffOptions;
}

/**
 * All UI behavior without the DOM: submit-and-fetch flow, error routing
 * (422 inline, 409 rename, network retry), and the draft lifecycle. The
 * draft object survives every failure path untouched, so nothing typed is
 * ever lost to an error.
 */
export class Controller {
  state: ControllerState;
  private retryAction: (() => Promise<void>) | null = null;

  constructor(
    private readonly client: ApiClient,
    draft: UiScenarioDraft,
    diffOptions: DiffOptions = {},
  ) {
    this.state = {
      tracts: [],
      indicators: [],
      draft,
      diff: null,
      inlineError: null,
      bannerError: null,
      renamePending: false,
      networkFailure: null,
      diffOptions,
    };
  }

  async load(): Promise<void> {
    await this.guarded(async () => {
      const listing = await this.client.tracts();
      this.state.tracts = listing.tracts;
      this.state.indicators = listing.indicators;
    }, () => this.load());
  }

  /** Submit the draft, then fetch its diff. */
  async submit(): Promise<void> {
    if (editCount(this.state.draft) === 0) {
      this.state.bannerError = "add at least one edit before submitting";
      return;
    }
    await this.guarded(async () => {
      const doc = draftToDocument(this.state.draft);
      const submitted = await this.client.submitScenario(doc);
      this.state.diff = await this.client.scenarioDiff(
        submitted.id,
        this.state.diffOptions,
      );
    }, () => this.submit());
  }

  /** Resolve a 409 by renaming the draft and resubmitting. */
  async rename(newName: string): Promise<void> {
    this.state.draft = { ...this.state.draft, name: newName };
    this.state.renamePending = false;
    await this.submit();
  }

  /** Re-run whatever the network failure interrupted. */
  async retry(): Promise<void> {
    const action = this.retryAction;
    if (action) await action();
  }

  private clearErrors(): void {
    this.state.inlineError = null;
    this.state.bannerError = null;
    this.state.renamePending = false;
    this.state.networkFailure = null;
  }

  private async guarded(
    action: () => Promise<void>,
    again: () => Promise<void>,
  ): Promise<void> {
    this.clearErrors();
    try {
      await action();
      this.retryAction = null;
    } catch (err) {
      if (err instanceof NetworkError) {
        this.state.networkFailure = err.message;
        this.retryAction = again;
      } else if (err instanceof ApiError && err.status === 409) {
        this.state.renamePending = true;
      } else if (err instanceof ApiError && err.status === 422) {
        const at = locateError(err.detail, this.state.draft);
        if (at.indicator !== undefined && at.tractId === undefined) {
          // pin an indicator-only match to the tract that uses it
          at.tractId = this.state.draft.selected.find((tid) =>
            this.state.draft.edits[tid]?.some(
              (e) => e.indicator === at.indicator,
            ),
          );
        }
        if (at.tractId !== undefined || at.indicator !== undefined) {
          this.state.inlineError = { ...at, detail: err.detail };
        } else {
          this.state.bannerError = err.detail;
        }
      } else if (err instanceof ApiError) {
        this.state.bannerError = err.detail;
      } else {
        throw err;
      }
    }
  }
}
