import type {
  DiffPayload,
  HealthResponse,
  ScenarioDocument,
  ScenarioListResponse,
  SubmitResponse,
  TractsResponse,
} from "./types.js";

/** Service answered with a non-2xx status; `detail` is its message. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

/** The request never reached the service (fetch rejected). */
export class NetworkError extends Error {
  constructor(cause: unknown) {
    super(`network failure: ${String(cause)}`);
    this.name = "NetworkError";
  }
}

export interface DiffOptions {
  radiusKm?: number;
  bins?: number;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/**
 * Thin typed client for the endpoints in docs/api.md.
 *
 * The fetch function is injectable so tests can replay recorded service
 * payloads without a network.
 */
export class ApiClient {
  constructor(
    private readonly baseUrl = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.baseUrl + path, init);
    } catch (cause) {
      throw new NetworkError(cause);
    }
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      const detail =
        typeof body?.detail === "string" ? body.detail : resp.statusText;
      throw new ApiError(resp.status, detail);
    }
    return body as T;
  }

  health(): Promise<HealthResponse> {
    return this.request("/health");
  }

  tracts(): Promise<TractsResponse> {
    return this.request("/tracts");
  }

  submitScenario(doc: ScenarioDocument): Promise<SubmitResponse> {
    return this.request("/scenarios", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(doc),
    });
  }

  listScenarios(): Promise<ScenarioListResponse> {
    return this.request("/scenarios");
  }

  scenarioDiff(id: string, opts: DiffOptions = {}): Promise<DiffPayload> {
    const params = new URLSearchParams();
    if (opts.radiusKm !== undefined) {
      params.set("radius_km", String(opts.radiusKm));
    }
    if (opts.bins !== undefined) params.set("bins", String(opts.bins));
    const query = params.toString();
    return this.request(
      `/scenarios/${encodeURIComponent(id)}/diff${query ? "?" + query : ""}`,
    );
  }
}
