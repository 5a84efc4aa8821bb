import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, NetworkError } from "../src/api.js";
import type { ScenarioDocument } from "../src/types.js";
import diffBike from "./fixtures/diff_bike.json";
import errDuplicate from "./fixtures/error_duplicate_name.json";
import errUnknownTract from "./fixtures/error_unknown_tract.json";
import scenarioBike from "./fixtures/scenario_bike.json";
import submitCreated from "./fixtures/submit_created.json";
import tractsFixture from "./fixtures/tracts.json";

type Call = { url: string; init?: RequestInit };

function stub(responses: { status: number; body: unknown }[]) {
  const calls: Call[] = [];
  let i = 0;
  const fetchFn = async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    const r = responses[Math.min(i++, responses.length - 1)];
    return new Response(JSON.stringify(r.body), {
      status: r.status,
      headers: { "content-type": "application/json" },
    });
  };
  return { calls, fetchFn };
}

describe("request shaping", () => {
  it("fetches the tract listing", async () => {
    const { calls, fetchFn } = stub([{ status: 200, body: tractsFixture }]);
    const got = await new ApiClient("", fetchFn).tracts();
    expect(calls[0].url).toBe("/tracts");
    expect(got).toEqual(tractsFixture);
  });

  it("posts the scenario document as JSON", async () => {
    const { calls, fetchFn } = stub([{ status: 201, body: submitCreated }]);
    const doc = scenarioBike as ScenarioDocument;
    const got = await new ApiClient("", fetchFn).submitScenario(doc);
    expect(calls[0].url).toBe("/scenarios");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual(doc);
    expect(got.id).toBe((submitCreated as { id: string }).id);
    expect(got.created).toBe(true);
  });

  it("builds diff query parameters", async () => {
    const { calls, fetchFn } = stub([{ status: 200, body: diffBike }]);
    const payload = await new ApiClient("", fetchFn).scenarioDiff("abc123", {
      radiusKm: 2.0,
      bins: 8,
    });
    expect(calls[0].url).toBe("/scenarios/abc123/diff?radius_km=2&bins=8");
    expect(payload).toEqual(diffBike);
  });

  it("omits the query string when no options are given", async () => {
    const { calls, fetchFn } = stub([{ status: 200, body: diffBike }]);
    await new ApiClient("", fetchFn).scenarioDiff("abc123");
    expect(calls[0].url).toBe("/scenarios/abc123/diff");
  });
});

describe("error mapping", () => {
  it("maps 422 to ApiError with the service's detail", async () => {
    const { fetchFn } = stub([
      { status: errUnknownTract.status, body: errUnknownTract.body },
    ]);
    const err = await new ApiClient("", fetchFn)
      .submitScenario({ name: "x", edits: [] })
      .catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(422);
    expect(err.detail).toBe(errUnknownTract.body.detail);
  });

  it("maps 409 to ApiError carrying the collision message", async () => {
    const { fetchFn } = stub([
      { status: errDuplicate.status, body: errDuplicate.body },
    ]);
    const err = await new ApiClient("", fetchFn)
      .submitScenario(scenarioBike as ScenarioDocument)
      .catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(409);
    expect(err.detail).toContain("riverside bike lanes");
  });

  it("wraps fetch rejections as NetworkError", async () => {
    const fetchFn = async () => {
      throw new TypeError("fetch failed");
    };
    const err = await new ApiClient("", fetchFn).health().catch((e) => e);
    expect(err).toBeInstanceOf(NetworkError);
  });
});
