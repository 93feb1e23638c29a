import { describe, expect, it } from "vitest";
import { renderPosterior, renderQuery, posteriorRows } from "../src/render.js";
import { initialState, reduce, UiState } from "../src/state.js";
import type { PosteriorSummary, Query } from "../src/types.js";

function query(overrides: Partial<Query> = {}): Query {
  return {
    query_id: "q1",
    options: ["a", "b"],
    option_indices: [0, 1],
    allow_multiple: false,
    model_version: 0,
    ...overrides,
  };
}

function stateWith(overrides: Partial<UiState>): UiState {
  return { ...initialState, sessionId: "s1", ...overrides };
}

function summary(nDims: number): PosteriorSummary {
  const dim = (offset: number) => ({
    mean: [0.3 + offset, -0.1 + offset, 0.7 + offset],
    "p2.5": [0.1 + offset, -0.3 + offset, 0.5 + offset],
    "p97.5": [0.5 + offset, 0.1 + offset, 0.9 + offset],
  });
  return {
    session_id: "s1",
    model_version: 2,
    ids: ["a", "b", "c"],
    utilities: Array.from({ length: nDims }, (_, i) => dim(i)),
    rolling_accuracy: 0.8125,
    n_statements: 5,
    n_scored: 5,
  };
}

describe("query rendering", () => {
  it("disables submit until an option is selected", () => {
    const empty = stateWith({ query: query() });
    expect(renderQuery(empty)).toContain('data-action="submit" disabled');
    const picked = reduce(empty, { type: "toggle_option", id: "a" });
    expect(renderQuery(picked)).not.toContain("disabled");
    expect(renderQuery(picked)).toContain('aria-pressed="true"');
  });

  it("shows the retry banner without losing the selection", () => {
    let s = stateWith({ query: query() });
    s = reduce(s, { type: "toggle_option", id: "b" });
    s = reduce(s, { type: "submit_started" });
    s = reduce(s, { type: "submit_failed", message: "timeout" });
    const html = renderQuery(s);
    expect(html).toContain("retry-banner");
    expect(html).toContain("timeout");
    expect(html).toContain('data-action="retry"');
    // the selected option is still marked selected
    expect(html).toMatch(/data-option-id="b"[^>]*aria-pressed="true"/);
  });

  it("is a pure function of state", () => {
    const s = stateWith({ query: query({ allow_multiple: true }) });
    expect(renderQuery(s)).toBe(renderQuery({ ...s }));
  });

  it("escapes display strings", () => {
    const s = stateWith({
      query: query({ display: { a: '<img src=x onerror="1">' } }),
    });
    expect(renderQuery(s)).not.toContain("<img");
  });
});

describe("posterior rendering", () => {
  it("shows a placeholder before the first fit", () => {
    expect(renderPosterior(stateWith({}))).toContain("No posterior yet");
  });

  it("renders one panel per latent dimension", () => {
    const s1 = stateWith({ posterior: summary(1), posteriorReady: true });
    const s2 = stateWith({ posterior: summary(2), posteriorReady: true });
    expect(renderPosterior(s1).match(/posterior-panel/g)).toHaveLength(1);
    expect(renderPosterior(s2).match(/posterior-panel/g)).toHaveLength(2);
    expect(renderPosterior(s2)).toContain("Utility 2");
  });

  it("sorts rows by posterior mean on request", () => {
    const byId = posteriorRows(summary(1), 0, "id");
    expect(byId.map((r) => r.id)).toEqual(["a", "b", "c"]);
    const byMean = posteriorRows(summary(1), 0, "mean");
    expect(byMean.map((r) => r.id)).toEqual(["c", "a", "b"]);
    expect(byMean[0]?.mean).toBeCloseTo(0.7);
  });

  it("shows rolling accuracy when available", () => {
    const s = stateWith({ posterior: summary(1), posteriorReady: true });
    expect(renderPosterior(s)).toContain("0.813");
  });
});
