import { describe, expect, it } from "vitest";
import {
  Action,
  UiState,
  canSubmit,
  initialState,
  reduce,
} from "../src/state.js";
import type { Query } from "../src/types.js";

function query(overrides: Partial<Query> = {}): Query {
  return {
    query_id: "q1",
    options: ["a", "b", "c"],
    option_indices: [0, 1, 2],
    allow_multiple: false,
    model_version: 0,
    ...overrides,
  };
}

function withQuery(q: Query = query()): UiState {
  return reduce(initialState, {
    type: "session_created",
    sessionId: "s1",
    query: q,
  });
}

describe("selection toggling", () => {
  it("single-select queries replace the selection", () => {
    let s = withQuery();
    s = reduce(s, { type: "toggle_option", id: "a" });
    expect(s.selected).toEqual(["a"]);
    s = reduce(s, { type: "toggle_option", id: "b" });
    expect(s.selected).toEqual(["b"]);
    s = reduce(s, { type: "toggle_option", id: "b" });
    expect(s.selected).toEqual([]);
  });

  it("multi-select queries accumulate and toggle off", () => {
    let s = withQuery(query({ allow_multiple: true }));
    s = reduce(s, { type: "toggle_option", id: "a" });
    s = reduce(s, { type: "toggle_option", id: "c" });
    expect(s.selected).toEqual(["a", "c"]);
    s = reduce(s, { type: "toggle_option", id: "a" });
    expect(s.selected).toEqual(["c"]);
  });

  it("ignores ids that are not options of the current query", () => {
    let s = withQuery();
    s = reduce(s, { type: "toggle_option", id: "zzz" });
    expect(s.selected).toEqual([]);
  });

  it("ignores toggles while a submission is in flight", () => {
    let s = withQuery();
    s = reduce(s, { type: "toggle_option", id: "a" });
    s = reduce(s, { type: "submit_started" });
    s = reduce(s, { type: "toggle_option", id: "b" });
    expect(s.selected).toEqual(["a"]);
  });
});

describe("submission gating", () => {
  it("submit requires at least one selected option", () => {
    let s = withQuery();
    expect(canSubmit(s)).toBe(false);
    expect(reduce(s, { type: "submit_started" }).inFlight).toBe(false);
    s = reduce(s, { type: "toggle_option", id: "a" });
    expect(canSubmit(s)).toBe(true);
  });

  it("only one submission can be in flight", () => {
    let s = withQuery();
    s = reduce(s, { type: "toggle_option", id: "a" });
    s = reduce(s, { type: "submit_started" });
    expect(canSubmit(s)).toBe(false);
    expect(reduce(s, { type: "submit_started" })).toEqual(s);
  });

  it("the server ack gates the next query", () => {
    let s = withQuery();
    s = reduce(s, { type: "toggle_option", id: "a" });
    s = reduce(s, { type: "submit_started" });
    s = reduce(s, {
      type: "submit_acked",
      ack: { accepted: true, query_id: "q1", n_statements: 1, model_version: 1 },
    });
    // no query is displayed (and none can be answered) until the server
    // delivers the next one
    expect(s.query).toBeNull();
    expect(canSubmit(s)).toBe(false);
    s = reduce(s, { type: "query_received", query: query({ query_id: "q2" }) });
    expect(s.query?.query_id).toBe("q2");
    expect(s.selected).toEqual([]);
  });
});

describe("failure handling", () => {
  it("a failed submission keeps the selection and raises the retry banner", () => {
    let s = withQuery();
    s = reduce(s, { type: "toggle_option", id: "b" });
    s = reduce(s, { type: "submit_started" });
    s = reduce(s, { type: "submit_failed", message: "connection reset" });
    expect(s.selected).toEqual(["b"]);
    expect(s.inFlight).toBe(false);
    expect(s.retryMessage).toBe("connection reset");
    expect(canSubmit(s)).toBe(true); // retry is possible immediately
  });
});

describe("purity", () => {
  it("the same action sequence always yields the same state", () => {
    const actions: Action[] = [
      { type: "session_created", sessionId: "s1", query: query() },
      { type: "toggle_option", id: "a" },
      { type: "submit_started" },
      { type: "submit_failed", message: "boom" },
      { type: "submit_started" },
      {
        type: "submit_acked",
        ack: { accepted: true, query_id: "q1", n_statements: 1, model_version: 1 },
      },
      { type: "query_received", query: query({ query_id: "q2" }) },
    ];
    const run = () => actions.reduce(reduce, initialState);
    expect(run()).toEqual(run());
  });

  it("reduce never mutates its input", () => {
    const before = withQuery();
    const frozen = JSON.stringify(before);
    reduce(before, { type: "toggle_option", id: "a" });
    reduce(before, { type: "submit_started" });
    expect(JSON.stringify(before)).toBe(frozen);
  });
});
