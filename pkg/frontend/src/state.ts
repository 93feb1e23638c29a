import type {
  ChoiceAck,
  ItemId,
  PosteriorSummary,
  Query,
} from "./types.js";

/** UI state is a pure function of server responses plus local selection.
 * Every transition goes through `reduce`; nothing else mutates state. */
export interface UiState {
  sessionId: string | null;
  query: Query | null;
  selected: ItemId[];
  /** True while a choice submission is awaiting the server ack. */
  inFlight: boolean;
  /** Non-null after a failed submission; selection is preserved. */
  retryMessage: string | null;
  lastAck: ChoiceAck | null;
  posterior: PosteriorSummary | null;
  posteriorReady: boolean;
  sortBy: "id" | "mean";
  error: string | null;
}

export const initialState: UiState = {
  sessionId: null,
  query: null,
  selected: [],
  inFlight: false,
  retryMessage: null,
  lastAck: null,
  posterior: null,
  posteriorReady: false,
  sortBy: "id",
  error: null,
};

export type Action =
  | { type: "session_created"; sessionId: string; query: Query }
  | { type: "toggle_option"; id: ItemId }
  | { type: "submit_started" }
  | { type: "submit_failed"; message: string }
  | { type: "submit_acked"; ack: ChoiceAck }
  | { type: "query_received"; query: Query }
  | { type: "posterior_received"; summary: PosteriorSummary }
  | { type: "posterior_not_ready" }
  | { type: "set_sort"; sortBy: "id" | "mean" }
  | { type: "fatal_error"; message: string };

/** Submission is allowed once at least one option is selected and no
 * submission is already in flight. */
export function canSubmit(state: UiState): boolean {
  return (
    state.query !== null && state.selected.length >= 1 && !state.inFlight
  );
}

export function reduce(state: UiState, action: Action): UiState {
  switch (action.type) {
    case "session_created":
      return {
        ...initialState,
        sessionId: action.sessionId,
        query: action.query,
        sortBy: state.sortBy,
      };

    case "toggle_option": {
      if (state.query === null || state.inFlight) return state;
      if (!state.query.options.includes(action.id)) return state;
      const already = state.selected.includes(action.id);
      let selected: ItemId[];
      if (already) {
        selected = state.selected.filter((x) => x !== action.id);
      } else if (state.query.allow_multiple) {
        selected = [...state.selected, action.id];
      } else {
        selected = [action.id];
      }
      return { ...state, selected };
    }

    case "submit_started":
      if (!canSubmit(state)) return state;
      return { ...state, inFlight: true, retryMessage: null };

    case "submit_failed":
      // Keep the selection so the user can retry without re-entering it.
      return {
        ...state,
        inFlight: false,
        retryMessage: action.message,
      };

    case "submit_acked":
      // The ack gates the next query: the current one is cleared and the
      // submit control stays unavailable until `query_received` arrives.
      return {
        ...state,
        inFlight: false,
        retryMessage: null,
        lastAck: action.ack,
        query: null,
        selected: [],
      };

    case "query_received":
      return { ...state, query: action.query, selected: [] };

    case "posterior_received":
      return { ...state, posterior: action.summary, posteriorReady: true };

    case "posterior_not_ready":
      return { ...state, posterior: null, posteriorReady: false };

    case "set_sort":
      return { ...state, sortBy: action.sortBy };

    case "fatal_error":
      return { ...state, inFlight: false, error: action.message };
  }
}
