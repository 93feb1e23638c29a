import { ApiClient, ApiError } from "./api.js";
import {
  Action,
  UiState,
  canSubmit,
  initialState,
  reduce,
} from "./state.js";
import type { ItemId, SessionRequest } from "./types.js";

export type Listener = (state: UiState) => void;

/** Orchestrates the session: every server response is folded into the UI
 * state through the reducer, and every choice submission carries an
 * idempotency key derived from the query id, so a retry (or a re-submission
 * after a page refresh) can never register as a second choice. */
export class SessionController {
  private state: UiState = initialState;
  private readonly listeners: Listener[] = [];

  constructor(private readonly api: ApiClient) {}

  getState(): UiState {
    return this.state;
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private dispatch(action: Action): void {
    this.state = reduce(this.state, action);
    for (const listener of this.listeners) listener(this.state);
  }

  /** Deterministic per-query key: identical across retries and refreshes. */
  idempotencyKey(queryId: string): string {
    return `choice:${this.state.sessionId}:${queryId}`;
  }

  async start(request: SessionRequest): Promise<void> {
    try {
      const created = await this.api.createSession(request);
      this.dispatch({
        type: "session_created",
        sessionId: created.session_id,
        query: created.query,
      });
    } catch (err) {
      this.dispatch({ type: "fatal_error", message: describe(err) });
    }
  }

  toggle(id: ItemId): void {
    this.dispatch({ type: "toggle_option", id });
  }

  setSort(sortBy: "id" | "mean"): void {
    this.dispatch({ type: "set_sort", sortBy });
  }

  /** Submit the current selection as a single choice statement. A selection
   * of several options still travels as one submission. No-op unless
   * submission is currently allowed (>= 1 selected, nothing in flight). */
  async submit(): Promise<void> {
    const { sessionId, query, selected } = this.state;
    if (sessionId === null || query === null || !canSubmit(this.state)) {
      return;
    }
    this.dispatch({ type: "submit_started" });
    try {
      const ack = await this.api.submitChoice(sessionId, {
        query_id: query.query_id,
        chosen: [...selected],
        idempotency_key: this.idempotencyKey(query.query_id),
      });
      this.dispatch({ type: "submit_acked", ack });
    } catch (err) {
      this.dispatch({ type: "submit_failed", message: describe(err) });
      return;
    }
    await this.advance();
  }

  /** Re-send the failed submission; same query id, same idempotency key. */
  async retry(): Promise<void> {
    await this.submit();
  }

  /** Only called after an ack: fetch the next query from the server. */
  private async advance(): Promise<void> {
    const sessionId = this.state.sessionId;
    if (sessionId === null) return;
    try {
      const query = await this.api.getQuery(sessionId);
      this.dispatch({ type: "query_received", query });
    } catch (err) {
      this.dispatch({ type: "fatal_error", message: describe(err) });
    }
  }

  async refreshPosterior(): Promise<void> {
    const sessionId = this.state.sessionId;
    if (sessionId === null) return;
    try {
      const summary = await this.api.getPosterior(sessionId);
      this.dispatch({ type: "posterior_received", summary });
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.dispatch({ type: "posterior_not_ready" });
        return;
      }
      this.dispatch({ type: "fatal_error", message: describe(err) });
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.status}: ${err.message}`;
  if (err instanceof Error) return err.message;
  return String(err);
}
