/** Wire types for the elicitation HTTP API. The client renders exactly what
 * the server sends; no utilities or probabilities are computed here. */

export type ItemId = string | number;

export interface PoolSpec {
  ids: ItemId[];
  features: number[][];
  /** Optional per-item presentation payload (labels, image URLs, ...). */
  display?: Record<string, unknown>;
}

export interface SessionRequest {
  pool: PoolSpec;
  model: Record<string, unknown>;
  query_size: number;
  seed: number;
  refit_every?: number;
  sync_refit?: boolean;
  session_id?: string;
  strategy?: string;
}

export interface Query {
  query_id: string;
  options: ItemId[];
  option_indices: number[];
  allow_multiple: boolean;
  model_version: number;
  display?: Record<string, unknown>;
}

export interface SessionCreated {
  session_id: string;
  query: Query;
}

export interface ChoiceSubmission {
  query_id: string;
  chosen: ItemId[];
  idempotency_key: string;
}

export interface ChoiceAck {
  accepted: boolean;
  query_id: string;
  n_statements: number;
  model_version: number;
}

/** One latent utility dimension, summarized per pool item. */
export interface UtilityDimension {
  mean: number[];
  "p2.5": number[];
  "p97.5": number[];
}

export interface PosteriorSummary {
  session_id: string;
  model_version: number;
  ids: ItemId[];
  utilities: UtilityDimension[];
  rolling_accuracy: number | null;
  n_statements: number;
  n_scored: number;
}
