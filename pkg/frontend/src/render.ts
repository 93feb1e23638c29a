import { UiState, canSubmit } from "./state.js";
import type { ItemId, PosteriorSummary } from "./types.js";

/** Pure HTML-string renderers: output depends only on the UI state, so the
 * same state always produces the same markup. */

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function optionLabel(state: UiState, id: ItemId): string {
  const display = state.query?.display;
  if (display && typeof display === "object") {
    const entry = (display as Record<string, unknown>)[String(id)];
    if (typeof entry === "string") return entry;
  }
  return String(id);
}

export function renderQuery(state: UiState): string {
  if (state.error !== null) {
    return `<div class="error">${escapeHtml(state.error)}</div>`;
  }
  if (state.query === null) {
    if (state.inFlight || state.lastAck !== null) {
      return `<div class="waiting">Waiting for the next query…</div>`;
    }
    return `<div class="waiting">No active session.</div>`;
  }
  const q = state.query;
  const hint = q.allow_multiple
    ? "Select every option you would accept."
    : "Select the single option you prefer.";
  const options = q.options
    .map((id) => {
      const selected = state.selected.includes(id);
      return (
        `<button class="option${selected ? " selected" : ""}" ` +
        `data-option-id="${escapeHtml(String(id))}" ` +
        `aria-pressed="${selected}">` +
        `${escapeHtml(optionLabel(state, id))}</button>`
      );
    })
    .join("");
  const retry =
    state.retryMessage !== null
      ? `<div class="retry-banner" role="alert">` +
        `Submission failed (${escapeHtml(state.retryMessage)}). ` +
        `Your selection is kept. ` +
        `<button data-action="retry">Retry</button></div>`
      : "";
  const submitDisabled = canSubmit(state) ? "" : " disabled";
  return (
    `<div class="query" data-query-id="${escapeHtml(q.query_id)}">` +
    `<p class="hint">${escapeHtml(hint)}</p>` +
    `<div class="options">${options}</div>` +
    retry +
    `<button data-action="submit"${submitDisabled}>Submit choice</button>` +
    `</div>`
  );
}

export interface PosteriorRow {
  id: ItemId;
  mean: number;
  lo: number;
  hi: number;
}

/** Rows for one latent dimension, sorted by item id or posterior mean. */
export function posteriorRows(
  summary: PosteriorSummary,
  dim: number,
  sortBy: "id" | "mean",
): PosteriorRow[] {
  const util = summary.utilities[dim];
  if (util === undefined) return [];
  const rows = summary.ids.map((id, i) => ({
    id,
    mean: util.mean[i] ?? NaN,
    lo: util["p2.5"][i] ?? NaN,
    hi: util["p97.5"][i] ?? NaN,
  }));
  if (sortBy === "mean") {
    rows.sort((a, b) => b.mean - a.mean);
  }
  return rows;
}

function renderDimension(
  summary: PosteriorSummary,
  dim: number,
  sortBy: "id" | "mean",
): string {
  const rows = posteriorRows(summary, dim, sortBy)
    .map(
      (r) =>
        `<tr><td>${escapeHtml(String(r.id))}</td>` +
        `<td>${r.mean.toFixed(3)}</td>` +
        `<td>[${r.lo.toFixed(3)}, ${r.hi.toFixed(3)}]</td></tr>`,
    )
    .join("");
  return (
    `<section class="posterior-panel" data-dim="${dim}">` +
    `<h3>Utility ${dim + 1}</h3>` +
    `<table><thead><tr><th>Item</th><th>Mean</th>` +
    `<th>95% interval</th></tr></thead>` +
    `<tbody>${rows}</tbody></table></section>`
  );
}

export function renderPosterior(state: UiState): string {
  if (!state.posteriorReady || state.posterior === null) {
    return (
      `<div class="posterior-placeholder">` +
      `No posterior yet — submit a choice first.</div>`
    );
  }
  const summary = state.posterior;
  const panels = summary.utilities
    .map((_, dim) => renderDimension(summary, dim, state.sortBy))
    .join("");
  const rolling =
    summary.rolling_accuracy === null
      ? ""
      : `<p class="rolling">Rolling accuracy: ` +
        `${summary.rolling_accuracy.toFixed(3)}</p>`;
  return (
    `<div class="posterior" data-model-version="${summary.model_version}">` +
    `<div class="sort-controls">Sort by ` +
    `<button data-sort="id"${state.sortBy === "id" ? " disabled" : ""}>item</button> ` +
    `<button data-sort="mean"${state.sortBy === "mean" ? " disabled" : ""}>mean</button>` +
    `</div>${panels}${rolling}</div>`
  );
}
