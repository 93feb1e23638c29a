import { ApiClient } from "./api.js";
import { SessionController } from "./controller.js";
import { renderPosterior, renderQuery } from "./render.js";
import type { SessionRequest } from "./types.js";

/** Browser wiring: render on every state change, forward DOM events to the
 * controller. All markup comes from the pure renderers in render.ts. */

function requireEl(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el;
}

export function mount(root: Document = document): void {
  const queryHost = requireEl("query");
  const posteriorHost = requireEl("posterior");
  const configInput = requireEl("session-config") as HTMLTextAreaElement;
  const startButton = requireEl("start-session");
  const refreshButton = requireEl("refresh-posterior");

  const api = new ApiClient(window.location.origin);
  const controller = new SessionController(api);

  controller.subscribe((state) => {
    queryHost.innerHTML = renderQuery(state);
    posteriorHost.innerHTML = renderPosterior(state);
  });

  startButton.addEventListener("click", () => {
    let request: SessionRequest;
    try {
      request = JSON.parse(configInput.value) as SessionRequest;
    } catch {
      queryHost.innerHTML =
        '<div class="error">Session config is not valid JSON.</div>';
      return;
    }
    void controller.start(request);
  });

  refreshButton.addEventListener("click", () => {
    void controller.refreshPosterior();
  });

  queryHost.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const optionId = target.getAttribute("data-option-id");
    if (optionId !== null) {
      const query = controller.getState().query;
      // Pool ids may be numeric; match against the query's own id list.
      const id =
        query?.options.find((o) => String(o) === optionId) ?? optionId;
      controller.toggle(id);
      return;
    }
    const action = target.getAttribute("data-action");
    if (action === "submit") void controller.submit();
    if (action === "retry") void controller.retry();
  });

  posteriorHost.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const sort = target.getAttribute("data-sort");
    if (sort === "id" || sort === "mean") controller.setSort(sort);
  });

  void root; // reserved for future shadow-root mounting
}

if (typeof document !== "undefined" && document.getElementById("query")) {
  mount();
}
