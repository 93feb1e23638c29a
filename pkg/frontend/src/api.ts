import type {
  ChoiceAck,
  ChoiceSubmission,
  PosteriorSummary,
  Query,
  SessionCreated,
  SessionRequest,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: {
    method?: string;
    headers?: Record<string, string>;
    body?: string;
  },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function raiseForStatus(
  res: Awaited<ReturnType<FetchLike>>,
): Promise<unknown> {
  const body = await res.json().catch(() => ({}));
  if (!res.ok) {
    const detail =
      typeof body === "object" && body !== null && "detail" in body
        ? String((body as { detail: unknown }).detail)
        : `HTTP ${res.status}`;
    throw new ApiError(res.status, detail);
  }
  return body;
}

/** Thin typed wrapper over the four session endpoints. The fetch function is
 * injectable so tests can exercise retry behaviour without a network. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async post(path: string, payload: unknown): Promise<unknown> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    return raiseForStatus(res);
  }

  private async get(path: string): Promise<unknown> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`);
    return raiseForStatus(res);
  }

  createSession(req: SessionRequest): Promise<SessionCreated> {
    return this.post("/sessions", req) as Promise<SessionCreated>;
  }

  getQuery(sessionId: string): Promise<Query> {
    return this.get(`/sessions/${sessionId}/query`) as Promise<Query>;
  }

  submitChoice(
    sessionId: string,
    submission: ChoiceSubmission,
  ): Promise<ChoiceAck> {
    return this.post(
      `/sessions/${sessionId}/choice`,
      submission,
    ) as Promise<ChoiceAck>;
  }

  getPosterior(sessionId: string): Promise<PosteriorSummary> {
    return this.get(
      `/sessions/${sessionId}/posterior`,
    ) as Promise<PosteriorSummary>;
  }
}
