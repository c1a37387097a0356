import type { ApiErrorBody, PlaylistResponse } from "./types";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Error carrying the HTTP status and the server's reformulation hint, if any.
 *  status 0 means the request never reached the server. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly hint?: string,
  ) {
    super(message);
    this.name = "ApiError";
  }

  get isReformulation(): boolean {
    return this.status === 422 && typeof this.hint === "string";
  }
}

async function errorFromResponse(res: Response): Promise<ApiError> {
  let body: ApiErrorBody = {};
  try {
    body = (await res.json()) as ApiErrorBody;
  } catch {
    // non-JSON error body; fall through to the status line
  }
  return new ApiError(
    res.status,
    body.error ?? `HTTP ${res.status}`,
    body.detail ?? `request failed with status ${res.status}`,
    body.hint,
  );
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let res: Response;
    try {
      res = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(0, "NetworkError", err instanceof Error ? err.message : String(err));
    }
    if (!res.ok) {
      throw await errorFromResponse(res);
    }
    return res;
  }

  async generatePlaylist(userId: string, query: string, length?: number): Promise<PlaylistResponse> {
    const res = await this.request("/v1/playlists", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(length ? { user_id: userId, query, length } : { user_id: userId, query }),
    });
    return (await res.json()) as PlaylistResponse;
  }

  async getPlaylist(playlistId: string): Promise<PlaylistResponse> {
    const res = await this.request(`/v1/playlists/${encodeURIComponent(playlistId)}`);
    return (await res.json()) as PlaylistResponse;
  }

  /** Returns the server's `stored` flag: false means it was a duplicate. */
  async markListened(playlistId: string, occurredAt: string): Promise<boolean> {
    const res = await this.request(`/v1/playlists/${encodeURIComponent(playlistId)}/events`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ type: "listened", occurred_at: occurredAt }),
    });
    const body = (await res.json()) as { stored: boolean };
    return body.stored;
  }
}
