import { ApiClient, ApiError } from "./api";
import type { PlaylistResponse } from "./types";

export interface HistoryEntry {
  query: string;
  playlistId: string | null;
  at: number;
}

export type SubmitResult =
  | { kind: "playlist"; playlist: PlaylistResponse }
  | { kind: "hint"; hint: string }
  | { kind: "error"; message: string }
  | { kind: "busy" };

export type ListenResult = "stored" | "duplicate" | "none" | { error: string };

/** One browser session: append-only query history, the current playlist,
 *  and at most one in-flight generation request. First submissions and
 *  reformulated retries go through the same path. */
export class UiSession {
  readonly history: HistoryEntry[] = [];
  current: PlaylistResponse | null = null;
  pending = false;

  private listenPending = false;
  private readonly listened = new Set<string>();
  // timestamp captured on the first click so retries dedupe server-side
  private readonly listenStamps = new Map<string, string>();

  constructor(
    private readonly api: ApiClient,
    private readonly now: () => Date = () => new Date(),
  ) {}

  async submit(userId: string, query: string): Promise<SubmitResult> {
    if (this.pending) {
      return { kind: "busy" };
    }
    this.pending = true;
    try {
      const playlist = await this.api.generatePlaylist(userId, query);
      this.current = playlist;
      this.history.push({ query, playlistId: playlist.playlist_id, at: this.now().getTime() });
      return { kind: "playlist", playlist };
    } catch (err) {
      this.history.push({ query, playlistId: null, at: this.now().getTime() });
      if (err instanceof ApiError && err.isReformulation) {
        return { kind: "hint", hint: err.hint ?? err.message };
      }
      return { kind: "error", message: err instanceof ApiError ? `${err.code}: ${err.message}` : String(err) };
    } finally {
      this.pending = false;
    }
  }

  hasListened(playlistId: string): boolean {
    return this.listened.has(playlistId);
  }

  async markListened(): Promise<ListenResult> {
    const playlist = this.current;
    if (!playlist) {
      return "none";
    }
    if (this.listened.has(playlist.playlist_id) || this.listenPending) {
      return "duplicate";
    }
    this.listenPending = true;
    try {
      let stamp = this.listenStamps.get(playlist.playlist_id);
      if (!stamp) {
        stamp = this.now().toISOString();
        this.listenStamps.set(playlist.playlist_id, stamp);
      }
      await this.api.markListened(playlist.playlist_id, stamp);
      this.listened.add(playlist.playlist_id);
      return "stored";
    } catch (err) {
      return { error: err instanceof Error ? err.message : String(err) };
    } finally {
      this.listenPending = false;
    }
  }
}
