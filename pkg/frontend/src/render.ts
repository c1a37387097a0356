import type { HistoryEntry } from "./session";
import type { PlaylistResponse } from "./types";

export function escapeHtml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function badges(playlist: PlaylistResponse): string {
  const parts: string[] = [];
  const p = playlist.provenance;
  if (p.degraded) {
    parts.push('<span class="badge badge-degraded">degraded mode</span>');
  }
  parts.push(
    p.personalized
      ? '<span class="badge badge-personal">personalized</span>'
      : '<span class="badge">not personalized</span>',
  );
  if (p.relaxation_level > 0) {
    parts.push(`<span class="badge">relaxed x${p.relaxation_level}</span>`);
  }
  parts.push(`<span class="badge">${escapeHtml(p.extraction_backend)} / ${escapeHtml(p.refinement_backend)}</span>`);
  return parts.join(" ");
}

export function renderPlaylist(playlist: PlaylistResponse, listened: boolean): string {
  const rows = playlist.tracks
    .map((track, i) => {
      const title = track.title ?? track.track_id;
      const artist = track.artist_name ?? "unknown artist";
      return `<li><span class="pos">${i + 1}</span> <span class="track-title">${escapeHtml(title)}</span> <span class="artist">${escapeHtml(artist)}</span></li>`;
    })
    .join("\n");
  const button = listened
    ? '<button id="listen-btn" disabled>Listened ✓</button>'
    : '<button id="listen-btn" data-playlist-id="' + escapeHtml(playlist.playlist_id) + '">Mark listened</button>';
  return `
<section class="playlist" data-playlist-id="${escapeHtml(playlist.playlist_id)}">
  <header>
    <h2>${escapeHtml(playlist.title)}</h2>
    <div class="badges">${badges(playlist)}</div>
  </header>
  <ol class="tracks">
${rows}
  </ol>
  ${button}
</section>`;
}

export function renderHint(hint: string): string {
  return `<div class="banner banner-hint" role="status">${escapeHtml(hint)}</div>`;
}

export function renderError(message: string): string {
  return `<div class="banner banner-error" role="alert">${escapeHtml(message)}</div>`;
}

export function renderHistory(entries: readonly HistoryEntry[]): string {
  if (entries.length === 0) {
    return "";
  }
  const items = [...entries]
    .reverse()
    .map((entry) => {
      const mark = entry.playlistId ? "&#9834;" : "&#8709;";
      return `<li><button class="history-query" data-query="${escapeHtml(entry.query)}">${mark} ${escapeHtml(entry.query)}</button></li>`;
    })
    .join("\n");
  return `<h3>History</h3>\n<ul class="history">\n${items}\n</ul>`;
}
