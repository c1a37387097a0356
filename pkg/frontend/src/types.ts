export interface TrackView {
  track_id: string;
  title: string | null;
  artist_name: string | null;
}

export interface Provenance {
  extraction_backend: string;
  refinement_backend: string;
  relaxation_level: number;
  personalized: boolean;
  degraded: boolean;
}

export interface PlaylistResponse {
  playlist_id: string;
  title: string;
  tracks: TrackView[];
  provenance: Provenance;
  snapshot_id?: number;
}

export interface ApiErrorBody {
  error?: string;
  detail?: string;
  hint?: string;
}
