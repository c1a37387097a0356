declare const __T2P_API_BASE__: string | undefined;

/** Base URL for the playlist API, baked in at build time via T2P_API_BASE.
 *  Empty string means same-origin (the service serving this bundle at /ui/). */
export const API_BASE: string =
  typeof __T2P_API_BASE__ !== "undefined" && __T2P_API_BASE__ ? __T2P_API_BASE__ : "";
