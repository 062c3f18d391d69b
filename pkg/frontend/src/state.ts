import type { PredictionResponse } from "./types.js";

/** One reviewed upload, kept for the session history list. */
export interface HistoryEntry {
  fileName: string;
  topDisease: string;
  topProbability: number;
}

export type Phase = "idle" | "uploading" | "ready" | "explaining";

/**
 * The whole UI is a pure function of this state; every transition below
 * returns a fresh object so renders are reproducible and snapshot-stable.
 */
export interface ReviewSession {
  phase: Phase;
  fileName: string | null;
  previewUrl: string | null; // raw uploaded image (data URL)
  response: PredictionResponse | null;
  camDisease: string | null; // disease whose overlay is showing
  camOverlayUrl: string | null;
  camSupported: boolean;
  error: string | null;
  history: HistoryEntry[];
}

export function initialSession(camSupported = true): ReviewSession {
  return {
    phase: "idle",
    fileName: null,
    previewUrl: null,
    response: null,
    camDisease: null,
    camOverlayUrl: null,
    camSupported,
    error: null,
    history: [],
  };
}

export function isBusy(session: ReviewSession): boolean {
  return session.phase === "uploading" || session.phase === "explaining";
}

export function beginUpload(session: ReviewSession, fileName: string): ReviewSession {
  return { ...session, phase: "uploading", fileName, error: null };
}

export function uploadSucceeded(
  session: ReviewSession,
  previewUrl: string,
  response: PredictionResponse,
): ReviewSession {
  const top = response.top5[0];
  const entry: HistoryEntry = {
    fileName: session.fileName ?? "upload",
    topDisease: top ? top.disease : "?",
    topProbability: top ? top.probability : 0,
  };
  return {
    ...session,
    phase: "ready",
    previewUrl,
    response,
    camDisease: null,
    camOverlayUrl: null,
    error: null,
    history: [...session.history, entry],
  };
}

export function uploadFailed(session: ReviewSession, message: string): ReviewSession {
  // session (preview, previous response, history) survives the failure
  return { ...session, phase: session.response ? "ready" : "idle", error: message };
}

export function beginExplain(session: ReviewSession, disease: string): ReviewSession {
  return { ...session, phase: "explaining", camDisease: disease, error: null };
}

export function explainSucceeded(
  session: ReviewSession,
  disease: string,
  overlayUrl: string,
): ReviewSession {
  return {
    ...session,
    phase: "ready",
    camDisease: disease,
    camOverlayUrl: overlayUrl,
  };
}

export function explainFailed(session: ReviewSession, message: string): ReviewSession {
  return {
    ...session,
    phase: "ready",
    camDisease: null,
    camOverlayUrl: null,
    error: message,
  };
}

/** Toggling the overlay off restores the raw preview untouched. */
export function camOff(session: ReviewSession): ReviewSession {
  return { ...session, camDisease: null, camOverlayUrl: null };
}
