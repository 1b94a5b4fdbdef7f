import type { ShiftSpec } from "./api.js";

/** Everything needed to reproduce the current edit session. */
export interface SessionState {
  seed: number;
  stack: ShiftSpec[];
  sweepDirection: number | null;
}

export function freshSession(): SessionState {
  return { seed: 0, stack: [], sweepDirection: null };
}

function storageKey(checkpointId: string): string {
  return `latentshift-session-${checkpointId}`;
}

/** Sessions persist per checkpoint identity so edits survive reloads but
 * never leak across models. */
export function loadSession(checkpointId: string): SessionState {
  try {
    const raw = localStorage.getItem(storageKey(checkpointId));
    if (raw) {
      return importSession(raw);
    }
  } catch {
    /* corrupted storage falls through to a fresh session */
  }
  return freshSession();
}

export function saveSession(checkpointId: string, state: SessionState): void {
  localStorage.setItem(storageKey(checkpointId), exportSession(state));
}

export function exportSession(state: SessionState): string {
  return JSON.stringify(state);
}

export function importSession(raw: string): SessionState {
  const parsed = JSON.parse(raw) as Partial<SessionState>;
  if (typeof parsed.seed !== "number" || !Array.isArray(parsed.stack)) {
    throw new Error("not a session document");
  }
  const stack = parsed.stack.map((s) => {
    if (typeof s?.k !== "number" || typeof s?.eps !== "number") {
      throw new Error("malformed shift in session document");
    }
    return { k: s.k, eps: s.eps };
  });
  return {
    seed: parsed.seed,
    stack,
    sweepDirection: typeof parsed.sweepDirection === "number" ? parsed.sweepDirection : null,
  };
}
