/** Session state: playlist order, progress, resume-after-reload. */

import { Answer, ApiClient, SubmitOutcome } from "./api.js";

export interface SavedProgress {
  sessionId: string;
  playlist: string[];
  answered: string[];
}

/** Minimal persistent map; window.localStorage satisfies it. */
export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export class MemoryStore implements KeyValueStore {
  private data = new Map<string, string>();
  getItem(key: string): string | null {
    return this.data.has(key) ? (this.data.get(key) as string) : null;
  }
  setItem(key: string, value: string): void {
    this.data.set(key, value);
  }
  removeItem(key: string): void {
    this.data.delete(key);
  }
}

function storageKey(testId: string): string {
  return `listening-test:${testId}`;
}

function loadProgress(store: KeyValueStore, testId: string): SavedProgress | null {
  const raw = store.getItem(storageKey(testId));
  if (raw === null) return null;
  try {
    const parsed = JSON.parse(raw) as SavedProgress;
    if (!parsed.sessionId || !Array.isArray(parsed.playlist)) return null;
    return parsed;
  } catch {
    return null;
  }
}

/**
 * Walks one rater through a session's playlist, in the order the service
 * fixed it. Accepted answers are persisted locally so a reload resumes at
 * the first unanswered trial; if local progress is stale the service's 409
 * on resubmission advances the trial the same way.
 */
export class SessionRunner {
  private answered: Set<string>;

  private constructor(
    private readonly api: ApiClient,
    private readonly store: KeyValueStore,
    private readonly testId: string,
    readonly sessionId: string,
    readonly playlist: string[],
    answered: string[],
  ) {
    this.answered = new Set(answered);
  }

  /** Resume the stored session for this test, or create a fresh one. */
  static async start(
    api: ApiClient,
    testId: string,
    store: KeyValueStore,
  ): Promise<SessionRunner> {
    const saved = loadProgress(store, testId);
    if (saved !== null) {
      return new SessionRunner(api, store, testId, saved.sessionId, saved.playlist, saved.answered);
    }
    const session = await api.createSession(testId);
    const runner = new SessionRunner(api, store, testId, session.session_id, session.playlist, []);
    runner.persist();
    return runner;
  }

  private persist(): void {
    const progress: SavedProgress = {
      sessionId: this.sessionId,
      playlist: this.playlist,
      answered: [...this.answered],
    };
    this.store.setItem(storageKey(this.testId), JSON.stringify(progress));
  }

  /** First unanswered stimulus id, or null when the session is complete. */
  current(): string | null {
    for (const stimulusId of this.playlist) {
      if (!this.answered.has(stimulusId)) return stimulusId;
    }
    return null;
  }

  done(): boolean {
    return this.current() === null;
  }

  progress(): { index: number; total: number } {
    return { index: this.answered.size, total: this.playlist.length };
  }

  answeredCount(): number {
    return this.answered.size;
  }

  /**
   * Submit the answer for the current trial. Both "accepted" and
   * "duplicate" advance; rejections and transport errors propagate and
   * leave the trial (and the rater's selection) in place.
   */
  async submit(answer: Answer): Promise<SubmitOutcome> {
    const stimulusId = this.current();
    if (stimulusId === null) {
      throw new Error("session is already complete");
    }
    const outcome = await this.api.submitResponse(this.sessionId, stimulusId, answer);
    this.answered.add(stimulusId);
    this.persist();
    return outcome;
  }

  /** Forget stored progress (used once the completion screen is shown). */
  clearSaved(): void {
    this.store.removeItem(storageKey(this.testId));
  }
}
