/** Typed client for the listening-test service API. */

export type StimulusKind = "mos" | "smos" | "minimal_pair";

export interface StimulusInfo {
  stimulus_id: string;
  kind: StimulusKind;
  audio_path: string;
  reference_audio_path?: string;
  pair?: { word: string; confusable: string };
  correct_word?: string;
}

export interface SessionInfo {
  session_id: string;
  playlist: string[];
}

export interface SummaryPayload {
  mean: number;
  ci: [number, number];
  n: number;
}

export interface ResultsPayload {
  mos: SummaryPayload | null;
  smos: SummaryPayload | null;
  intelligibility: number | null;
  intelligibility_n: number;
}

/** A rater's answer: a 1-5 value (mos/smos) or a forced choice (minimal pair). */
export type Answer = { value: number } | { choice: "word" | "confusable" | "neither" };

export type SubmitOutcome = "accepted" | "duplicate";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** The service rejected the payload (HTTP 422). */
export class RejectedResponseError extends Error {}

/** Transport failure or unexpected status; the caller may retry. */
export class ServiceError extends Error {}

async function detailOf(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: string };
    return body.detail ?? response.statusText;
  } catch {
    return response.statusText;
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (error) {
      throw new ServiceError(`network failure: ${String(error)}`);
    }
    return response;
  }

  private async requestJson<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.request(path, init);
    if (!response.ok) {
      throw new ServiceError(`${path}: ${response.status} ${await detailOf(response)}`);
    }
    return (await response.json()) as T;
  }

  createSession(testId: string): Promise<SessionInfo> {
    return this.requestJson<SessionInfo>("/api/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ test_id: testId }),
    });
  }

  getStimulus(stimulusId: string): Promise<StimulusInfo> {
    return this.requestJson<StimulusInfo>(`/api/stimuli/${encodeURIComponent(stimulusId)}`);
  }

  audioUrl(stimulusId: string): string {
    return `${this.baseUrl}/api/stimuli/${encodeURIComponent(stimulusId)}/audio`;
  }

  referenceUrl(stimulusId: string): string {
    return `${this.baseUrl}/api/stimuli/${encodeURIComponent(stimulusId)}/reference`;
  }

  /**
   * Submit one answer. 201 resolves "accepted", 409 resolves "duplicate"
   * (already answered, e.g. after a reload), 422 throws
   * RejectedResponseError and anything else throws ServiceError.
   */
  async submitResponse(
    sessionId: string,
    stimulusId: string,
    answer: Answer,
  ): Promise<SubmitOutcome> {
    const response = await this.request("/api/responses", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ session_id: sessionId, stimulus_id: stimulusId, ...answer }),
    });
    if (response.status === 201) return "accepted";
    if (response.status === 409) return "duplicate";
    if (response.status === 422) {
      throw new RejectedResponseError(await detailOf(response));
    }
    throw new ServiceError(`submit failed: ${response.status} ${await detailOf(response)}`);
  }

  getResults(testId: string): Promise<ResultsPayload> {
    return this.requestJson<ResultsPayload>(
      `/api/tests/${encodeURIComponent(testId)}/results`,
    );
  }
}
