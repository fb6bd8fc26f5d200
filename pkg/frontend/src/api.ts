/** Typed gateway client.  fetch is injectable for testing; a 409 on
 * annotation submit means the label is already on the log, so the client
 * reports it as accepted-as-duplicate rather than an error. */

import type {
  AgreementPayload,
  AnnotationRequest,
  AssignmentPayload,
  ChartPayload,
  SessionPayload,
  TrajectoryPoint,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: {
    method?: string;
    headers?: Record<string, string>;
    body?: string;
  },
) => Promise<{ status: number; json(): Promise<unknown> }>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export interface SubmitResult {
  accepted: boolean;
  duplicate: boolean;
  seq: number | null;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string,
    private readonly fetchImpl: FetchLike = fetch as unknown as FetchLike,
  ) {}

  private headers(): Record<string, string> {
    return {
      Authorization: `Bearer ${this.token}`,
      "Content-Type": "application/json",
    };
  }

  private async request(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<unknown> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = (await response.json()) as Record<string, unknown>;
    if (response.status >= 400) {
      throw new ApiError(response.status, String(payload["detail"] ?? ""));
    }
    return payload;
  }

  session(): Promise<SessionPayload> {
    return this.request("GET", "/session") as Promise<SessionPayload>;
  }

  advanceWave(): Promise<unknown> {
    return this.request("POST", "/waves/advance");
  }

  assignments(annotator: string): Promise<AssignmentPayload[]> {
    return this.request(
      "GET",
      `/assignments?annotator=${encodeURIComponent(annotator)}`,
    ) as Promise<AssignmentPayload[]>;
  }

  chart(patientId: string, highlights = true): Promise<ChartPayload> {
    return this.request(
      "GET",
      `/charts/${encodeURIComponent(patientId)}?highlights=${highlights}`,
    ) as Promise<ChartPayload>;
  }

  trajectory(): Promise<TrajectoryPoint[]> {
    return this.request("GET", "/metrics/trajectory") as Promise<
      TrajectoryPoint[]
    >;
  }

  agreement(): Promise<AgreementPayload> {
    return this.request("GET", "/agreement") as Promise<AgreementPayload>;
  }

  /** Submit one annotation; 409 is success-already (idempotent by
   * (annotator, patient)), every other 4xx/5xx throws. */
  async submitAnnotation(body: AnnotationRequest): Promise<SubmitResult> {
    try {
      const payload = (await this.request(
        "POST",
        "/annotations",
        body,
      )) as Record<string, unknown>;
      return { accepted: true, duplicate: false, seq: Number(payload["seq"]) };
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        return { accepted: true, duplicate: true, seq: null };
      }
      throw error;
    }
  }

  /** Retry transport failures with the payload byte-identical; server
   * rejections other than 409 are not retried. */
  async submitWithRetry(
    body: AnnotationRequest,
    attempts = 3,
  ): Promise<SubmitResult> {
    const frozen = JSON.stringify(body);
    let lastError: unknown = null;
    for (let attempt = 0; attempt < attempts; attempt += 1) {
      try {
        return await this.submitAnnotation(
          JSON.parse(frozen) as AnnotationRequest,
        );
      } catch (error) {
        if (error instanceof ApiError) throw error;
        lastError = error;
      }
    }
    throw lastError;
  }
}
