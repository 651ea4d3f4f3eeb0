/** Typed client for the gateway HTTP API. The UI talks to nothing else. */

export interface Highlight {
  seed: string;
  surface: string;
  start: number;
  end: number;
}

export interface TaskPayload {
  post_id: string;
  text: string;
  source: string;
  region: string | null;
  highlights: Highlight[];
  queue: { tasks: number; fully_labeled: number };
}

export interface LabelSubmission {
  post_id: string;
  annotator_id: string;
  label: string;
}

export interface ProgressPayload {
  tasks: number;
  fully_labeled: number;
  labels: number;
  annotators: number;
}

/** Non-2xx response, decoded from the service's error document. */
export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** True when retrying later could help: connection trouble or a 5xx. */
export function isRetryable(err: unknown): boolean {
  if (err instanceof ApiError) return err.status >= 500;
  return true; // fetch rejects with TypeError on network failure
}

async function decodeError(res: Response): Promise<ApiError> {
  let code = "http_error";
  let message = `${res.status} ${res.statusText}`;
  try {
    const doc = await res.json();
    if (doc && doc.error) {
      code = doc.error.code ?? code;
      message = doc.error.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(res.status, code, message);
}

export class Client {
  constructor(private base = "") {}

  private url(path: string): string {
    return this.base + path;
  }

  private async getJson<T>(path: string): Promise<T> {
    const res = await fetch(this.url(path));
    if (!res.ok) throw await decodeError(res);
    return (await res.json()) as T;
  }

  async health(): Promise<{ status: string; version: string }> {
    return this.getJson("/api/health");
  }

  /** Next task for this annotator, or null when the queue is exhausted. */
  async nextTask(annotatorId: string): Promise<TaskPayload | null> {
    const doc = await this.getJson<TaskPayload & { done?: boolean }>(
      `/api/annotation/next?annotator=${encodeURIComponent(annotatorId)}`,
    );
    return doc.done ? null : doc;
  }

  async submitLabel(sub: LabelSubmission): Promise<void> {
    const res = await fetch(this.url("/api/annotation/label"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(sub),
    });
    if (!res.ok) throw await decodeError(res);
    await res.json(); // drain the acknowledgment
  }

  /**
   * Agreement payload as the raw response text. Callers that need the
   * numbers keep the bytes; see rawjson.ts for why.
   */
  async agreementText(): Promise<string> {
    const res = await fetch(this.url("/api/annotation/agreement"));
    if (!res.ok) throw await decodeError(res);
    return res.text();
  }

  async guideline(): Promise<string> {
    const res = await fetch(this.url("/api/annotation/guideline"));
    if (!res.ok) throw await decodeError(res);
    return res.text();
  }

  async progress(): Promise<ProgressPayload> {
    return this.getJson("/api/annotation/progress");
  }

  async exportRecords(): Promise<LabelSubmission[]> {
    const doc = await this.getJson<{ records: LabelSubmission[] }>(
      "/api/annotation/export",
    );
    return doc.records;
  }
}

/** The slice of the client the labeling session depends on (mockable). */
export interface TaskService {
  nextTask(annotatorId: string): Promise<TaskPayload | null>;
  submitLabel(sub: LabelSubmission): Promise<void>;
}
