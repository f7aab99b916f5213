/**
 * Typed client for the annotation service JSON API.
 *
 * Paths are relative to the page origin by default; tests pass an explicit
 * base URL to reach a separately spawned server.
 */

import type { AnnotationPayload } from "./schema.js";

export interface TargetLabel {
  category: string;
  char_start: number;
  char_end: number;
}

export interface Task {
  task_id: number;
  record_id: string;
  image_ref: string;
  caption: string;
  target_label: TargetLabel;
}

export interface NextTaskResponse {
  done: boolean;
  task: Task | null;
  completed: number;
  total: number;
}

export interface AgreementReady {
  ready: true;
  kappa: Record<string, number | null>;
  disagreement: Record<string, number | null>;
  n_shared: Record<string, number>;
}

export interface AgreementPending {
  ready: false;
  detail: string;
}

export type AgreementResponse = AgreementReady | AgreementPending;

export interface Disagreement {
  task_id: number;
  question: string;
  answers: Record<string, string | string[] | null>;
}

/** Thrown when the service rejects a submission with rule violations. */
export class SubmissionRejected extends Error {
  violations: string[];

  constructor(violations: string[]) {
    super(violations.join("; "));
    this.name = "SubmissionRejected";
    this.violations = violations;
  }
}

async function readJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    const text = await response.text().catch(() => "");
    throw new Error(text || `HTTP ${response.status}`);
  }
  return response.json() as Promise<T>;
}

export class AnnotationApi {
  constructor(private readonly baseUrl: string = "") {}

  async nextTask(annotator: string): Promise<NextTaskResponse> {
    const query = new URLSearchParams({ annotator });
    const response = await fetch(`${this.baseUrl}/api/tasks/next?${query}`);
    return readJson<NextTaskResponse>(response);
  }

  async submit(payload: AnnotationPayload): Promise<void> {
    const response = await fetch(`${this.baseUrl}/api/annotations`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (response.status === 422) {
      const body = (await response.json().catch(() => ({}))) as { violations?: string[] };
      throw new SubmissionRejected(body.violations ?? [`HTTP ${response.status}`]);
    }
    await readJson<{ accepted: boolean }>(response);
  }

  async agreement(): Promise<AgreementResponse> {
    const response = await fetch(`${this.baseUrl}/api/agreement`);
    return readJson<AgreementResponse>(response);
  }

  async disagreements(): Promise<Disagreement[]> {
    const response = await fetch(`${this.baseUrl}/api/disagreements`);
    const body = await readJson<{ disagreements: Disagreement[] }>(response);
    return body.disagreements;
  }

  exportUrl(): string {
    return `${this.baseUrl}/api/export`;
  }
}

/** The slice of the client the views depend on; tests stub this. */
export type AnnotationApiLike = Pick<
  AnnotationApi,
  "nextTask" | "submit" | "agreement" | "disagreements" | "exportUrl"
>;
