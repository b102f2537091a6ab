/**
 * Thin HTTP client over the twin service. All responses are validated with
 * zod before anything else sees them, and every request is appended to a
 * log so tests (and audits) can prove the UI never writes outside the
 * permitted POST endpoints.
 */
import { z } from "zod";
import * as schemas from "./schemas.js";

export interface LoggedRequest {
  method: string;
  path: string;
  /* true only for requests that change twin state; query/impact/context are
     POSTs but read-only */
  mutating: boolean;
}

const MUTATING_PATHS = [
  /^\/proposals$/,
  /^\/proposals\/[^/]+\/review$/,
  /^\/feedback$/,
];

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

type Fetch = typeof fetch;

export class TwinClient {
  readonly requestLog: LoggedRequest[] = [];

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: Fetch = fetch,
  ) {}

  private async request<T>(
    method: "GET" | "POST",
    path: string,
    schema: z.ZodType<T>,
    body?: unknown,
  ): Promise<T> {
    this.requestLog.push({
      method,
      path,
      mutating: method === "POST" &&
        MUTATING_PATHS.some((pattern) => pattern.test(path)),
    });
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json();
    if (!response.ok) {
      const parsed = schemas.errorBody.safeParse(payload);
      if (parsed.success) {
        throw new ApiError(
          response.status,
          parsed.data.error.code,
          parsed.data.error.message,
        );
      }
      throw new ApiError(response.status, "unknown", JSON.stringify(payload));
    }
    return schema.parse(payload);
  }

  revisions() {
    return this.request("GET", "/revisions", schemas.revisions);
  }

  query(text: string, revision?: string) {
    return this.request("POST", "/query", schemas.queryResult, {
      text,
      ...(revision === undefined ? {} : { revision }),
    });
  }

  card(subject: string, revision?: string) {
    const suffix = revision === undefined ? "" : `?revision=${revision}`;
    return this.request(
      "GET",
      `/cards/${encodeURIComponent(subject)}${suffix}`,
      schemas.cardResponse,
    );
  }

  proposals(status?: "pending" | "accepted" | "rejected") {
    const suffix = status === undefined ? "" : `?status=${status}`;
    return this.request("GET", `/proposals${suffix}`, schemas.proposalList);
  }

  submitProposal(
    subject: string,
    author: string,
    note: string,
    ops: Record<string, unknown>[],
  ) {
    return this.request("POST", "/proposals", schemas.submitResponse, {
      subject,
      author,
      note,
      ops,
    });
  }

  review(proposalId: string, verdict: "accept" | "reject", note = "") {
    return this.request(
      "POST",
      `/proposals/${encodeURIComponent(proposalId)}/review`,
      schemas.reviewResponse,
      { verdict, note },
    );
  }

  feedback(kind: string, subject: string, note = "") {
    return this.request("POST", "/feedback", schemas.feedbackResponse, {
      kind,
      subject,
      note,
    });
  }

  conflicts(revision?: string) {
    const suffix = revision === undefined ? "" : `?revision=${revision}`;
    return this.request("GET", `/conflicts${suffix}`, schemas.conflictList);
  }
}
