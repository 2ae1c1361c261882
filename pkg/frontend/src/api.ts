/** Thin typed client over the service's HTTP/JSON interface. */

import type {
  DraftFeed,
  FeedConfig,
  FeedPatch,
  PostsPage,
  SourceHit,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly details?: unknown,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface ClientOptions {
  token?: string;
  /** Injectable for tests; defaults to the global fetch. */
  fetch?: FetchLike;
}

interface RequestOptions {
  body?: unknown;
  query?: Record<string, string | number | boolean | undefined>;
  ifMatch?: number;
}

export class ApiClient {
  private readonly base: string;
  private readonly token: string | undefined;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, options: ClientOptions = {}) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.token = options.token;
    this.fetchFn = options.fetch ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(method: string, path: string, options: RequestOptions = {}): Promise<T> {
    const params = new URLSearchParams();
    for (const [key, value] of Object.entries(options.query ?? {})) {
      if (value !== undefined) params.set(key, String(value));
    }
    const qs = params.size > 0 ? `?${params}` : "";

    const headers: Record<string, string> = {};
    if (options.body !== undefined) headers["Content-Type"] = "application/json";
    if (options.ifMatch !== undefined) headers["If-Match"] = `"${options.ifMatch}"`;
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;

    const response = await this.fetchFn(`${this.base}${path}${qs}`, {
      method,
      headers,
      body: options.body !== undefined ? JSON.stringify(options.body) : undefined,
    });

    if (!response.ok) {
      let code = "unknown";
      let message = `${method} ${path} failed with ${response.status}`;
      let details: unknown;
      try {
        const envelope = (await response.json()) as {
          code?: string;
          message?: string;
          details?: unknown;
        };
        if (envelope.code) code = envelope.code;
        if (envelope.message) message = envelope.message;
        details = envelope.details;
      } catch {
        // non-JSON error body; keep the fallback message
      }
      throw new ApiError(response.status, code, message, details);
    }
    if (response.status === 204) return undefined as T;
    return (await response.json()) as T;
  }

  listFeeds(owner?: string): Promise<FeedConfig[]> {
    return this.request("GET", "/v1/feeds", { query: { owner } });
  }

  createFeed(draft: DraftFeed): Promise<FeedConfig> {
    return this.request("POST", "/v1/feeds", { body: draft });
  }

  getFeed(id: string): Promise<FeedConfig> {
    return this.request("GET", `/v1/feeds/${encodeURIComponent(id)}`);
  }

  /** PUT with optimistic concurrency: sends If-Match so a stale write 409s. */
  updateFeed(id: string, patch: FeedPatch, expectedVersion?: number): Promise<FeedConfig> {
    return this.request("PUT", `/v1/feeds/${encodeURIComponent(id)}`, {
      body: patch,
      ifMatch: expectedVersion,
    });
  }

  deleteFeed(id: string): Promise<void> {
    return this.request("DELETE", `/v1/feeds/${encodeURIComponent(id)}`);
  }

  getPosts(
    id: string,
    options: { cursor?: string; limit?: number; breakdown?: boolean } = {},
  ): Promise<PostsPage> {
    return this.request("GET", `/v1/feeds/${encodeURIComponent(id)}/posts`, {
      query: {
        cursor: options.cursor,
        limit: options.limit,
        breakdown: options.breakdown ? "true" : undefined,
      },
    });
  }

  /** Drop the server's composed session so the next read starts from fresh upstream heads. */
  refreshFeed(id: string): Promise<void> {
    return this.request("POST", `/v1/feeds/${encodeURIComponent(id)}/refresh`);
  }

  searchSources(options: { q?: string; popular?: boolean } = {}): Promise<SourceHit[]> {
    return this.request("GET", "/v1/sources/search", {
      query: { q: options.q, popular: options.popular ? "true" : undefined },
    });
  }
}
