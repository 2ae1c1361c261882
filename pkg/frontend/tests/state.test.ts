import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { FeedApp, PAGE_LIMIT } from "../src/state.js";
import type {
  DraftFeed,
  FeedConfig,
  FeedPatch,
  Post,
  PostsPage,
  SourceHit,
} from "../src/types.js";

function makeConfig(overrides: Partial<FeedConfig> = {}): FeedConfig {
  return {
    id: "feed-1",
    ownerId: "owner-1",
    name: "morning reads",
    sources: ["tech-wire"],
    filters: [],
    sort: { mode: "interleaved", rules: [] },
    version: 1,
    updatedAt: "2024-06-01T00:00:00Z",
    ...overrides,
  };
}

function makePost(uri: string, overrides: Partial<Post> = {}): Post {
  return {
    uri,
    authorId: "did:plc:ada",
    authorHandle: "ada.example",
    text: "a post",
    createdAt: "2024-06-01T00:00:00Z",
    sourceId: "tech-wire",
    sourceIndex: 0,
    highlights: [],
    ...overrides,
  };
}

interface PostsCall {
  cursor: string | undefined;
  limit: number | undefined;
  breakdown: boolean | undefined;
}

/**
 * In-memory stand-in for the HTTP client. It keeps one server-side config,
 * enforces the same optimistic-concurrency rule as the service, and records
 * every call so tests can assert on exact request counts.
 */
class MockClient extends ApiClient {
  server: FeedConfig;
  serverFeeds: FeedConfig[];
  hits: SourceHit[] = [];

  puts: FeedPatch[] = [];
  postsCalls: PostsCall[] = [];
  getFeedCalls = 0;
  refreshCalls = 0;

  /** Pages handed out by getPosts, in order; the last one repeats. */
  pages: PostsPage[] = [];
  private pageIndex = 0;
  failNextPosts: ApiError | null = null;

  constructor(config: FeedConfig = makeConfig()) {
    super("http://mock.invalid");
    this.server = config;
    this.serverFeeds = [config];
  }

  override async listFeeds(): Promise<FeedConfig[]> {
    return this.serverFeeds.map((f) => ({ ...f }));
  }

  override async getFeed(id: string): Promise<FeedConfig> {
    this.getFeedCalls += 1;
    if (id !== this.server.id) throw new ApiError(404, "not_found", "no such feed");
    return { ...this.server };
  }

  override async updateFeed(
    id: string,
    patch: FeedPatch,
    expectedVersion?: number,
  ): Promise<FeedConfig> {
    this.puts.push(patch);
    if (id !== this.server.id) throw new ApiError(404, "not_found", "no such feed");
    if (expectedVersion !== undefined && expectedVersion !== this.server.version) {
      throw new ApiError(409, "version_conflict", "stale version");
    }
    this.server = { ...this.server, ...patch, version: this.server.version + 1 };
    return { ...this.server };
  }

  override async createFeed(draft: DraftFeed): Promise<FeedConfig> {
    const created = makeConfig({
      id: `feed-${this.serverFeeds.length + 1}`,
      ownerId: draft.ownerId,
      name: draft.name,
      sources: draft.sources ?? [],
    });
    this.serverFeeds.push(created);
    return { ...created };
  }

  override async deleteFeed(): Promise<void> {}

  override async getPosts(
    id: string,
    options: { cursor?: string; limit?: number; breakdown?: boolean } = {},
  ): Promise<PostsPage> {
    this.postsCalls.push({
      cursor: options.cursor,
      limit: options.limit,
      breakdown: options.breakdown,
    });
    if (this.failNextPosts) {
      const error = this.failNextPosts;
      this.failNextPosts = null;
      throw error;
    }
    const page = this.pages[Math.min(this.pageIndex, this.pages.length - 1)];
    if (this.pages.length > 0) this.pageIndex += 1;
    return (
      page ?? { feedId: id, configVersion: this.server.version, posts: [], warnings: [] }
    );
  }

  override async refreshFeed(): Promise<void> {
    this.refreshCalls += 1;
  }

  override async searchSources(): Promise<SourceHit[]> {
    return this.hits;
  }

  get headCalls(): PostsCall[] {
    return this.postsCalls.filter((c) => c.cursor === undefined);
  }

  get cursorCalls(): PostsCall[] {
    return this.postsCalls.filter((c) => c.cursor !== undefined);
  }
}

function makeApp(client: MockClient): FeedApp {
  return new FeedApp(client, "owner-1");
}

describe("screens and the control panel", () => {
  let client: MockClient;
  let app: FeedApp;

  beforeEach(() => {
    client = new MockClient();
    app = makeApp(client);
  });

  it("pins the panel open in the sandbox", () => {
    expect(app.state.panelOpen).toBe(false);
    app.enterSandbox();
    expect(app.state.screen).toBe("sandbox");
    expect(app.state.panelOpen).toBe(true);
    app.closePanel(); // must be a no-op here
    expect(app.state.panelOpen).toBe(true);
  });

  it("lets the panel close again after leaving the sandbox", () => {
    app.enterSandbox();
    app.exitSandbox();
    expect(app.state.screen).toBe("home");
    app.closePanel();
    expect(app.state.panelOpen).toBe(false);
  });

  it("ignores span clicks while the panel is closed", () => {
    app.select({ feature: { kind: "keyword", value: "rustlang" }, span: [0, 8], postUri: "u" });
    expect(app.state.pendingSelection).toBeNull();
    app.openPanel();
    app.select({ feature: { kind: "keyword", value: "rustlang" }, span: [0, 8], postUri: "u" });
    expect(app.state.pendingSelection?.feature.value).toBe("rustlang");
  });

  it("drops any pending selection when the panel closes", () => {
    app.openPanel();
    app.select({ feature: { kind: "author", value: "did:plc:ada" }, span: null, postUri: "u" });
    app.closePanel();
    expect(app.state.pendingSelection).toBeNull();
  });
});

describe("config changes", () => {
  let client: MockClient;
  let app: FeedApp;

  beforeEach(async () => {
    client = new MockClient();
    app = makeApp(client);
    await app.openFeed("feed-1");
    client.postsCalls.length = 0; // ignore the open itself
  });

  it("sends exactly one PUT and no reads when changing config on home", async () => {
    await app.addFilter({ mode: "include", feature: { kind: "keyword", value: "hci" } });
    expect(client.puts).toHaveLength(1);
    expect(client.postsCalls).toHaveLength(0);
    expect(app.config?.version).toBe(2);
    expect(app.config?.filters).toEqual([
      { mode: "include", feature: { kind: "keyword", value: "hci" } },
    ]);
  });

  it("sends one PUT plus one automatic head refetch in the sandbox", async () => {
    app.enterSandbox();
    client.postsCalls.length = 0;
    await app.addFilter({ mode: "exclude", feature: { kind: "keyword", value: "ads" } });
    expect(client.puts).toHaveLength(1);
    expect(client.postsCalls).toHaveLength(1);
    expect(client.postsCalls[0]?.cursor).toBeUndefined(); // a head fetch, not a continuation
  });

  it("recovers from a version conflict by reloading and rethrowing", async () => {
    // Another tab moved the config from under us.
    client.server = { ...client.server, name: "renamed elsewhere", version: 7 };
    await expect(
      app.addFilter({ mode: "include", feature: { kind: "keyword", value: "hci" } }),
    ).rejects.toMatchObject({ status: 409 });
    expect(app.config?.version).toBe(7);
    expect(app.config?.name).toBe("renamed elsewhere");
    expect(app.lastError).toMatch(/changed elsewhere/);
    // The retry now carries the fresh version and succeeds.
    await app.addFilter({ mode: "include", feature: { kind: "keyword", value: "hci" } });
    expect(app.config?.version).toBe(8);
    expect(app.lastError).toBeNull();
  });

  it("replaces the timeline from the head when a cursor is invalidated", async () => {
    client.pages = [
      {
        feedId: "feed-1",
        configVersion: 1,
        posts: [makePost("at://old/1"), makePost("at://old/2")],
        warnings: [],
        cursor: "c1",
      },
      {
        feedId: "feed-1",
        configVersion: 2,
        posts: [makePost("at://new/1")],
        warnings: [],
      },
    ];
    await app.openFeed("feed-1");
    expect(app.posts.map((p) => p.uri)).toEqual(["at://old/1", "at://old/2"]);

    client.failNextPosts = new ApiError(410, "cursor_invalidated", "config changed");
    await app.loadMore();
    expect(app.posts.map((p) => p.uri)).toEqual(["at://new/1"]); // replaced, not appended
    expect(app.cursor).toBeUndefined();
    expect(client.getFeedCalls).toBeGreaterThan(0);
  });

  it("dedupes sources without issuing a PUT", async () => {
    await app.addSource("tech-wire"); // already saved
    expect(client.puts).toHaveLength(0);
    await app.addSource("art-daily");
    expect(client.puts).toHaveLength(1);
    expect(app.config?.sources).toEqual(["tech-wire", "art-daily"]);
  });

  it("toggles a filter's mode in place", async () => {
    await app.addFilter({ mode: "include", feature: { kind: "keyword", value: "hci" } });
    await app.toggleFilterMode(0);
    expect(app.config?.filters[0]?.mode).toBe("exclude");
    await app.toggleFilterMode(0);
    expect(app.config?.filters[0]?.mode).toBe("include");
  });

  it("removes a filter by row index", async () => {
    await app.addFilter({ mode: "include", feature: { kind: "keyword", value: "a" } });
    await app.addFilter({ mode: "exclude", feature: { kind: "keyword", value: "b" } });
    await app.removeFilter(0);
    expect(app.config?.filters).toEqual([
      { mode: "exclude", feature: { kind: "keyword", value: "b" } },
    ]);
  });
});

describe("weight rules", () => {
  let client: MockClient;
  let app: FeedApp;

  beforeEach(async () => {
    client = new MockClient();
    app = makeApp(client);
    await app.openFeed("feed-1");
  });

  it("switches an interleaved feed to priority when a weight lands", async () => {
    expect(app.config?.sort.mode).toBe("interleaved");
    await app.bumpRuleWeight({ kind: "keyword", value: "rustlang" }, 5);
    expect(app.config?.sort).toEqual({
      mode: "priority",
      rules: [{ feature: { kind: "keyword", value: "rustlang" }, weight: 5 }],
    });
  });

  it("updates an existing rule in place instead of duplicating it", async () => {
    await app.setRuleWeight({ kind: "keyword", value: "rustlang" }, 3);
    await app.setRuleWeight({ kind: "author", value: "did:plc:ada" }, 2);
    await app.setRuleWeight({ kind: "keyword", value: "rustlang" }, -1);
    expect(app.config?.sort.rules).toEqual([
      { feature: { kind: "keyword", value: "rustlang" }, weight: -1 },
      { feature: { kind: "author", value: "did:plc:ada" }, weight: 2 },
    ]);
  });

  it("accumulates bumps on top of the current weight", async () => {
    await app.bumpRuleWeight({ kind: "keyword", value: "hci" }, 5);
    await app.bumpRuleWeight({ kind: "keyword", value: "hci" }, -1);
    expect(app.config?.sort.rules).toEqual([
      { feature: { kind: "keyword", value: "hci" }, weight: 4 },
    ]);
  });

  it("removes a rule but keeps the sort mode", async () => {
    await app.setRuleWeight({ kind: "keyword", value: "hci" }, 4);
    await app.removeRule({ kind: "keyword", value: "hci" });
    expect(app.config?.sort).toEqual({ mode: "priority", rules: [] });
  });

  it("clears rules when leaving priority mode", async () => {
    await app.setRuleWeight({ kind: "keyword", value: "hci" }, 4);
    await app.setSortMode("chronological");
    expect(app.config?.sort).toEqual({ mode: "chronological", rules: [] });
  });
});

describe("breakdown requests", () => {
  it("asks for breakdowns only when the panel shows a priority feed", async () => {
    const client = new MockClient(
      makeConfig({ sort: { mode: "priority", rules: [] } }),
    );
    const app = makeApp(client);

    await app.openFeed("feed-1"); // panel closed
    expect(app.wantBreakdown).toBe(false);
    expect(client.postsCalls[0]?.breakdown).toBe(false);
    expect(client.postsCalls[0]?.limit).toBe(PAGE_LIMIT);

    app.openPanel();
    expect(app.wantBreakdown).toBe(true);
    await app.openFeed("feed-1");
    expect(client.postsCalls[1]?.breakdown).toBe(true);
  });

  it("does not ask for breakdowns on non-priority feeds even with the panel open", async () => {
    const client = new MockClient(
      makeConfig({ sort: { mode: "chronological", rules: [] } }),
    );
    const app = makeApp(client);
    app.openPanel();
    await app.openFeed("feed-1");
    expect(app.wantBreakdown).toBe(false);
    expect(client.postsCalls[0]?.breakdown).toBe(false);
  });
});

describe("navigation and refresh", () => {
  it("loads the feed list and opens the first feed on start", async () => {
    const client = new MockClient();
    const app = makeApp(client);
    await app.start();
    expect(app.feeds.map((f) => f.id)).toEqual(["feed-1"]);
    expect(app.state.activeFeedId).toBe("feed-1");
  });

  it("appends a created feed as a new tab", async () => {
    const client = new MockClient();
    const app = makeApp(client);
    await app.start();
    const created = await app.createFeed("evening", ["art-daily"]);
    expect(app.feeds.map((f) => f.id)).toEqual(["feed-1", created.id]);
    expect(created.sources).toEqual(["art-daily"]);
  });

  it("manual refresh tells the server to recompose, then rereads the head", async () => {
    const client = new MockClient();
    const app = makeApp(client);
    await app.openFeed("feed-1");
    client.postsCalls.length = 0;
    await app.manualRefresh();
    expect(client.refreshCalls).toBe(1);
    expect(client.postsCalls).toHaveLength(1);
    expect(client.postsCalls[0]?.cursor).toBeUndefined();
  });

  it("concatenates continuation pages on loadMore", async () => {
    const client = new MockClient();
    client.pages = [
      {
        feedId: "feed-1",
        configVersion: 1,
        posts: [makePost("at://a/1")],
        warnings: [],
        cursor: "c1",
      },
      {
        feedId: "feed-1",
        configVersion: 1,
        posts: [makePost("at://a/2")],
        warnings: [],
      },
    ];
    const app = makeApp(client);
    await app.openFeed("feed-1");
    await app.loadMore();
    expect(app.posts.map((p) => p.uri)).toEqual(["at://a/1", "at://a/2"]);
    expect(app.cursor).toBeUndefined();
    expect(client.cursorCalls).toEqual([{ cursor: "c1", limit: PAGE_LIMIT, breakdown: false }]);
    await app.loadMore(); // exhausted: no cursor, so no request
    expect(client.postsCalls).toHaveLength(2);
  });
});

describe("inline editor selections", () => {
  let client: MockClient;
  let app: FeedApp;

  beforeEach(async () => {
    client = new MockClient();
    app = makeApp(client);
    await app.openFeed("feed-1");
    app.openPanel();
  });

  it("include turns the selection into a filter and clears it", async () => {
    app.select({ feature: { kind: "keyword", value: "hci" }, span: [0, 3], postUri: "u" });
    await app.includeSelection();
    expect(app.config?.filters).toEqual([
      { mode: "include", feature: { kind: "keyword", value: "hci" } },
    ]);
    expect(app.state.pendingSelection).toBeNull();
  });

  it("exclude mirrors include", async () => {
    app.select({ feature: { kind: "author", value: "did:plc:bo" }, span: null, postUri: "u" });
    await app.excludeSelection();
    expect(app.config?.filters).toEqual([
      { mode: "exclude", feature: { kind: "author", value: "did:plc:bo" } },
    ]);
  });

  it("weight buttons act on the selected feature", async () => {
    app.select({ feature: { kind: "keyword", value: "hci" }, span: [0, 3], postUri: "u" });
    await app.bumpSelectionWeight(5);
    expect(app.config?.sort.rules).toEqual([
      { feature: { kind: "keyword", value: "hci" }, weight: 5 },
    ]);
    await app.setSelectionWeight(2);
    expect(app.config?.sort.rules).toEqual([
      { feature: { kind: "keyword", value: "hci" }, weight: 2 },
    ]);
  });

  it("editor actions without a selection never touch the server", async () => {
    await app.includeSelection();
    await app.excludeSelection();
    await app.bumpSelectionWeight(1);
    await app.setSelectionWeight(9);
    expect(client.puts).toHaveLength(0);
  });
});
