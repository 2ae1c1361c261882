import { describe, expect, it } from "vitest";

import type { UIState } from "../src/state.js";
import type { Breakdown, FeedConfig, Post } from "../src/types.js";
import {
  controlPanelViewModel,
  esc,
  feedScreenViewModel,
  inlineEditorViewModel,
  postViewModel,
  renderBreakdown,
  renderControlPanel,
  renderFeedScreen,
  renderInlineEditor,
  renderPost,
  sortRows,
} from "../src/views.js";

const BREAKDOWN: Breakdown = {
  agePenalty: -0.6931471805599453,
  matched: [
    { feature: { kind: "keyword", value: "rustlang" }, weight: 5, contribution: 5 },
    { feature: { kind: "author", value: "did:plc:ada" }, weight: 2, contribution: 2 },
  ],
  total: 6.306852819440055,
};

function makePost(overrides: Partial<Post> = {}): Post {
  return {
    uri: "at://did:plc:ada/app.bsky.feed.post/1",
    authorId: "did:plc:ada",
    authorHandle: "ada.example",
    text: "shipping rustlang service",
    createdAt: "2024-06-01T12:00:00Z",
    sourceId: "tech-wire",
    sourceIndex: 0,
    highlights: [
      { feature: { kind: "author", value: "did:plc:ada" }, span: null },
      { feature: { kind: "keyword", value: "rustlang" }, span: [9, 17] },
    ],
    breakdown: BREAKDOWN,
    ...overrides,
  };
}

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

function uiState(overrides: Partial<UIState> = {}): UIState {
  return {
    screen: "home",
    activeFeedId: "feed-1",
    panelOpen: false,
    pendingSelection: null,
    ...overrides,
  };
}

describe("postViewModel", () => {
  it("renders plain text with no teaching affordances while the panel is closed", () => {
    const vm = postViewModel(makePost(), { panelOpen: false, sortMode: "priority" });
    expect(vm.segments).toEqual([{ text: "shipping rustlang service" }]);
    expect(vm.breakdown).toBeNull();
    expect(vm.authorFeature).toBeNull();
  });

  it("passes the API's breakdown object through untouched", () => {
    const post = makePost();
    const vm = postViewModel(post, { panelOpen: true, sortMode: "priority" });
    expect(vm.breakdown).toBe(post.breakdown); // same object, never recomputed
    expect(vm.authorFeature).toEqual({ kind: "author", value: "did:plc:ada" });
    expect(vm.segments.some((s) => s.highlight?.feature.value === "rustlang")).toBe(true);
  });

  it("hides breakdowns on non-priority feeds even if the payload carried one", () => {
    const vm = postViewModel(makePost(), { panelOpen: true, sortMode: "chronological" });
    expect(vm.breakdown).toBeNull();
  });

  it("falls back to the author id when there is no handle", () => {
    const vm = postViewModel(makePost({ authorHandle: "" }), {
      panelOpen: false,
      sortMode: "interleaved",
    });
    expect(vm.author).toBe("did:plc:ada");
  });
});

describe("feedScreenViewModel", () => {
  const feeds = [makeConfig(), makeConfig({ id: "feed-2", name: "art" })];

  it("marks the active tab", () => {
    const vm = feedScreenViewModel({
      state: uiState(),
      feeds,
      config: feeds[0]!,
      posts: [],
      warnings: [],
      cursor: undefined,
    });
    expect(vm.tabs).toEqual([
      { id: "feed-1", name: "morning reads", active: true },
      { id: "feed-2", name: "art", active: false },
    ]);
  });

  it("shows the refresh control only with the panel open on home", () => {
    const closed = feedScreenViewModel({
      state: uiState(),
      feeds,
      config: feeds[0]!,
      posts: [],
      warnings: [],
      cursor: undefined,
    });
    expect(closed.showRefresh).toBe(false);

    const open = feedScreenViewModel({
      state: uiState({ panelOpen: true }),
      feeds,
      config: feeds[0]!,
      posts: [],
      warnings: [],
      cursor: undefined,
    });
    expect(open.showRefresh).toBe(true);

    const sandbox = feedScreenViewModel({
      state: uiState({ screen: "sandbox", panelOpen: true }),
      feeds,
      config: feeds[0]!,
      posts: [],
      warnings: [],
      cursor: undefined,
    });
    expect(sandbox.showRefresh).toBe(false);
  });

  it("derives hasMore from the presence of a cursor", () => {
    const base = {
      state: uiState(),
      feeds,
      config: feeds[0]!,
      posts: [makePost()],
      warnings: [],
    };
    expect(feedScreenViewModel({ ...base, cursor: "abc" }).hasMore).toBe(true);
    expect(feedScreenViewModel({ ...base, cursor: undefined }).hasMore).toBe(false);
  });

  it("prompts for sources only when a sourceless feed is empty", () => {
    const sourceless = makeConfig({ sources: [] });
    const vm = feedScreenViewModel({
      state: uiState(),
      feeds: [sourceless],
      config: sourceless,
      posts: [],
      warnings: [{ sourceId: "*", message: "feed has no sources" }],
      cursor: undefined,
    });
    expect(vm.emptyPrompt).toMatch(/no sources/);

    const populated = feedScreenViewModel({
      state: uiState(),
      feeds,
      config: feeds[0]!,
      posts: [],
      warnings: [],
      cursor: undefined,
    });
    expect(populated.emptyPrompt).toBeNull();
  });
});

describe("controlPanelViewModel", () => {
  const config = makeConfig({
    filters: [
      { mode: "include", feature: { kind: "keyword", value: "hci" } },
      { mode: "exclude", feature: { kind: "author", value: "did:plc:bo" } },
    ],
    sort: {
      mode: "priority",
      rules: [
        { feature: { kind: "keyword", value: "rustlang" }, weight: 2 },
        { feature: { kind: "author", value: "did:plc:ada" }, weight: 7 },
      ],
    },
  });

  it("exposes filters as table rows with their original indices", () => {
    const vm = controlPanelViewModel(config, []);
    expect(vm.filterRows).toEqual([
      { index: 0, mode: "include", kind: "keyword", value: "hci" },
      { index: 1, mode: "exclude", kind: "author", value: "did:plc:bo" },
    ]);
  });

  it("keeps original indices when a sorted column reorders rows", () => {
    const vm = controlPanelViewModel(config, [], {
      filterSort: { key: "mode", descending: false },
    });
    expect(vm.filterRows.map((r) => r.index)).toEqual([1, 0]); // exclude < include
  });

  it("sorts the weight table by weight, descending", () => {
    const vm = controlPanelViewModel(config, [], {
      ruleSort: { key: "weight", descending: true },
    });
    expect(vm.ruleRows.map((r) => r.weight)).toEqual([7, 2]);
  });

  it("hides the weight table on non-priority feeds", () => {
    const chrono = makeConfig({ sort: { mode: "chronological", rules: [] } });
    expect(controlPanelViewModel(chrono, []).rulesVisible).toBe(false);
    expect(controlPanelViewModel(config, []).rulesVisible).toBe(true);
  });
});

describe("sortRows", () => {
  const rows = [
    { name: "b", n: 2 },
    { name: "a", n: 2 },
    { name: "c", n: 1 },
  ];

  it("orders numbers numerically", () => {
    expect(sortRows(rows, "n", false).map((r) => r.n)).toEqual([1, 2, 2]);
    expect(sortRows(rows, "n", true).map((r) => r.n)).toEqual([2, 2, 1]);
  });

  it("orders strings lexicographically", () => {
    expect(sortRows(rows, "name", false).map((r) => r.name)).toEqual(["a", "b", "c"]);
  });

  it("is stable for equal keys, in both directions", () => {
    expect(sortRows(rows, "n", false).map((r) => r.name)).toEqual(["c", "b", "a"]);
    expect(sortRows(rows, "n", true).map((r) => r.name)).toEqual(["b", "a", "c"]);
  });

  it("does not mutate its input", () => {
    sortRows(rows, "n", false);
    expect(rows.map((r) => r.name)).toEqual(["b", "a", "c"]);
  });
});

describe("HTML rendering", () => {
  it("escapes markup in user-controlled text", () => {
    expect(esc(`<script>"&'`)).toBe("&lt;script&gt;&quot;&amp;'");
    const vm = postViewModel(
      makePost({ text: "<b>bold</b>", highlights: [] }),
      { panelOpen: false, sortMode: "interleaved" },
    );
    expect(renderPost(vm)).toContain("&lt;b&gt;bold&lt;/b&gt;");
  });

  it("renders highlighted spans as clickable marks with their span coordinates", () => {
    const vm = postViewModel(makePost(), { panelOpen: true, sortMode: "priority" });
    const html = renderPost(vm);
    expect(html).toContain(`<span class="chip">tech-wire</span>`);
    expect(html).toContain(`data-action="select"`);
    expect(html).toContain(`data-span="9,17"`);
    expect(html).toContain(`data-kind="keyword"`);
    expect(html).toContain(`>rustlang</mark>`);
    expect(html).toContain(`class="author"`); // author is clickable too
  });

  it("renders the breakdown with the exact serialized numbers", () => {
    const html = renderBreakdown(BREAKDOWN);
    expect(html).toContain("age -0.6931471805599453");
    expect(html).toContain("total 6.306852819440055");
    expect(html).toContain("+5");
    expect(html).toContain("+2");
  });

  it("omits breakdown markup when the view model has none", () => {
    const vm = postViewModel(makePost(), { panelOpen: false, sortMode: "priority" });
    expect(renderPost(vm)).not.toContain("breakdown");
  });

  it("shows refresh and more buttons only when the view model says so", () => {
    const feeds = [makeConfig()];
    const withMore = renderFeedScreen(
      feedScreenViewModel({
        state: uiState({ panelOpen: true }),
        feeds,
        config: feeds[0]!,
        posts: [],
        warnings: [],
        cursor: "c1",
      }),
    );
    expect(withMore).toContain(`data-action="refresh"`);
    expect(withMore).toContain(`data-action="load-more"`);

    const bare = renderFeedScreen(
      feedScreenViewModel({
        state: uiState(),
        feeds,
        config: feeds[0]!,
        posts: [],
        warnings: [],
        cursor: undefined,
      }),
    );
    expect(bare).not.toContain(`data-action="refresh"`);
    expect(bare).not.toContain(`data-action="load-more"`);
  });

  it("renders warnings with their source ids", () => {
    const feeds = [makeConfig()];
    const html = renderFeedScreen(
      feedScreenViewModel({
        state: uiState(),
        feeds,
        config: feeds[0]!,
        posts: [],
        warnings: [{ sourceId: "tech-wire", message: "upstream failed" }],
        cursor: undefined,
      }),
    );
    expect(html).toContain("tech-wire: upstream failed");
  });

  it("omits the weight table entirely outside priority mode", () => {
    const chrono = makeConfig({ sort: { mode: "chronological", rules: [] } });
    const html = renderControlPanel(controlPanelViewModel(chrono, []));
    expect(html).not.toContain(`class="rules"`);
    expect(html).toContain(`<option value="chronological" selected>`);

    const priority = makeConfig({
      sort: { mode: "priority", rules: [{ feature: { kind: "keyword", value: "x" }, weight: 3 }] },
    });
    const withRules = renderControlPanel(controlPanelViewModel(priority, []));
    expect(withRules).toContain(`class="rules"`);
    expect(withRules).toContain(`data-action="sort-rules"`);
  });

  it("lists saved sources and search results with add/remove actions", () => {
    const html = renderControlPanel(
      controlPanelViewModel(makeConfig(), [
        { id: "art-daily", name: "Art Daily", kind: "upstream" },
      ]),
    );
    expect(html).toContain(`data-action="remove-source" data-ref="tech-wire"`);
    expect(html).toContain(`data-action="add-source" data-ref="art-daily"`);
  });
});

describe("inline editor", () => {
  const selection = {
    feature: { kind: "keyword" as const, value: "rustlang" },
    span: [9, 17] as [number, number],
    postUri: "at://x",
  };

  it("starts from the existing weight when the feature already has a rule", () => {
    const config = makeConfig({
      sort: {
        mode: "priority",
        rules: [{ feature: { kind: "keyword", value: "rustlang" }, weight: 4 }],
      },
    });
    expect(inlineEditorViewModel(selection, config).currentWeight).toBe(4);
  });

  it("starts from zero for a feature with no rule yet", () => {
    expect(inlineEditorViewModel(selection, makeConfig()).currentWeight).toBe(0);
  });

  it("offers steppers, a numeric field, and include/exclude", () => {
    const html = renderInlineEditor(inlineEditorViewModel(selection, makeConfig()));
    for (const label of ["-5", "-1", "+1", "+5"]) expect(html).toContain(`>${label}</button>`);
    expect(html).toContain(`data-action="set-weight"`);
    expect(html).toContain(`data-action="editor-include"`);
    expect(html).toContain(`data-action="editor-exclude"`);
    expect(html).toContain("keyword: rustlang");
  });
});
