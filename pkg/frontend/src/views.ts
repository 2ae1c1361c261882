/** View models and HTML for the three screens. Pure functions of state.
 *
 * Breakdown objects are passed through from the API payload untouched; no
 * score, penalty, or total is ever recomputed on this side.
 */

import { authorHighlight, segmentText, type Segment } from "./highlight.js";
import type {
  Breakdown,
  FeedConfig,
  Feature,
  FilterPredicate,
  Post,
  Selection,
  SortRule,
  SourceHit,
  SourceWarning,
} from "./types.js";
import type { Screen, UIState } from "./state.js";

// -- view models ---------------------------------------------------------------

export interface PostVM {
  uri: string;
  author: string;
  authorFeature: Feature | null;
  createdAt: string;
  sourceChip: string;
  segments: Segment[];
  /** The API's breakdown object, verbatim; null whenever it must not show. */
  breakdown: Breakdown | null;
}

export function postViewModel(
  post: Post,
  options: { panelOpen: boolean; sortMode: string },
): PostVM {
  const teaching = options.panelOpen;
  return {
    uri: post.uri,
    author: post.authorHandle || post.authorId,
    authorFeature: teaching ? authorHighlight(post.highlights) : null,
    createdAt: post.createdAt,
    sourceChip: post.sourceId,
    segments: teaching ? segmentText(post.text, post.highlights) : [{ text: post.text }],
    breakdown:
      teaching && options.sortMode === "priority" && post.breakdown ? post.breakdown : null,
  };
}

export interface TabVM {
  id: string;
  name: string;
  active: boolean;
}

export interface FeedScreenVM {
  screen: Screen;
  tabs: TabVM[];
  panelOpen: boolean;
  /** The manual refresh control shows only alongside an open panel on home. */
  showRefresh: boolean;
  posts: PostVM[];
  warnings: SourceWarning[];
  hasMore: boolean;
  emptyPrompt: string | null;
}

export function feedScreenViewModel(input: {
  state: UIState;
  feeds: FeedConfig[];
  config: FeedConfig | null;
  posts: Post[];
  warnings: SourceWarning[];
  cursor: string | undefined;
}): FeedScreenVM {
  const { state, config } = input;
  const sortMode = config?.sort.mode ?? "interleaved";
  const sourceless = config !== null && config.sources.length === 0;
  return {
    screen: state.screen,
    tabs: input.feeds.map((f) => ({
      id: f.id,
      name: f.name,
      active: f.id === state.activeFeedId,
    })),
    panelOpen: state.panelOpen,
    showRefresh: state.panelOpen && state.screen === "home",
    posts: input.posts.map((p) =>
      postViewModel(p, { panelOpen: state.panelOpen, sortMode }),
    ),
    warnings: input.warnings,
    hasMore: input.cursor !== undefined,
    emptyPrompt:
      sourceless && input.posts.length === 0
        ? "This feed has no sources yet. Open the source editor to add some."
        : null,
  };
}

export type TableSort<K extends string> = { key: K; descending: boolean } | null;

export interface FilterRowVM {
  index: number;
  mode: string;
  kind: string;
  value: string;
}

export interface RuleRowVM {
  feature: Feature;
  kind: string;
  value: string;
  weight: number;
}

export interface PanelVM {
  savedSources: string[];
  sourceResults: SourceHit[];
  filterRows: FilterRowVM[];
  sortMode: string;
  /** Weight table only exists under priority sorting. */
  rulesVisible: boolean;
  ruleRows: RuleRowVM[];
}

export function controlPanelViewModel(
  config: FeedConfig,
  sourceResults: SourceHit[],
  options: {
    filterSort?: TableSort<"mode" | "kind" | "value">;
    ruleSort?: TableSort<"weight" | "value">;
  } = {},
): PanelVM {
  let filterRows: FilterRowVM[] = config.filters.map((f: FilterPredicate, index) => ({
    index,
    mode: f.mode,
    kind: f.feature.kind,
    value: f.feature.value,
  }));
  if (options.filterSort) {
    filterRows = sortRows(filterRows, options.filterSort.key, options.filterSort.descending);
  }

  let ruleRows: RuleRowVM[] = config.sort.rules.map((r: SortRule) => ({
    feature: r.feature,
    kind: r.feature.kind,
    value: r.feature.value,
    weight: r.weight,
  }));
  if (options.ruleSort) {
    ruleRows = sortRows(ruleRows, options.ruleSort.key, options.ruleSort.descending);
  }

  return {
    savedSources: [...config.sources],
    sourceResults,
    filterRows,
    sortMode: config.sort.mode,
    rulesVisible: config.sort.mode === "priority",
    ruleRows,
  };
}

/** Stable sort of table rows by one column, used by the sortable headers. */
export function sortRows<R, K extends keyof R & string>(
  rows: R[],
  key: K,
  descending: boolean,
): R[] {
  const decorated = rows.map((row, i) => ({ row, i }));
  decorated.sort((a, b) => {
    const x = a.row[key];
    const y = b.row[key];
    let order: number;
    if (typeof x === "number" && typeof y === "number") {
      order = x - y;
    } else {
      order = String(x) < String(y) ? -1 : String(x) > String(y) ? 1 : 0;
    }
    if (order === 0) return a.i - b.i;
    return descending ? -order : order;
  });
  return decorated.map((d) => d.row);
}

// -- HTML ------------------------------------------------------------------------

export function esc(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function attr(value: string): string {
  return esc(value);
}

/** A number exactly as the API serialized it (shortest round-trip form). */
function num(value: number): string {
  return String(value);
}

export function renderBreakdown(breakdown: Breakdown): string {
  const rows = breakdown.matched
    .map(
      (m) =>
        `<li class="rule">${esc(m.feature.kind)} &ldquo;${esc(m.feature.value)}&rdquo; ` +
        `<span class="weight">${m.weight >= 0 ? "+" : ""}${num(m.weight)}</span></li>`,
    )
    .join("");
  return (
    `<div class="breakdown">` +
    `<span class="age">age ${num(breakdown.agePenalty)}</span>` +
    `<ul>${rows}</ul>` +
    `<span class="total">total ${num(breakdown.total)}</span>` +
    `</div>`
  );
}

export function renderPost(vm: PostVM): string {
  const body = vm.segments
    .map((segment) => {
      if (!segment.highlight || !segment.highlight.span) return esc(segment.text);
      const [start, end] = segment.highlight.span;
      return (
        `<mark data-action="select" data-kind="${attr(segment.highlight.feature.kind)}" ` +
        `data-value="${attr(segment.highlight.feature.value)}" ` +
        `data-span="${start},${end}" data-post="${attr(vm.uri)}">` +
        esc(segment.text) +
        `</mark>`
      );
    })
    .join("");
  const author = vm.authorFeature
    ? `<button class="author" data-action="select" data-kind="author" ` +
      `data-value="${attr(vm.authorFeature.value)}" data-post="${attr(vm.uri)}">` +
      esc(vm.author) +
      `</button>`
    : `<span class="author">${esc(vm.author)}</span>`;
  return (
    `<article class="post" data-uri="${attr(vm.uri)}">` +
    (vm.breakdown ? renderBreakdown(vm.breakdown) : "") +
    `<header>${author}<span class="chip">${esc(vm.sourceChip)}</span>` +
    `<time>${esc(vm.createdAt)}</time></header>` +
    `<p>${body}</p>` +
    `</article>`
  );
}

export function renderTabs(tabs: TabVM[]): string {
  const items = tabs
    .map(
      (tab) =>
        `<button class="tab${tab.active ? " active" : ""}" data-action="open-feed" ` +
        `data-id="${attr(tab.id)}">${esc(tab.name)}</button>`,
    )
    .join("");
  return `<nav class="tabs">${items}<button data-action="new-feed">+ new feed</button></nav>`;
}

export function renderFeedScreen(vm: FeedScreenVM): string {
  const toolbar =
    `<div class="toolbar">` +
    `<button class="sandbox-toggle" data-action="${vm.screen === "sandbox" ? "exit-sandbox" : "enter-sandbox"}">` +
    (vm.screen === "sandbox" ? "leave sandbox" : "sandbox") +
    `</button>` +
    renderTabs(vm.tabs) +
    `<button data-action="${vm.panelOpen ? "close-panel" : "open-panel"}"` +
    (vm.screen === "sandbox" ? " disabled" : "") +
    `>${vm.panelOpen ? "hide controls" : "controls"}</button>` +
    (vm.showRefresh ? `<button data-action="refresh">refresh</button>` : "") +
    `</div>`;
  const warnings = vm.warnings
    .map((w) => `<p class="warning">${esc(w.sourceId)}: ${esc(w.message)}</p>`)
    .join("");
  const posts = vm.posts.map(renderPost).join("");
  const more = vm.hasMore ? `<button data-action="load-more">more</button>` : "";
  const empty = vm.emptyPrompt ? `<p class="empty">${esc(vm.emptyPrompt)}</p>` : "";
  return `${toolbar}${warnings}${empty}<section class="feed">${posts}</section>${more}`;
}

export function renderControlPanel(vm: PanelVM): string {
  const saved = vm.savedSources
    .map(
      (ref) =>
        `<li>${esc(ref)} <button data-action="remove-source" data-ref="${attr(ref)}">remove</button></li>`,
    )
    .join("");
  const results = vm.sourceResults
    .map(
      (hit) =>
        `<li>${esc(hit.name)} <button data-action="add-source" data-ref="${attr(hit.id)}">add</button></li>`,
    )
    .join("");
  const filterRows = vm.filterRows
    .map(
      (row) =>
        `<tr><td><button data-action="toggle-filter-mode" data-index="${row.index}">${esc(row.mode)}</button></td>` +
        `<td>${esc(row.kind)}</td>` +
        `<td><input data-action="edit-filter-value" data-index="${row.index}" value="${attr(row.value)}"></td>` +
        `<td><button data-action="remove-filter" data-index="${row.index}">remove</button></td></tr>`,
    )
    .join("");
  const modes = ["interleaved", "chronological", "priority"]
    .map(
      (mode) =>
        `<option value="${mode}"${mode === vm.sortMode ? " selected" : ""}>${mode}</option>`,
    )
    .join("");
  const ruleRows = vm.ruleRows
    .map(
      (row) =>
        `<tr><td>${esc(row.kind)}</td><td>${esc(row.value)}</td>` +
        `<td class="weight">${row.weight}</td>` +
        `<td><button data-action="remove-rule" data-kind="${attr(row.kind)}" data-value="${attr(row.value)}">remove</button></td></tr>`,
    )
    .join("");
  const rulesTable = vm.rulesVisible
    ? `<table class="rules"><thead><tr>` +
      `<th>kind</th><th data-action="sort-rules" data-key="value">feature</th>` +
      `<th data-action="sort-rules" data-key="weight">weight</th><th></th>` +
      `</tr></thead><tbody>${ruleRows}</tbody></table>`
    : "";
  return (
    `<aside class="panel">` +
    `<section class="sources"><h3>Sources</h3><ul>${saved}</ul>` +
    `<input data-action="search-sources" placeholder="search sources">` +
    `<button data-action="popular-sources">popular</button><ul>${results}</ul></section>` +
    `<section class="filters"><h3>Filters</h3><table>` +
    `<thead><tr><th data-action="sort-filters" data-key="mode">mode</th>` +
    `<th data-action="sort-filters" data-key="kind">kind</th>` +
    `<th data-action="sort-filters" data-key="value">value</th><th></th></tr></thead>` +
    `<tbody>${filterRows}</tbody></table></section>` +
    `<section class="sorting"><h3>Sorting</h3>` +
    `<select data-action="set-sort-mode">${modes}</select>${rulesTable}</section>` +
    `</aside>`
  );
}

export interface InlineEditorVM {
  feature: Feature;
  currentWeight: number;
}

export function inlineEditorViewModel(
  selection: Selection,
  config: FeedConfig,
): InlineEditorVM {
  const existing = config.sort.rules.find(
    (r) =>
      r.feature.kind === selection.feature.kind && r.feature.value === selection.feature.value,
  );
  return { feature: selection.feature, currentWeight: existing?.weight ?? 0 };
}

export function renderInlineEditor(vm: InlineEditorVM): string {
  const steps = [-5, -1, 1, 5]
    .map(
      (delta) =>
        `<button data-action="bump-weight" data-delta="${delta}">${delta > 0 ? "+" : ""}${delta}</button>`,
    )
    .join("");
  return (
    `<div class="inline-editor">` +
    `<span class="subject">${esc(vm.feature.kind)}: ${esc(vm.feature.value)}</span>` +
    `<div class="stepper">${steps}` +
    `<input type="number" data-action="set-weight" value="${vm.currentWeight}"></div>` +
    `<button data-action="editor-include">include</button>` +
    `<button data-action="editor-exclude">exclude</button>` +
    `<button data-action="editor-close">close</button>` +
    `</div>`
  );
}
