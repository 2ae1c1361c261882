/** Client-side application state and the mutation discipline around it.
 *
 * Two rules shape everything here:
 *  - Browsing never mutates: with the panel closed the app only ever GETs.
 *  - Every config change is one PUT, acknowledged by the server, followed by
 *    at most one head refetch (automatic on the sandbox screen, manual on
 *    home). No optimistic updates, no recomputed scores.
 */

import { ApiClient, ApiError } from "./api.js";
import type {
  FeedConfig,
  FeedPatch,
  Feature,
  FilterPredicate,
  Post,
  Selection,
  SortMode,
  SortRule,
  SourceHit,
  SourceWarning,
} from "./types.js";

export type Screen = "home" | "sandbox";

export interface UIState {
  screen: Screen;
  activeFeedId: string | null;
  /** Forced true whenever screen is "sandbox". */
  panelOpen: boolean;
  pendingSelection: Selection | null;
}

export const PAGE_LIMIT = 30;

export class FeedApp {
  readonly state: UIState = {
    screen: "home",
    activeFeedId: null,
    panelOpen: false,
    pendingSelection: null,
  };

  feeds: FeedConfig[] = [];
  config: FeedConfig | null = null;
  posts: Post[] = [];
  warnings: SourceWarning[] = [];
  cursor: string | undefined;
  sourceResults: SourceHit[] = [];
  lastError: string | null = null;

  private listeners: Array<() => void> = [];

  constructor(
    private readonly client: ApiClient,
    private readonly ownerId: string,
  ) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  /** Breakdowns are only requested when they will be shown. */
  get wantBreakdown(): boolean {
    return this.state.panelOpen && this.config?.sort.mode === "priority";
  }

  // -- navigation (GET-only; never mutates server state) -----------------------

  async start(): Promise<void> {
    await this.loadFeeds();
    const first = this.feeds[0];
    if (first) await this.openFeed(first.id);
    this.notify();
  }

  async loadFeeds(): Promise<void> {
    this.feeds = await this.client.listFeeds(this.ownerId);
    this.notify();
  }

  async openFeed(id: string): Promise<void> {
    this.config = await this.client.getFeed(id);
    this.state.activeFeedId = id;
    this.state.pendingSelection = null;
    await this.fetchHead();
    this.notify();
  }

  /** Replace the visible posts with the first page of the current session. */
  private async fetchHead(): Promise<void> {
    if (!this.config) return;
    const page = await this.client.getPosts(this.config.id, {
      limit: PAGE_LIMIT,
      breakdown: this.wantBreakdown,
    });
    this.posts = page.posts;
    this.warnings = page.warnings;
    this.cursor = page.cursor;
  }

  async loadMore(): Promise<void> {
    if (!this.config || this.cursor === undefined) return;
    try {
      const page = await this.client.getPosts(this.config.id, {
        cursor: this.cursor,
        limit: PAGE_LIMIT,
        breakdown: this.wantBreakdown,
      });
      this.posts = this.posts.concat(page.posts);
      this.warnings = page.warnings;
      this.cursor = page.cursor;
    } catch (error) {
      if (error instanceof ApiError && error.status === 410) {
        // The config changed under this cursor; start over from the head.
        this.config = await this.client.getFeed(this.config.id);
        await this.fetchHead();
      } else {
        throw error;
      }
    }
    this.notify();
  }

  /** The explicit refresh control: new session upstream, then the new head. */
  async manualRefresh(): Promise<void> {
    if (!this.config) return;
    await this.client.refreshFeed(this.config.id);
    await this.fetchHead();
    this.notify();
  }

  // -- screens and panel ---------------------------------------------------------

  openPanel(): void {
    if (!this.state.panelOpen) {
      this.state.panelOpen = true;
      this.notify();
    }
  }

  closePanel(): void {
    if (this.state.screen === "sandbox") return; // pinned open there
    if (this.state.panelOpen) {
      this.state.panelOpen = false;
      this.state.pendingSelection = null;
      this.notify();
    }
  }

  enterSandbox(): void {
    this.state.screen = "sandbox";
    this.state.panelOpen = true;
    this.notify();
  }

  exitSandbox(): void {
    this.state.screen = "home";
    this.notify();
  }

  // -- selections (inline teaching) -------------------------------------------------

  select(selection: Selection): void {
    if (!this.state.panelOpen) return; // spans are not rendered when closed
    this.state.pendingSelection = selection;
    this.notify();
  }

  clearSelection(): void {
    this.state.pendingSelection = null;
    this.notify();
  }

  // -- config mutations ---------------------------------------------------------------

  /**
   * One PUT, then (sandbox only) one automatic head refetch. A 409 means
   * another tab moved the config; reload it so the local version mirrors
   * the server again, then surface the conflict.
   */
  async applyConfigChange(patch: FeedPatch): Promise<void> {
    if (!this.config) throw new Error("no active feed");
    try {
      this.config = await this.client.updateFeed(this.config.id, patch, this.config.version);
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.config = await this.client.getFeed(this.config.id);
        this.lastError = "feed was changed elsewhere; reloaded the latest version";
        this.notify();
      }
      throw error;
    }
    this.feeds = this.feeds.map((f) => (f.id === this.config!.id ? this.config! : f));
    this.lastError = null;
    if (this.state.screen === "sandbox") {
      await this.fetchHead();
    }
    this.notify();
  }

  async createFeed(name: string, sources: string[] = []): Promise<FeedConfig> {
    const created = await this.client.createFeed({ ownerId: this.ownerId, name, sources });
    this.feeds = this.feeds.concat(created); // new tab on the home screen
    this.notify();
    return created;
  }

  async addSource(ref: string): Promise<void> {
    const current = this.config?.sources ?? [];
    if (current.includes(ref)) return;
    await this.applyConfigChange({ sources: [...current, ref] });
  }

  async removeSource(ref: string): Promise<void> {
    const current = this.config?.sources ?? [];
    await this.applyConfigChange({ sources: current.filter((s) => s !== ref) });
  }

  async searchSources(q: string, popular = false): Promise<void> {
    this.sourceResults = await this.client.searchSources(popular ? { popular: true } : { q });
    this.notify();
  }

  async addFilter(predicate: FilterPredicate): Promise<void> {
    const current = this.config?.filters ?? [];
    await this.applyConfigChange({ filters: [...current, predicate] });
  }

  async removeFilter(index: number): Promise<void> {
    const current = this.config?.filters ?? [];
    await this.applyConfigChange({ filters: current.filter((_, i) => i !== index) });
  }

  /** The filter table's mode cell toggles in place. */
  async toggleFilterMode(index: number): Promise<void> {
    const current = this.config?.filters ?? [];
    const target = current[index];
    if (!target) return;
    const flipped: FilterPredicate = {
      mode: target.mode === "include" ? "exclude" : "include",
      feature: target.feature,
    };
    await this.applyConfigChange({
      filters: current.map((f, i) => (i === index ? flipped : f)),
    });
  }

  async editFilterValue(index: number, value: string): Promise<void> {
    const current = this.config?.filters ?? [];
    const target = current[index];
    if (!target) return;
    const edited: FilterPredicate = {
      mode: target.mode,
      feature: { kind: target.feature.kind, value },
    };
    await this.applyConfigChange({
      filters: current.map((f, i) => (i === index ? edited : f)),
    });
  }

  async setSortMode(mode: SortMode): Promise<void> {
    const rules = mode === "priority" ? (this.config?.sort.rules ?? []) : [];
    await this.applyConfigChange({ sort: { mode, rules } });
  }

  /**
   * Add or adjust a rule's weight. Weighting only means anything under
   * priority sorting, so this switches the mode over when needed instead
   * of letting the rule be silently dropped.
   */
  async setRuleWeight(feature: Feature, weight: number): Promise<void> {
    const rules = this.config?.sort.rules ?? [];
    const existing = rules.findIndex(
      (r) => r.feature.kind === feature.kind && r.feature.value === feature.value,
    );
    let next: SortRule[];
    if (existing >= 0) {
      next = rules.map((r, i) => (i === existing ? { feature: r.feature, weight } : r));
    } else {
      next = [...rules, { feature, weight }];
    }
    await this.applyConfigChange({ sort: { mode: "priority", rules: next } });
  }

  async bumpRuleWeight(feature: Feature, delta: number): Promise<void> {
    const rules = this.config?.sort.rules ?? [];
    const existing = rules.find(
      (r) => r.feature.kind === feature.kind && r.feature.value === feature.value,
    );
    await this.setRuleWeight(feature, (existing?.weight ?? 0) + delta);
  }

  async removeRule(feature: Feature): Promise<void> {
    const rules = this.config?.sort.rules ?? [];
    await this.applyConfigChange({
      sort: {
        mode: this.config?.sort.mode ?? "priority",
        rules: rules.filter(
          (r) => !(r.feature.kind === feature.kind && r.feature.value === feature.value),
        ),
      },
    });
  }

  // -- inline editor actions over the pending selection ----------------------------------

  async includeSelection(): Promise<void> {
    const selection = this.state.pendingSelection;
    if (!selection) return;
    await this.addFilter({ mode: "include", feature: selection.feature });
    this.clearSelection();
  }

  async excludeSelection(): Promise<void> {
    const selection = this.state.pendingSelection;
    if (!selection) return;
    await this.addFilter({ mode: "exclude", feature: selection.feature });
    this.clearSelection();
  }

  async bumpSelectionWeight(delta: number): Promise<void> {
    const selection = this.state.pendingSelection;
    if (!selection) return;
    await this.bumpRuleWeight(selection.feature, delta);
  }

  async setSelectionWeight(weight: number): Promise<void> {
    const selection = this.state.pendingSelection;
    if (!selection) return;
    await this.setRuleWeight(selection.feature, weight);
  }
}
