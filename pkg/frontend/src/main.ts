/** Browser bootstrap: render into #app and translate DOM events into app calls. */

import { ApiClient } from "./api.js";
import { FeedApp } from "./state.js";
import {
  controlPanelViewModel,
  feedScreenViewModel,
  inlineEditorViewModel,
  renderControlPanel,
  renderFeedScreen,
  renderInlineEditor,
  type TableSort,
} from "./views.js";

function baseUrl(): string {
  const override = new URLSearchParams(window.location.search).get("api");
  return override ?? window.location.origin;
}

function ownerId(): string {
  const stored = window.localStorage.getItem("feedmix.owner");
  if (stored) return stored;
  const fresh = `did:web:local-${Math.random().toString(36).slice(2, 10)}`;
  window.localStorage.setItem("feedmix.owner", fresh);
  return fresh;
}

const app = new FeedApp(new ApiClient(baseUrl()), ownerId());
const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");

let filterSort: TableSort<"mode" | "kind" | "value"> = null;
let ruleSort: TableSort<"weight" | "value"> = null;

function render(): void {
  const screen = feedScreenViewModel(app);
  let html = renderFeedScreen(screen);
  if (app.state.panelOpen && app.config) {
    html += renderControlPanel(
      controlPanelViewModel(app.config, app.sourceResults, { filterSort, ruleSort }),
    );
  }
  if (app.state.pendingSelection && app.config) {
    html += renderInlineEditor(inlineEditorViewModel(app.state.pendingSelection, app.config));
  }
  if (app.lastError) html += `<p class="error">${app.lastError}</p>`;
  root!.innerHTML = html;
}

function fail(error: unknown): void {
  app.lastError = error instanceof Error ? error.message : String(error);
  render();
}

function run(work: Promise<unknown>): void {
  work.catch(fail);
}

root.addEventListener("click", (event) => {
  const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
  if (!target) return;
  const data = target.dataset;
  switch (data.action) {
    case "open-feed":
      run(app.openFeed(data.id!));
      break;
    case "new-feed": {
      const name = window.prompt("Feed name?");
      if (name) run(app.createFeed(name));
      break;
    }
    case "enter-sandbox":
      app.enterSandbox();
      break;
    case "exit-sandbox":
      app.exitSandbox();
      break;
    case "open-panel":
      app.openPanel();
      run(app.manualRefresh()); // pick up breakdowns for the now-visible panel
      break;
    case "close-panel":
      app.closePanel();
      break;
    case "refresh":
      run(app.manualRefresh());
      break;
    case "load-more":
      run(app.loadMore());
      break;
    case "select":
      app.select({
        feature: { kind: data.kind as "keyword" | "author", value: data.value! },
        span: data.span ? (data.span.split(",").map(Number) as [number, number]) : null,
        postUri: data.post!,
      });
      break;
    case "editor-include":
      run(app.includeSelection());
      break;
    case "editor-exclude":
      run(app.excludeSelection());
      break;
    case "editor-close":
      app.clearSelection();
      break;
    case "bump-weight":
      run(app.bumpSelectionWeight(Number(data.delta)));
      break;
    case "remove-source":
      run(app.removeSource(data.ref!));
      break;
    case "add-source":
      run(app.addSource(data.ref!));
      break;
    case "popular-sources":
      run(app.searchSources("", true));
      break;
    case "toggle-filter-mode":
      run(app.toggleFilterMode(Number(data.index)));
      break;
    case "remove-filter":
      run(app.removeFilter(Number(data.index)));
      break;
    case "remove-rule":
      run(app.removeRule({ kind: data.kind as "keyword" | "author", value: data.value! }));
      break;
    case "sort-filters": {
      const key = data.key as "mode" | "kind" | "value";
      filterSort = { key, descending: filterSort?.key === key ? !filterSort.descending : false };
      render();
      break;
    }
    case "sort-rules": {
      const key = data.key as "weight" | "value";
      ruleSort = { key, descending: ruleSort?.key === key ? !ruleSort.descending : true };
      render();
      break;
    }
  }
});

root.addEventListener("change", (event) => {
  const target = event.target as HTMLElement;
  const data = target.dataset;
  if (data.action === "set-sort-mode") {
    run(app.setSortMode((target as HTMLSelectElement).value as never));
  } else if (data.action === "set-weight") {
    const weight = Number((target as HTMLInputElement).value);
    if (Number.isFinite(weight)) run(app.setSelectionWeight(weight));
  } else if (data.action === "edit-filter-value") {
    run(app.editFilterValue(Number(data.index), (target as HTMLInputElement).value));
  } else if (data.action === "search-sources") {
    run(app.searchSources((target as HTMLInputElement).value));
  }
});

app.onChange(render);
run(app.start());
