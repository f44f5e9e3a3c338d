/** Page entry: load the exported bundle, then wire panels to the store.

The page is a pure function of the bundle plus two pieces of UI state
(the symbol filter and the selected record). Interactions only write the
store; every panel that depends on state re-renders from scratch, which
keeps filters reversible by construction.
*/

import { browserRows } from "./browser";
import {
  gateHistogram,
  rewardBars,
  symbolCategoryStacks,
} from "./distributions";
import { buildSymbolGraph, highlightPath } from "./graph";
import { fetchBundle } from "./load";
import {
  renderBrowser,
  renderEmptyState,
  renderEvalSummary,
  renderGateHistogram,
  renderGraph,
  renderHeatmap,
  renderRewardBars,
  renderSequence,
  renderStatus,
  renderSymbolStacks,
} from "./render";
import { createStore } from "./store";
import { DashboardBundle } from "./types";

function panel(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing panel #${id}`);
  return el;
}

function wire(bundle: DashboardBundle): void {
  const records = bundle.records;
  const store = createStore();
  const byId = new Map(records.map((r) => [r.id, r]));

  renderEvalSummary(panel("eval-summary"), bundle.evalResult);

  if (records.length === 0) {
    renderEmptyState(panel("reward-chart"), "Experience database");
    renderEmptyState(panel("gate-chart"), "Experience database");
    renderEmptyState(panel("symbol-chart"), "Experience database");
  } else {
    renderRewardBars(panel("reward-chart"), rewardBars(records));
    renderGateHistogram(panel("gate-chart"), gateHistogram(records));
    renderSymbolStacks(
      panel("symbol-chart"),
      symbolCategoryStacks(records),
      bundle.config.label_names,
    );
  }

  const graphView = renderGraph(
    panel("graph"),
    buildSymbolGraph(records),
    (symbol) => store.toggleFilter(symbol),
  );

  const update = () => {
    const { filterSymbol, selectedId } = store.get();
    const selected =
      selectedId !== null ? (byId.get(selectedId) ?? null) : null;
    renderBrowser(
      panel("browser"),
      browserRows(records, filterSymbol),
      selectedId,
      filterSymbol,
      (id) => store.toggleSelection(id),
    );
    graphView.applyHighlight(highlightPath(selected));
    graphView.applyFilter(filterSymbol);
    renderSequence(panel("sequence"), selected);
    renderHeatmap(panel("heatmap"), selected, bundle.config);
  };
  store.subscribe(update);
  update();
}

async function main(): Promise<void> {
  const app = panel("status");
  const params = new URLSearchParams(window.location.search);
  const dataDir = params.get("data") ?? "./dashboard_data";
  renderStatus(app, "loading", `Loading ${dataDir} ...`);
  const result = await fetchBundle(dataDir);
  if (!result.ok) {
    renderStatus(app, "error", result.error);
    return;
  }
  app.replaceChildren();
  document.getElementById("panels")?.classList.remove("hidden");
  wire(result.bundle);
}

void main();
