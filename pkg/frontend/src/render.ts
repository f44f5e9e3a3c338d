/** Thin d3 rendering over the pure chart models.

Everything testable lives in the sibling modules; this file only maps
their outputs onto SVG and DOM nodes and forwards interactions to the
store callbacks.
*/

import * as d3 from "d3";
import { GATE_BINS, RewardBars, SymbolStack } from "./distributions";
import {
  GraphLink,
  GraphNode,
  PathHighlight,
  SymbolGraph,
  initialPosition,
  linkKey,
} from "./graph";
import { cellTooltip, heatmapState } from "./heatmap";
import { BrowserRow } from "./browser";
import { sequenceBlocks } from "./sequence";
import { EvalResult, ExperienceRecord, ModelConfig } from "./types";

export function clear(el: HTMLElement): void {
  el.replaceChildren();
}

export function renderStatus(
  el: HTMLElement,
  kind: "loading" | "error",
  message: string,
): void {
  clear(el);
  const box = document.createElement("div");
  box.className = kind === "error" ? "status status-error" : "status";
  box.textContent =
    kind === "error" ? `Failed to load dashboard data: ${message}` : message;
  el.appendChild(box);
}

export function renderEmptyState(el: HTMLElement, what: string): void {
  clear(el);
  const box = document.createElement("div");
  box.className = "status";
  box.textContent = `${what} is empty; nothing to chart.`;
  el.appendChild(box);
}

function chartSvg(
  el: HTMLElement,
  width: number,
  height: number,
): d3.Selection<SVGGElement, unknown, null, undefined> {
  const margin = { top: 12, right: 12, bottom: 28, left: 40 };
  const svg = d3
    .select(el)
    .append("svg")
    .attr("viewBox", `0 0 ${width} ${height}`)
    .attr("width", "100%");
  return svg
    .append("g")
    .attr("transform", `translate(${margin.left},${margin.top})`);
}

const INNER = { width: 268, height: 140 };

export function renderRewardBars(el: HTMLElement, bars: RewardBars): void {
  clear(el);
  const g = chartSvg(el, 320, 180);
  const data = [
    { name: "reward 1.0", count: bars.correct, color: "#59a14f" },
    { name: "reward 0.0", count: bars.incorrect, color: "#e15759" },
  ];
  const x = d3
    .scaleBand()
    .domain(data.map((d) => d.name))
    .range([0, INNER.width])
    .padding(0.35);
  const y = d3
    .scaleLinear()
    .domain([0, Math.max(1, d3.max(data, (d) => d.count) ?? 1)])
    .range([INNER.height, 0]);
  g.append("g")
    .attr("transform", `translate(0,${INNER.height})`)
    .call(d3.axisBottom(x));
  g.append("g").call(d3.axisLeft(y).ticks(4).tickFormat(d3.format("d")));
  g.selectAll("rect")
    .data(data)
    .join("rect")
    .attr("x", (d) => x(d.name) ?? 0)
    .attr("y", (d) => y(d.count))
    .attr("width", x.bandwidth())
    .attr("height", (d) => INNER.height - y(d.count))
    .attr("fill", (d) => d.color);
  g.selectAll("text.count")
    .data(data)
    .join("text")
    .attr("class", "count")
    .attr("x", (d) => (x(d.name) ?? 0) + x.bandwidth() / 2)
    .attr("y", (d) => y(d.count) - 4)
    .attr("text-anchor", "middle")
    .attr("font-size", 11)
    .text((d) => d.count);
}

export function renderGateHistogram(el: HTMLElement, counts: number[]): void {
  clear(el);
  const g = chartSvg(el, 320, 180);
  const x = d3.scaleLinear().domain([0, 1]).range([0, INNER.width]);
  const y = d3
    .scaleLinear()
    .domain([0, Math.max(1, d3.max(counts) ?? 1)])
    .range([INNER.height, 0]);
  g.append("g")
    .attr("transform", `translate(0,${INNER.height})`)
    .call(d3.axisBottom(x).ticks(5));
  g.append("g").call(d3.axisLeft(y).ticks(4).tickFormat(d3.format("d")));
  const width = INNER.width / GATE_BINS;
  g.selectAll("rect")
    .data(counts)
    .join("rect")
    .attr("x", (_, i) => x(i / GATE_BINS))
    .attr("y", (d) => y(d))
    .attr("width", width - 1)
    .attr("height", (d) => INNER.height - y(d))
    .attr("fill", "#4e79a7")
    .append("title")
    .text((d, i) => `[${(i / GATE_BINS).toFixed(2)}, ${((i + 1) / GATE_BINS).toFixed(2)}): ${d}`);
}

export function renderSymbolStacks(
  el: HTMLElement,
  stacks: SymbolStack[],
  labelNames: readonly string[],
  maxSymbols = 14,
): void {
  clear(el);
  const shown = stacks.slice(0, maxSymbols);
  const g = chartSvg(el, 420, 200);
  const inner = { width: 368, height: 140 };
  const color = d3
    .scaleOrdinal<string, string>()
    .domain([...labelNames])
    .range(d3.schemeTableau10);
  const x = d3
    .scaleBand()
    .domain(shown.map((d) => String(d.symbol)))
    .range([0, inner.width])
    .padding(0.25);
  const y = d3
    .scaleLinear()
    .domain([0, Math.max(1, d3.max(shown, (d) => d.total) ?? 1)])
    .range([inner.height, 0]);
  g.append("g")
    .attr("transform", `translate(0,${inner.height})`)
    .call(d3.axisBottom(x))
    .selectAll("text")
    .attr("font-size", 9);
  g.append("g").call(d3.axisLeft(y).ticks(4).tickFormat(d3.format("d")));
  for (const stack of shown) {
    let y0 = 0;
    for (const label of labelNames) {
      const count = stack.counts[label] ?? 0;
      if (count === 0) continue;
      g.append("rect")
        .attr("x", x(String(stack.symbol)) ?? 0)
        .attr("y", y(y0 + count))
        .attr("width", x.bandwidth())
        .attr("height", y(y0) - y(y0 + count))
        .attr("fill", color(label))
        .append("title")
        .text(`symbol ${stack.symbol}, ${label}: ${count}`);
      y0 += count;
    }
  }
  const legend = g.append("g").attr("transform", `translate(0,${inner.height + 26})`);
  labelNames.forEach((label, i) => {
    const lg = legend.append("g").attr("transform", `translate(${i * 90},0)`);
    lg.append("rect").attr("width", 9).attr("height", 9).attr("fill", color(label));
    lg.append("text").attr("x", 12).attr("y", 8).attr("font-size", 10).text(label);
  });
}

export function renderEvalSummary(
  el: HTMLElement,
  result: EvalResult | null,
): void {
  clear(el);
  if (result === null) {
    el.textContent =
      "No eval_result.json in the bundle; charts below are computed from the database.";
    return;
  }
  const items: [string, string][] = [
    ["samples", String(result.n)],
    ["accuracy", result.accuracy.toFixed(4)],
    ["gated ratio", result.gated_ratio.toFixed(4)],
    [
      "intuitive accuracy",
      result.intuitive_accuracy === null
        ? "n/a (nothing gated)"
        : result.intuitive_accuracy.toFixed(4),
    ],
    ["theta", result.theta.toFixed(2)],
  ];
  for (const [name, value] of items) {
    const chip = document.createElement("span");
    chip.className = "chip";
    chip.textContent = `${name}: ${value}`;
    el.appendChild(chip);
  }
}

interface NodeDatum extends d3.SimulationNodeDatum {
  symbol: number;
  frequency: number;
}

interface LinkDatum extends d3.SimulationLinkDatum<NodeDatum> {
  key: string;
  count: number;
}

export interface GraphView {
  applyHighlight(highlight: PathHighlight): void;
  applyFilter(symbol: number | null): void;
}

export function renderGraph(
  el: HTMLElement,
  graph: SymbolGraph,
  onSymbolClick: (symbol: number) => void,
): GraphView {
  clear(el);
  const width = 640;
  const height = 420;
  if (graph.nodes.length === 0) {
    renderEmptyState(el, "Symbol graph");
    return { applyHighlight: () => undefined, applyFilter: () => undefined };
  }
  const svg = d3
    .select(el)
    .append("svg")
    .attr("viewBox", `0 0 ${width} ${height}`)
    .attr("width", "100%");

  for (const [id, color] of [
    ["arrow", "#9aa6b2"],
    ["arrow-hl", "#e8710a"],
  ] as const) {
    svg
      .append("defs")
      .append("marker")
      .attr("id", id)
      .attr("viewBox", "0 -4 8 8")
      .attr("refX", 8)
      .attr("markerWidth", 6)
      .attr("markerHeight", 6)
      .attr("orient", "auto")
      .append("path")
      .attr("d", "M0,-4L8,0L0,4")
      .attr("fill", color);
  }

  const nodes: NodeDatum[] = graph.nodes.map((n: GraphNode) => ({
    ...n,
    ...initialPosition(n.symbol, width, height),
  }));
  const links: LinkDatum[] = graph.links.map((l: GraphLink) => ({
    source: l.from,
    target: l.to,
    count: l.count,
    key: linkKey(l.from, l.to),
  }));

  const maxFreq = d3.max(nodes, (d) => d.frequency) ?? 1;
  const radius = d3.scaleSqrt().domain([1, maxFreq]).range([4, 16]);
  const maxCount = d3.max(links, (d) => d.count) ?? 1;
  const strokeWidth = d3.scaleLinear().domain([1, maxCount]).range([1, 4.5]);

  const linkSel = svg
    .append("g")
    .selectAll<SVGPathElement, LinkDatum>("path")
    .data(links)
    .join("path")
    .attr("class", "graph-link")
    .attr("fill", "none")
    .attr("stroke", "#9aa6b2")
    .attr("stroke-width", (d) => strokeWidth(d.count))
    .attr("marker-end", (d) =>
      d.source === d.target ? null : "url(#arrow)",
    );
  linkSel.append("title").text((d) => `${d.key}: ${d.count} records`);

  const nodeSel = svg
    .append("g")
    .selectAll<SVGCircleElement, NodeDatum>("circle")
    .data(nodes)
    .join("circle")
    .attr("class", "graph-node")
    .attr("r", (d) => radius(d.frequency))
    .attr("fill", "#4e79a7")
    .attr("stroke", "#fff")
    .attr("stroke-width", 1)
    .style("cursor", "pointer")
    .on("click", (_, d) => onSymbolClick(d.symbol));
  nodeSel.append("title").text((d) => `symbol ${d.symbol} (frequency ${d.frequency})`);

  const showLabels = nodes.length <= 120;
  const labelSel = svg
    .append("g")
    .selectAll<SVGTextElement, NodeDatum>("text")
    .data(showLabels ? nodes : [])
    .join("text")
    .attr("font-size", 9)
    .attr("fill", "#444")
    .attr("pointer-events", "none")
    .text((d) => d.symbol);

  const loopPath = (d: LinkDatum): string => {
    const n = d.source as NodeDatum;
    const r = radius(n.frequency) + 5;
    const x = n.x ?? 0;
    const y = (n.y ?? 0) - radius(n.frequency);
    return `M ${x} ${y} a ${r} ${r} 0 1 1 0.01 0`;
  };
  const linePath = (d: LinkDatum): string => {
    const s = d.source as NodeDatum;
    const t = d.target as NodeDatum;
    const dx = (t.x ?? 0) - (s.x ?? 0);
    const dy = (t.y ?? 0) - (s.y ?? 0);
    const dist = Math.hypot(dx, dy) || 1;
    // Stop at the target's rim so the arrowhead stays visible.
    const trim = radius(t.frequency) + 2;
    const ex = (t.x ?? 0) - (dx / dist) * trim;
    const ey = (t.y ?? 0) - (dy / dist) * trim;
    return `M ${s.x ?? 0} ${s.y ?? 0} L ${ex} ${ey}`;
  };

  const tick = () => {
    linkSel.attr("d", (d) => (d.source === d.target ? loopPath(d) : linePath(d)));
    nodeSel
      .attr("cx", (d) => (d.x = Math.max(10, Math.min(width - 10, d.x ?? 0))))
      .attr("cy", (d) => (d.y = Math.max(10, Math.min(height - 10, d.y ?? 0))));
    labelSel
      .attr("x", (d) => (d.x ?? 0) + radius(d.frequency) + 2)
      .attr("y", (d) => (d.y ?? 0) + 3);
  };

  const sim = d3
    .forceSimulation(nodes)
    .force(
      "link",
      d3
        .forceLink<NodeDatum, LinkDatum>(links)
        .id((d) => d.symbol)
        .distance(70),
    )
    .force("charge", d3.forceManyBody().strength(-120))
    .force("center", d3.forceCenter(width / 2, height / 2))
    .force("collide", d3.forceCollide<NodeDatum>((d) => radius(d.frequency) + 2))
    .on("tick", tick);

  nodeSel.call(
    d3
      .drag<SVGCircleElement, NodeDatum>()
      .on("start", (event, d) => {
        if (!event.active) sim.alphaTarget(0.3).restart();
        d.fx = d.x;
        d.fy = d.y;
      })
      .on("drag", (event, d) => {
        d.fx = event.x;
        d.fy = event.y;
      })
      .on("end", (event, d) => {
        if (!event.active) sim.alphaTarget(0);
        d.fx = null;
        d.fy = null;
      }),
  );

  return {
    applyHighlight(highlight: PathHighlight) {
      linkSel
        .attr("stroke", (d) => (highlight.links.has(d.key) ? "#e8710a" : "#9aa6b2"))
        .attr("stroke-width", (d) =>
          highlight.links.has(d.key) ? strokeWidth(d.count) + 1.5 : strokeWidth(d.count),
        )
        .attr("marker-end", (d) =>
          d.source === d.target
            ? null
            : highlight.links.has(d.key)
              ? "url(#arrow-hl)"
              : "url(#arrow)",
        );
      nodeSel.attr("fill", (d) =>
        highlight.nodes.has(d.symbol) ? "#e8710a" : "#4e79a7",
      );
    },
    applyFilter(symbol: number | null) {
      nodeSel
        .attr("stroke", (d) => (d.symbol === symbol ? "#222" : "#fff"))
        .attr("stroke-width", (d) => (d.symbol === symbol ? 2.5 : 1));
    },
  };
}

export function renderBrowser(
  el: HTMLElement,
  rows: BrowserRow[],
  selectedId: number | null,
  filterSymbol: number | null,
  onRowClick: (id: number) => void,
): void {
  clear(el);
  const note = document.createElement("div");
  note.className = "browser-note";
  note.textContent =
    filterSymbol === null
      ? `${rows.length} records`
      : `${rows.length} records whose chain contains symbol ${filterSymbol} ` +
        `(click the symbol again to clear)`;
  el.appendChild(note);
  const table = document.createElement("table");
  table.innerHTML =
    "<thead><tr><th>id</th><th>text</th><th>label</th><th>prediction</th>" +
    "<th>reward</th><th>gates</th><th>chain</th></tr></thead>";
  const body = document.createElement("tbody");
  for (const row of rows) {
    const tr = document.createElement("tr");
    if (row.id === selectedId) tr.className = "selected";
    const cells = [
      String(row.id),
      row.text.length > 52 ? row.text.slice(0, 52) + "..." : row.text,
      row.label,
      row.prediction,
      row.reward.toFixed(1),
      row.gates.map((g) => g.toFixed(4)).join(", "),
      row.chain.join(" -> "),
    ];
    for (const text of cells) {
      const td = document.createElement("td");
      td.textContent = text;
      tr.appendChild(td);
    }
    tr.addEventListener("click", () => onRowClick(row.id));
    body.appendChild(tr);
  }
  table.appendChild(body);
  el.appendChild(table);
}

export function renderSequence(
  el: HTMLElement,
  record: ExperienceRecord | null,
): void {
  clear(el);
  if (record === null) {
    el.textContent = "Select a record to see its thought chain.";
    return;
  }
  const strip = document.createElement("div");
  strip.className = "sequence-strip";
  const blocks = sequenceBlocks(record.quantized_indices);
  blocks.forEach((block, i) => {
    if (i > 0) {
      const arrow = document.createElement("span");
      arrow.className = "sequence-arrow";
      arrow.textContent = "->";
      strip.appendChild(arrow);
    }
    const div = document.createElement("div");
    div.className = "sequence-block";
    div.style.background = block.color;
    div.textContent = String(block.symbol);
    div.title = `layer ${i + 1}: symbol ${block.symbol}`;
    strip.appendChild(div);
  });
  el.appendChild(strip);
  const caption = document.createElement("div");
  caption.className = "sequence-caption";
  const confirmation =
    new Set(record.quantized_indices).size === 1 ? "confirmation" : "refinement";
  caption.textContent = `record ${record.id}: ${confirmation} chain`;
  el.appendChild(caption);
}

export function renderHeatmap(
  el: HTMLElement,
  record: ExperienceRecord | null,
  config: ModelConfig,
): void {
  clear(el);
  if (record === null) {
    el.textContent = "Select a record to see where its attention went.";
    return;
  }
  const state = heatmapState(record);
  if (!state.available) {
    const box = document.createElement("div");
    box.className = "status";
    box.textContent = state.reason;
    el.appendChild(box);
    return;
  }
  const tooltip = document.createElement("div");
  tooltip.className = "heatmap-tooltip";
  tooltip.style.display = "none";
  el.appendChild(tooltip);

  state.layers.forEach((cells, layer) => {
    const wrap = document.createElement("div");
    wrap.className = "heatmap-layer";
    const title = document.createElement("div");
    title.textContent = `layer ${layer + 1}`;
    wrap.appendChild(title);
    const size = 17;
    const svg = d3
      .select(wrap)
      .append("svg")
      .attr("width", state.grid * size)
      .attr("height", state.grid * size);
    svg
      .selectAll("rect")
      .data(cells)
      .join("rect")
      .attr("x", (d) => d.col * size)
      .attr("y", (d) => d.row * size)
      .attr("width", size - 1)
      .attr("height", size - 1)
      .attr("fill", (d) => d3.interpolateBlues(0.08 + 0.92 * d.intensity))
      .on("mousemove", (event: MouseEvent, d) => {
        tooltip.style.display = "block";
        tooltip.textContent = cellTooltip(
          record,
          config,
          layer,
          d.row,
          d.col,
          d.value,
          state.grid,
        );
        tooltip.style.left = `${event.offsetX + 16}px`;
        tooltip.style.top = `${event.offsetY + 16}px`;
      })
      .on("mouseleave", () => {
        tooltip.style.display = "none";
      });
    el.appendChild(wrap);
  });
}
