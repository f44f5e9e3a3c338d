/** Symbol association network built from consecutive chain symbols.

Node frequency counts every chain slot, so frequencies sum to
records x layers. A link (a, b) counts records whose chain contains a
immediately followed by b; a pair repeated inside one chain still counts
that record once. Self-loops are ordinary links.
*/

import { ExperienceRecord } from "./types";

export interface GraphNode {
  symbol: number;
  frequency: number;
}

export interface GraphLink {
  from: number;
  to: number;
  count: number;
}

export interface SymbolGraph {
  nodes: GraphNode[];
  links: GraphLink[];
}

export function linkKey(from: number, to: number): string {
  return `${from}->${to}`;
}

type Chain = Pick<ExperienceRecord, "quantized_indices">;

export function buildSymbolGraph(records: readonly Chain[]): SymbolGraph {
  const freq = new Map<number, number>();
  const links = new Map<string, GraphLink>();
  for (const r of records) {
    const chain = r.quantized_indices;
    for (const s of chain) {
      freq.set(s, (freq.get(s) ?? 0) + 1);
    }
    const seen = new Set<string>();
    for (let i = 0; i + 1 < chain.length; i++) {
      const key = linkKey(chain[i], chain[i + 1]);
      if (seen.has(key)) continue;
      seen.add(key);
      const link = links.get(key);
      if (link) link.count++;
      else links.set(key, { from: chain[i], to: chain[i + 1], count: 1 });
    }
  }
  const nodes = [...freq.entries()]
    .map(([symbol, frequency]) => ({ symbol, frequency }))
    .sort((a, b) => a.symbol - b.symbol);
  const sortedLinks = [...links.values()].sort(
    (a, b) => a.from - b.from || a.to - b.to,
  );
  return { nodes, links: sortedLinks };
}

export interface PathHighlight {
  nodes: Set<number>;
  links: Set<string>;
}

/** Exactly the selected record's chain nodes and consecutive links.

Deselecting (null) highlights nothing; recomputing per selection keeps
highlighting exclusive to the latest record.
*/
export function highlightPath(record: Chain | null): PathHighlight {
  const nodes = new Set<number>();
  const links = new Set<string>();
  if (record === null) return { nodes, links };
  const chain = record.quantized_indices;
  for (const s of chain) nodes.add(s);
  for (let i = 0; i + 1 < chain.length; i++) {
    links.add(linkKey(chain[i], chain[i + 1]));
  }
  return { nodes, links };
}

/** Unsigned 32-bit multiplicative hash of a symbol id. */
export function symbolHash(symbol: number): number {
  return Math.imul(symbol + 1, 2654435761) >>> 0;
}

/** Deterministic starting position for the force layout.

Seeding by symbol id makes reloads of the same bundle reproduce the same
settled layout.
*/
export function initialPosition(
  symbol: number,
  width: number,
  height: number,
): { x: number; y: number } {
  const h = symbolHash(symbol);
  const angle = (2 * Math.PI * h) / 0x100000000;
  const radius = 0.15 + 0.35 * (((h >>> 7) % 1000) / 1000);
  return {
    x: width / 2 + width * radius * Math.cos(angle),
    y: height / 2 + height * radius * Math.sin(angle),
  };
}
