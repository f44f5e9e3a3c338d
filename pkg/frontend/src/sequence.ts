/** Thought chain strip: one colored block per layer.

Equal symbols read as confirmation, so they must share a color; distinct
neighbors read as refinement, so they must not. Colors come from a stable
hash of the symbol id into a 16-color palette. With more symbols than
colors two distinct ids can collide, so a strip nudges the later symbol
one palette slot along; the printed id stays the ground truth.
*/

import { symbolHash } from "./graph";

export const PALETTE: readonly string[] = [
  "#4e79a7",
  "#f28e2b",
  "#e15759",
  "#76b7b2",
  "#59a14f",
  "#edc948",
  "#b07aa1",
  "#ff9da7",
  "#9c755f",
  "#bab0ac",
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#8c564b",
  "#17becf",
];

export function colorIndexForSymbol(symbol: number): number {
  // Top four bits of the 32-bit product spread better than the low bits.
  return symbolHash(symbol) >>> 28;
}

export interface SequenceBlock {
  symbol: number;
  colorIndex: number;
  color: string;
}

export function sequenceBlocks(chain: readonly number[]): SequenceBlock[] {
  // One color per symbol within the strip, fixed at first appearance.
  const assigned = new Map<number, number>();
  const blocks: SequenceBlock[] = [];
  for (const symbol of chain) {
    if (!assigned.has(symbol)) {
      let index = colorIndexForSymbol(symbol);
      const prev = blocks.length > 0 ? blocks[blocks.length - 1] : null;
      while (prev !== null && prev.symbol !== symbol && index === prev.colorIndex) {
        index = (index + 1) % PALETTE.length;
      }
      assigned.set(symbol, index);
    }
    const colorIndex = assigned.get(symbol)!;
    blocks.push({ symbol, colorIndex, color: PALETTE[colorIndex] });
  }
  return blocks;
}
