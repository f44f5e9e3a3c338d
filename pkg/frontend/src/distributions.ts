/** Macro distribution charts, computed straight from the experience db.

The chart data must agree with the exporter's own CSVs, so the binning
conventions here mirror the evaluation pipeline exactly: rewards are the
two exact values 0.0 and 1.0, gates are per-record means binned into 20
left-closed bins over [0, 1] with 1.0 falling in the last bin, and the
symbol stacks key on the first symbol of each record's chain.
*/

import { ExperienceRecord } from "./types";

export const GATE_BINS = 20;

export function meanGate(record: Pick<ExperienceRecord, "gating_scores">): number {
  const g = record.gating_scores;
  if (g.length === 0) return 0;
  return g.reduce((a, b) => a + b, 0) / g.length;
}

export interface RewardBars {
  correct: number;
  incorrect: number;
}

export function rewardBars(records: readonly ExperienceRecord[]): RewardBars {
  let correct = 0;
  let incorrect = 0;
  for (const r of records) {
    if (r.reward === 1) correct++;
    else incorrect++;
  }
  return { correct, incorrect };
}

export function gateHistogram(
  records: readonly ExperienceRecord[],
  bins: number = GATE_BINS,
): number[] {
  const counts = new Array<number>(bins).fill(0);
  for (const r of records) {
    const g = meanGate(r);
    const bin = Math.min(bins - 1, Math.max(0, Math.floor(g * bins)));
    counts[bin]++;
  }
  return counts;
}

export interface SymbolStack {
  symbol: number;
  counts: Record<string, number>;
  total: number;
}

/** Per first-chain-symbol label counts, largest symbols first. */
export function symbolCategoryStacks(
  records: readonly ExperienceRecord[],
): SymbolStack[] {
  const by = new Map<number, Record<string, number>>();
  for (const r of records) {
    if (r.quantized_indices.length === 0) continue;
    const symbol = r.quantized_indices[0];
    const counts = by.get(symbol) ?? {};
    counts[r.label_text] = (counts[r.label_text] ?? 0) + 1;
    by.set(symbol, counts);
  }
  const stacks: SymbolStack[] = [];
  for (const [symbol, counts] of by) {
    const total = Object.values(counts).reduce((a, b) => a + b, 0);
    stacks.push({ symbol, counts, total });
  }
  stacks.sort((a, b) => b.total - a.total || a.symbol - b.symbol);
  return stacks;
}
