/** Shared test fixtures: record factory and a tiny seeded PRNG. */

import { ExperienceRecord } from "../src/types";

export function mkRecord(
  id: number,
  chain: number[],
  gates: number[],
  label = "World",
  prediction = "World",
  attention: number[][][] = [],
): ExperienceRecord {
  return {
    id,
    text: `record ${id} text`,
    label_text: label,
    quantized_indices: chain,
    gating_scores: gates,
    attention_weights: attention,
    prediction,
    reward: prediction === label ? 1.0 : 0.0,
  };
}

/** mulberry32: deterministic 32-bit PRNG for fuzz oracles. */
export function rng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randInt(next: () => number, bound: number): number {
  return Math.floor(next() * bound);
}
