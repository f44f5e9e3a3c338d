/** Experience browser rows and the symbol filter driven by graph clicks. */

import { ExperienceRecord } from "./types";

export interface BrowserRow {
  id: number;
  text: string;
  label: string;
  prediction: string;
  reward: number;
  gates: number[];
  chain: number[];
}

/** Project records into rows; with a filter, keep exactly the records
whose chain contains the symbol. A null filter returns every row. */
export function browserRows(
  records: readonly ExperienceRecord[],
  filterSymbol: number | null = null,
): BrowserRow[] {
  const rows: BrowserRow[] = [];
  for (const r of records) {
    if (filterSymbol !== null && !r.quantized_indices.includes(filterSymbol)) {
      continue;
    }
    rows.push({
      id: r.id,
      text: r.text,
      label: r.label_text,
      prediction: r.prediction,
      reward: r.reward,
      gates: [...r.gating_scores],
      chain: [...r.quantized_indices],
    });
  }
  return rows;
}
