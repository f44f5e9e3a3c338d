/** Attention heatmap cell model and chunk tooltips.

The recorder pools each layer's attention into a grid of chunk means
(10x10 at the standard sequence length), so cell (i, j) is how much the
i-th text chunk attends to the j-th. Intensity is normalized per layer;
the tooltip decodes both chunks back to text.
*/

import { ExperienceRecord, ModelConfig } from "./types";

export interface HeatmapCell {
  row: number;
  col: number;
  value: number;
  intensity: number;
}

export type HeatmapState =
  | { available: true; grid: number; layers: HeatmapCell[][] }
  | { available: false; reason: string };

export function layerCells(matrix: readonly (readonly number[])[]): HeatmapCell[] {
  let max = 0;
  for (const row of matrix) {
    for (const v of row) {
      if (v > max) max = v;
    }
  }
  const cells: HeatmapCell[] = [];
  for (let row = 0; row < matrix.length; row++) {
    for (let col = 0; col < matrix[row].length; col++) {
      const value = matrix[row][col];
      cells.push({ row, col, value, intensity: max > 0 ? value / max : 0 });
    }
  }
  return cells;
}

export function heatmapState(
  record: Pick<ExperienceRecord, "attention_weights">,
): HeatmapState {
  const layers = record.attention_weights;
  if (layers.length === 0 || layers.some((m) => m.length === 0)) {
    return {
      available: false,
      reason:
        "No attention matrices in this record; it predates attention " +
        "logging. Re-run the recording pass to capture them.",
    };
  }
  return {
    available: true,
    grid: layers[0].length,
    layers: layers.map(layerCells),
  };
}

/** The text covered by one attention chunk.

Encoding pads or truncates every text to the configured sequence length,
and the recorder pools that fixed length into the grid, so chunk i covers
characters [i*len/grid, (i+1)*len/grid). Chunks beyond the text are pure
padding and come back empty.
*/
export function chunkText(
  text: string,
  sequenceLength: number,
  grid: number,
  index: number,
): string {
  const clipped = text.slice(0, sequenceLength);
  const size = Math.max(1, Math.floor(sequenceLength / grid));
  return clipped.slice(index * size, (index + 1) * size);
}

export function cellTooltip(
  record: Pick<ExperienceRecord, "text">,
  config: Pick<ModelConfig, "sequence_length">,
  layer: number,
  row: number,
  col: number,
  value: number,
  grid: number,
): string {
  const show = (s: string) => (s.length > 0 ? `"${s}"` : "(padding)");
  const query = chunkText(record.text, config.sequence_length, grid, row);
  const attended = chunkText(record.text, config.sequence_length, grid, col);
  return (
    `layer ${layer + 1}, query chunk ${row} ${show(query)} -> ` +
    `attended chunk ${col} ${show(attended)}, weight ${value.toFixed(3)}`
  );
}
