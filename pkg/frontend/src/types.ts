/** Schemas for the exported artifact bundle the dashboard consumes.

Every file is validated on load; a mismatch surfaces as an explicit error
panel instead of a half-rendered page.
*/

import { z } from "zod";

export const ExperienceRecordSchema = z.object({
  id: z.number().int(),
  text: z.string(),
  label_text: z.string(),
  quantized_indices: z.array(z.number().int()),
  gating_scores: z.array(z.number()),
  // Older databases may predate attention logging; the heatmap panel
  // explains the gap instead of failing the whole bundle.
  attention_weights: z.array(z.array(z.array(z.number()))).default([]),
  prediction: z.string(),
  reward: z.number(),
});
export type ExperienceRecord = z.infer<typeof ExperienceRecordSchema>;

export const ExperienceDbSchema = z.array(ExperienceRecordSchema);

export const ModelConfigSchema = z.object({
  char_to_id: z.record(z.string(), z.number().int()),
  pad_id: z.number().int(),
  unk_id: z.number().int(),
  sequence_length: z.number().int().positive(),
  label_names: z.array(z.string()),
});
export type ModelConfig = z.infer<typeof ModelConfigSchema>;

export const PurityReportSchema = z.object({
  num_symbols: z.number().int(),
  labels: z.array(z.string()),
  symbols: z.record(
    z.string(),
    z.object({
      total: z.number().int(),
      tendencies: z.array(
        z.object({
          label: z.string(),
          count: z.number().int(),
          percent: z.string(),
        }),
      ),
    }),
  ),
});
export type PurityReport = z.infer<typeof PurityReportSchema>;

export const EvalResultSchema = z.object({
  accuracy: z.number(),
  gated_ratio: z.number(),
  intuitive_accuracy: z.number().nullable(),
  theta: z.number(),
  n: z.number().int(),
  reward_histogram: z.record(z.string(), z.number().int()),
  gate_histogram: z.array(z.number().int()),
  symbol_label_distribution: z.record(
    z.string(),
    z.record(z.string(), z.number().int()),
  ),
});
export type EvalResult = z.infer<typeof EvalResultSchema>;

export interface RewardRow {
  reward: number;
  count: number;
}

export interface GateBinRow {
  bin_start: number;
  bin_end: number;
  count: number;
}

export interface SymbolLabelRow {
  symbol: number;
  label: string;
  count: number;
}

/** Everything one export-dashboard directory provides. */
export interface DashboardBundle {
  records: ExperienceRecord[];
  config: ModelConfig;
  purity: PurityReport;
  /** Present only when the exporter had an evaluation to copy. */
  evalResult: EvalResult | null;
  csv: {
    reward: RewardRow[] | null;
    gate: GateBinRow[] | null;
    symbolLabel: SymbolLabelRow[] | null;
  };
}
