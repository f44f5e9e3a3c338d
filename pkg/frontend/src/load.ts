/** Bundle loading: fetch the exported directory, validate, report failures.

Loading never throws on bad input. Every path returns a BundleResult so the
page can render an explicit error panel rather than go blank.
*/

import Papa from "papaparse";
import type { ZodError, ZodType } from "zod";
import {
  DashboardBundle,
  EvalResult,
  EvalResultSchema,
  ExperienceDbSchema,
  GateBinRow,
  ModelConfigSchema,
  PurityReportSchema,
  RewardRow,
  SymbolLabelRow,
} from "./types";

export type BundleResult =
  | { ok: true; bundle: DashboardBundle }
  | { ok: false; error: string };

export const DB_FILE = "experience_db_generated.json";
export const CONFIG_FILE = "model_config.json";
export const PURITY_FILE = "purity_report.json";
export const EVAL_FILE = "eval_result.json";
export const REWARD_CSV = "reward_distribution.csv";
export const GATE_CSV = "gate_distribution.csv";
export const SYMBOL_CSV = "symbol_label_distribution.csv";

export const REQUIRED_FILES = [DB_FILE, CONFIG_FILE, PURITY_FILE] as const;
export const OPTIONAL_FILES = [
  EVAL_FILE,
  REWARD_CSV,
  GATE_CSV,
  SYMBOL_CSV,
] as const;

/** Raw file contents keyed by artifact name. */
export type RawFiles = Record<string, string>;

function issueSummary(error: ZodError): string {
  return error.issues
    .slice(0, 3)
    .map((i) => `${i.path.join(".") || "(root)"}: ${i.message}`)
    .join("; ");
}

function parseJsonFile<T>(
  files: RawFiles,
  name: string,
  schema: ZodType<T>,
): { value: T } | { error: string } {
  const text = files[name];
  if (text === undefined) {
    return { error: `missing required file ${name}` };
  }
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (e) {
    return { error: `${name}: invalid JSON (${(e as Error).message})` };
  }
  const parsed = schema.safeParse(raw);
  if (!parsed.success) {
    return { error: `${name}: schema mismatch (${issueSummary(parsed.error)})` };
  }
  return { value: parsed.data };
}

function parseCsvFile<T>(
  files: RawFiles,
  name: string,
  toRow: (raw: Record<string, unknown>) => T | null,
): { value: T[] | null } | { error: string } {
  const text = files[name];
  if (text === undefined) {
    return { value: null };
  }
  const result = Papa.parse<Record<string, unknown>>(text, {
    header: true,
    dynamicTyping: true,
    skipEmptyLines: true,
  });
  if (result.errors.length > 0) {
    const first = result.errors[0];
    return { error: `${name}: malformed CSV (${first.message})` };
  }
  const rows: T[] = [];
  for (let i = 0; i < result.data.length; i++) {
    const row = toRow(result.data[i]);
    if (row === null) {
      return { error: `${name}: malformed CSV (row ${i + 1})` };
    }
    rows.push(row);
  }
  return { value: rows };
}

function asNumber(v: unknown): number | null {
  return typeof v === "number" && Number.isFinite(v) ? v : null;
}

function rewardRow(raw: Record<string, unknown>): RewardRow | null {
  const reward = asNumber(raw["reward"]);
  const count = asNumber(raw["count"]);
  return reward === null || count === null ? null : { reward, count };
}

function gateRow(raw: Record<string, unknown>): GateBinRow | null {
  const bin_start = asNumber(raw["bin_start"]);
  const bin_end = asNumber(raw["bin_end"]);
  const count = asNumber(raw["count"]);
  return bin_start === null || bin_end === null || count === null
    ? null
    : { bin_start, bin_end, count };
}

function symbolLabelRow(raw: Record<string, unknown>): SymbolLabelRow | null {
  const symbol = asNumber(raw["symbol"]);
  const count = asNumber(raw["count"]);
  const label = raw["label"];
  return symbol === null || count === null || typeof label !== "string"
    ? null
    : { symbol, label, count };
}

/** Assemble and validate a bundle from already-read file contents. */
export function parseBundle(files: RawFiles): BundleResult {
  const db = parseJsonFile(files, DB_FILE, ExperienceDbSchema);
  if ("error" in db) return { ok: false, error: db.error };
  const config = parseJsonFile(files, CONFIG_FILE, ModelConfigSchema);
  if ("error" in config) return { ok: false, error: config.error };
  const purity = parseJsonFile(files, PURITY_FILE, PurityReportSchema);
  if ("error" in purity) return { ok: false, error: purity.error };

  let evalResult: EvalResult | null = null;
  if (files[EVAL_FILE] !== undefined) {
    const parsed = parseJsonFile(files, EVAL_FILE, EvalResultSchema);
    if ("error" in parsed) return { ok: false, error: parsed.error };
    evalResult = parsed.value;
  }

  const reward = parseCsvFile(files, REWARD_CSV, rewardRow);
  if ("error" in reward) return { ok: false, error: reward.error };
  const gate = parseCsvFile(files, GATE_CSV, gateRow);
  if ("error" in gate) return { ok: false, error: gate.error };
  const symbolLabel = parseCsvFile(files, SYMBOL_CSV, symbolLabelRow);
  if ("error" in symbolLabel) return { ok: false, error: symbolLabel.error };

  return {
    ok: true,
    bundle: {
      records: db.value,
      config: config.value,
      purity: purity.value,
      evalResult,
      csv: {
        reward: reward.value,
        gate: gate.value,
        symbolLabel: symbolLabel.value,
      },
    },
  };
}

async function fetchText(
  fetchFn: typeof fetch,
  url: string,
): Promise<string | null> {
  let response: Response;
  try {
    response = await fetchFn(url);
  } catch {
    return null;
  }
  if (!response.ok) return null;
  return response.text();
}

/** Fetch an export-dashboard directory over HTTP and validate it. */
export async function fetchBundle(
  baseUrl: string,
  fetchFn: typeof fetch = fetch,
): Promise<BundleResult> {
  const base = baseUrl.endsWith("/") ? baseUrl : baseUrl + "/";

  // index.json names what the exporter actually wrote; without it the
  // loader probes the standard artifact names directly.
  let names: string[] = [...REQUIRED_FILES, ...OPTIONAL_FILES];
  const indexText = await fetchText(fetchFn, base + "index.json");
  if (indexText !== null) {
    try {
      const parsed = JSON.parse(indexText) as { files?: unknown };
      if (Array.isArray(parsed.files)) {
        names = parsed.files.filter((f): f is string => typeof f === "string");
      }
    } catch {
      return { ok: false, error: "index.json: invalid JSON" };
    }
  }

  const files: RawFiles = {};
  for (const name of names) {
    const text = await fetchText(fetchFn, base + name);
    if (text !== null) {
      files[name] = text;
    }
  }
  for (const name of REQUIRED_FILES) {
    if (files[name] === undefined) {
      return {
        ok: false,
        error: `missing required file ${name} under ${base}`,
      };
    }
  }
  return parseBundle(files);
}
