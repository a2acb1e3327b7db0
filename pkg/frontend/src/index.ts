/**
 * Typed wrappers over the `restrat` command line, for interactive
 * data-science use from Node. Every operation shells out to the CLI and
 * exchanges data through its documented file formats, so results are
 * identical to running the toolkit directly; nothing is re-implemented on
 * this side.
 */

import { execFileSync } from "node:child_process";
import { existsSync, mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { asNumber, readCsvFile } from "./csv.js";

export type WeightMap = Map<string, Map<string, number>>;
export type FeatureMeans = Map<string, Map<string, number>>;

export interface CorrectionOptions {
  method?: "full" | "naive" | "raking";
  vars?: string[];
  minBin?: number;
  smoothK?: number;
  redistribute?: boolean;
  normalize?: boolean;
}

export interface PipelineOptions {
  folds?: number;
  seed?: number;
  lambda?: number;
  alpha?: number;
  ratio?: number;
}

export interface SynthOptions {
  seed?: number;
  communities?: number;
  population?: number;
  sample?: number;
  features?: number;
  shrinkage?: number;
  noiseSd?: number;
  selection?: string; // e.g. "income=-1.2,age=0.4"
}

export interface ComparisonRow {
  task: string;
  baselineR: number;
  correctedR: number;
  baselineR2: number;
  correctedR2: number;
  baselineRmse: number;
  correctedRmse: number;
  pValue: number;
  direction: string;
}

export interface PredictionRow {
  task: string;
  communityId: string;
  actual: number;
  baselinePred: number;
  correctedPred: number;
}

export interface EvaluateResult {
  comparisons: ComparisonRow[];
  predictions: PredictionRow[];
}

export interface GridRow {
  rank: number;
  config: string;
  meanR: number;
  error: string;
  taskR: Map<string, number>;
}

export interface EliminationRow {
  task: string;
  variables: string[];
  config: string;
  pearsonR: number;
  rSquared: number;
  rmse: number;
}

export interface Individual {
  individualId: string;
  communityId: string;
  age: number;
  genderScore: number;
  income: number;
  educationScore: number;
}

export interface ClientOptions {
  /** CLI invocation, e.g. ["restrat"] or ["python3", "-m", "restrat.cli"]. */
  command?: string[];
  /** Scratch directory for outputs when the caller does not name one. */
  scratchDir?: string;
}

function correctionArgs(options: CorrectionOptions): string[] {
  const args: string[] = [];
  if (options.method) args.push("--method", options.method);
  if (options.vars && options.vars.length) args.push("--vars", options.vars.join(","));
  if (options.minBin !== undefined) args.push("--min-bin", String(options.minBin));
  if (options.smoothK !== undefined) args.push("--smooth-k", String(options.smoothK));
  if (options.redistribute) args.push("--redistribute");
  if (options.normalize) args.push("--normalize");
  return args;
}

function pipelineArgs(options: PipelineOptions): string[] {
  const args: string[] = [];
  if (options.folds !== undefined) args.push("--folds", String(options.folds));
  if (options.seed !== undefined) args.push("--seed", String(options.seed));
  if (options.lambda !== undefined) args.push("--lambda", String(options.lambda));
  if (options.alpha !== undefined) args.push("--alpha", String(options.alpha));
  if (options.ratio !== undefined) args.push("--ratio", String(options.ratio));
  return args;
}

export class RestratClient {
  private readonly command: string[];
  private readonly scratchDir: string;

  constructor(options: ClientOptions = {}) {
    this.command =
      options.command ??
      (process.env.RESTRAT_CLI ? process.env.RESTRAT_CLI.split(" ") : ["restrat"]);
    this.scratchDir = options.scratchDir ?? mkdtempSync(join(tmpdir(), "restrat-client-"));
  }

  run(args: string[]): string {
    const [exe, ...prefix] = this.command;
    try {
      return execFileSync(exe, [...prefix, ...args], { encoding: "utf8" });
    } catch (err) {
      const e = err as { stderr?: string; message: string };
      throw new Error(`restrat ${args[0]} failed: ${e.stderr ?? e.message}`);
    }
  }

  private scratch(name: string): string {
    return join(this.scratchDir, name);
  }

  /** Generate a synthetic dataset (with oracles) into `outDir`. */
  synth(outDir: string, options: SynthOptions = {}): string {
    const args = ["synth", "--out", outDir];
    if (options.seed !== undefined) args.push("--seed", String(options.seed));
    if (options.communities !== undefined) args.push("--communities", String(options.communities));
    if (options.population !== undefined) args.push("--population", String(options.population));
    if (options.sample !== undefined) args.push("--sample", String(options.sample));
    if (options.features !== undefined) args.push("--features", String(options.features));
    if (options.shrinkage !== undefined) args.push("--shrinkage", String(options.shrinkage));
    if (options.noiseSd !== undefined) args.push("--noise-sd", String(options.noiseSd));
    if (options.selection !== undefined) args.push("--selection", options.selection);
    this.run(args);
    if (!existsSync(join(outDir, "users.csv"))) {
      throw new Error(`synth reported success but ${outDir}/users.csv is missing`);
    }
    return outDir;
  }

  /** Per-individual correction factors, keyed community -> individual. */
  assignWeights(
    dataDir: string,
    options: CorrectionOptions = {},
    outPath?: string,
  ): WeightMap {
    const out = outPath ?? this.scratch(`weights-${Date.now()}.csv`);
    this.run(["weights", "--data", dataDir, "--out", out, ...correctionArgs(options)]);
    return loadWeights(out);
  }

  /** Weighted community feature means; omit `weightsPath` for unit weights. */
  aggregateFeatures(
    dataDir: string,
    weightsPath: string | null,
    outPath?: string,
  ): FeatureMeans {
    const out = outPath ?? this.scratch(`agg-${Date.now()}.csv`);
    const args = ["aggregate", "--data", dataDir, "--out", out];
    if (weightsPath) args.push("--weights", weightsPath);
    this.run(args);
    return loadAggregated(out);
  }

  /** Cross-validated comparison of a correction against the baseline. */
  crossValidate(
    dataDir: string,
    correction: CorrectionOptions = {},
    pipeline: PipelineOptions = {},
    outDir?: string,
  ): EvaluateResult {
    const out = outDir ?? this.scratch(`eval-${Date.now()}`);
    this.run([
      "evaluate", "--data", dataDir, "--out", out,
      ...correctionArgs(correction), ...pipelineArgs(pipeline),
    ]);
    return {
      comparisons: loadComparisons(join(out, "comparison.csv")),
      predictions: loadPredictions(join(out, "predictions.csv")),
    };
  }

  /** Grid search plus backwards elimination; returns both traces. */
  gridSearch(
    dataDir: string,
    pipeline: PipelineOptions = {},
    outDir?: string,
    grid: { thresholds?: number[]; ks?: number[]; subsets?: string[][]; elimVars?: string[] } = {},
  ): { grid: GridRow[]; elimination: EliminationRow[] } {
    const out = outDir ?? this.scratch(`search-${Date.now()}`);
    const args = ["search", "--data", dataDir, "--out", out, ...pipelineArgs(pipeline)];
    if (grid.thresholds) args.push("--thresholds", grid.thresholds.join(","));
    if (grid.ks) args.push("--ks", grid.ks.join(","));
    if (grid.subsets) args.push("--subsets", grid.subsets.map((s) => s.join(",")).join("|"));
    if (grid.elimVars) args.push("--elim-vars", grid.elimVars.join(","));
    this.run(args);
    return {
      grid: loadGridTrace(join(out, "grid_trace.csv")),
      elimination: loadElimination(join(out, "elimination.csv")),
    };
  }
}

// ---------------------------------------------------------------------------
// Pure loaders for the file formats (usable without invoking the CLI).
// ---------------------------------------------------------------------------

export function loadUsers(dataDir: string): Individual[] {
  const table = readCsvFile(join(dataDir, "users.csv"), [
    "individual_id", "community_id", "age", "gender_score", "income", "education_score",
  ]);
  return table.rows.map((r) => ({
    individualId: r[0],
    communityId: r[1],
    age: asNumber(r[2], "age"),
    genderScore: asNumber(r[3], "gender_score"),
    income: asNumber(r[4], "income"),
    educationScore: asNumber(r[5], "education_score"),
  }));
}

export function loadFeatures(dataDir: string): Map<string, Map<string, number>> {
  const table = readCsvFile(join(dataDir, "features.csv"), [
    "individual_id", "feature_id", "rel_freq",
  ]);
  const out: Map<string, Map<string, number>> = new Map();
  for (const [iid, fid, freq] of table.rows) {
    let vec = out.get(iid);
    if (!vec) {
      vec = new Map();
      out.set(iid, vec);
    }
    vec.set(fid, asNumber(freq, "rel_freq"));
  }
  return out;
}

export function loadWeights(path: string): WeightMap {
  const table = readCsvFile(path, ["community_id", "individual_id", "psi"]);
  const out: WeightMap = new Map();
  for (const [cid, iid, psi] of table.rows) {
    let community = out.get(cid);
    if (!community) {
      community = new Map();
      out.set(cid, community);
    }
    community.set(iid, asNumber(psi, "psi"));
  }
  return out;
}

export function loadAggregated(path: string): FeatureMeans {
  const table = readCsvFile(path, ["community_id", "feature_id", "mean"]);
  const out: FeatureMeans = new Map();
  for (const [cid, fid, mean] of table.rows) {
    let community = out.get(cid);
    if (!community) {
      community = new Map();
      out.set(cid, community);
    }
    community.set(fid, asNumber(mean, "mean"));
  }
  return out;
}

export function loadComparisons(path: string): ComparisonRow[] {
  const table = readCsvFile(path, [
    "task", "baseline_r", "corrected_r", "baseline_r2", "corrected_r2",
    "baseline_rmse", "corrected_rmse", "p_value", "direction",
  ]);
  return table.rows.map((r) => ({
    task: r[0],
    baselineR: asNumber(r[1], "baseline_r"),
    correctedR: asNumber(r[2], "corrected_r"),
    baselineR2: asNumber(r[3], "baseline_r2"),
    correctedR2: asNumber(r[4], "corrected_r2"),
    baselineRmse: asNumber(r[5], "baseline_rmse"),
    correctedRmse: asNumber(r[6], "corrected_rmse"),
    pValue: asNumber(r[7], "p_value"),
    direction: r[8],
  }));
}

export function loadPredictions(path: string): PredictionRow[] {
  const table = readCsvFile(path, [
    "task", "community_id", "actual", "baseline_pred", "corrected_pred",
  ]);
  return table.rows.map((r) => ({
    task: r[0],
    communityId: r[1],
    actual: asNumber(r[2], "actual"),
    baselinePred: asNumber(r[3], "baseline_pred"),
    correctedPred: asNumber(r[4], "corrected_pred"),
  }));
}

export function loadGridTrace(path: string): GridRow[] {
  const table = readCsvFile(path);
  const taskCols = table.header.slice(4);
  return table.rows.map((r) => ({
    rank: asNumber(r[0], "rank"),
    config: r[1],
    meanR: Number(r[2]),
    error: r[3],
    taskR: new Map(taskCols.map((c, i) => [c.replace(/^r_/, ""), Number(r[4 + i])])),
  }));
}

export function loadElimination(path: string): EliminationRow[] {
  const table = readCsvFile(path, [
    "task", "variables", "config", "pearson_r", "r_squared", "rmse",
  ]);
  return table.rows.map((r) => ({
    task: r[0],
    variables: r[1] === "none" ? [] : r[1].split("+"),
    config: r[2],
    pearsonR: asNumber(r[3], "pearson_r"),
    rSquared: asNumber(r[4], "r_squared"),
    rmse: asNumber(r[5], "rmse"),
  }));
}
