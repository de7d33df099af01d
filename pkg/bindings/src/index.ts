/**
 * TypeScript bindings for the relkd command-line tool.
 *
 * Every call shells out to `python -m relkd` and exchanges data through the
 * tool's text formats (embedding files with a `# N C` header, `key=value`
 * stdout blocks, truth files, CSV). Numbers cross the boundary as shortest
 * round-trip decimals in both directions, so a float64 survives
 * JS -> file -> Python -> stdout -> JS bit-exactly.
 *
 * The interpreter defaults to `python3`; override with the RELKD_PYTHON
 * environment variable.
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export type Variant = "s" | "c" | "sc";

export interface DistillOptions {
  lambdaS?: number;
  lambdaC?: number;
  curvature?: number;
  huberDelta?: number;
  reduction?: "mean" | "sum";
  includeDiagonal?: boolean;
  rkdNormalize?: boolean;
  hypPrescale?: number;
  /** Subset of "euc" | "cos" | "hyp"; defaults to all three. */
  manifolds?: string[];
}

export interface TotalLossResult {
  value: number;
  gradient: number[][];
  components: Record<string, number>;
}

export interface RecallResult {
  ar1: number;
  ar1pct: number;
  numEvaluated: number;
  numSkipped: number;
}

function pythonExe(): string {
  return process.env.RELKD_PYTHON ?? "python3";
}

function runCli(args: string[]): string {
  const proc = spawnSync(pythonExe(), ["-m", "relkd", ...args], {
    encoding: "utf8",
    maxBuffer: 64 * 1024 * 1024,
  });
  if (proc.error) {
    throw proc.error;
  }
  if (proc.status !== 0) {
    throw new Error(
      `relkd ${args[0]} exited with ${proc.status}: ${proc.stderr.trim()}`
    );
  }
  return proc.stdout;
}

function parseKeyValues(out: string): Record<string, string> {
  const kv: Record<string, string> = {};
  for (const line of out.split("\n")) {
    const idx = line.indexOf("=");
    if (idx > 0) {
      kv[line.slice(0, idx)] = line.slice(idx + 1);
    }
  }
  return kv;
}

function formatMatrix(rows: number[][]): string {
  const n = rows.length;
  if (n === 0 || rows[0].length === 0) {
    throw new Error("embedding batch must be a nonempty N x C matrix");
  }
  const c = rows[0].length;
  const lines = [`# ${n} ${c}`];
  for (const row of rows) {
    if (row.length !== c) {
      throw new Error("embedding batch rows must all have the same length");
    }
    lines.push(row.map((v) => String(v)).join(" "));
  }
  return lines.join("\n") + "\n";
}

function parseMatrix(text: string): number[][] {
  const lines = text.split("\n").filter((l) => l.trim() !== "");
  const head = lines[0].split(/\s+/);
  const n = Number(head[1]);
  const out: number[][] = [];
  for (let i = 1; i <= n; i++) {
    out.push(lines[i].trim().split(/\s+/).map(Number));
  }
  return out;
}

function optionFlags(opts: DistillOptions): string[] {
  const flags: string[] = [];
  if (opts.lambdaS !== undefined) flags.push("--lambda-s", String(opts.lambdaS));
  if (opts.lambdaC !== undefined) flags.push("--lambda-c", String(opts.lambdaC));
  if (opts.curvature !== undefined) flags.push("--curvature", String(opts.curvature));
  if (opts.huberDelta !== undefined) flags.push("--delta", String(opts.huberDelta));
  if (opts.reduction !== undefined) flags.push("--reduction", opts.reduction);
  if (opts.includeDiagonal !== undefined)
    flags.push("--include-diagonal", opts.includeDiagonal ? "true" : "false");
  if (opts.rkdNormalize) flags.push("--rkd-normalize");
  if (opts.hypPrescale !== undefined) flags.push("--hyp-prescale", String(opts.hypPrescale));
  if (opts.manifolds !== undefined) flags.push("--manifolds", opts.manifolds.join(","));
  return flags;
}

function withTempDir<T>(body: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "relkd-"));
  try {
    return body(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

/**
 * Combined distillation objective (task part taken as 0) and its exact
 * gradient with respect to the student batch.
 */
export function totalLoss(
  teacher: number[][],
  student: number[][],
  opts: DistillOptions = {},
  variant: Variant = "sc"
): TotalLossResult {
  return withTempDir((dir) => {
    const teacherPath = join(dir, "teacher.txt");
    const studentPath = join(dir, "student.txt");
    const gradPath = join(dir, "grad.txt");
    writeFileSync(teacherPath, formatMatrix(teacher));
    writeFileSync(studentPath, formatMatrix(student));
    const out = runCli([
      "loss",
      teacherPath,
      studentPath,
      "--variant",
      variant,
      "--grad-out",
      gradPath,
      ...optionFlags(opts),
    ]);
    const kv = parseKeyValues(out);
    const components: Record<string, number> = {};
    for (const [key, value] of Object.entries(kv)) {
      if (key !== "grad_out") {
        const num = Number(value);
        if (Number.isFinite(num)) components[key] = num;
      }
    }
    return {
      value: Number(kv[`total_${variant}`]),
      gradient: parseMatrix(readFileSync(gradPath, "utf8")),
      components,
    };
  });
}

export type ManifoldOp = "euclidean" | "cosine" | "hyperbolic" | "mobius_add" | "exp0";

export interface ManifoldArgs {
  y?: number[];
  curvature?: number;
}

/**
 * Single relation/geometry evaluation. Scalar ops return a number;
 * `mobius_add` and `exp0` return a vector.
 */
export function manifold(
  name: ManifoldOp,
  x: number[],
  { y, curvature = 1.0 }: ManifoldArgs = {}
): number | number[] {
  const args = ["manifold", name, "--x", x.join(","), "--curvature", String(curvature)];
  if (y !== undefined) {
    args.push("--y", y.join(","));
  }
  const kv = parseKeyValues(runCli(args));
  if (kv.value !== undefined) {
    return Number(kv.value);
  }
  return kv.result.split(",").map(Number);
}

/** Retrieval recall of query embeddings against a database. */
export function recallEval(
  queries: number[][],
  database: number[][],
  truth: number[][]
): RecallResult {
  return withTempDir((dir) => {
    const queryPath = join(dir, "queries.txt");
    const dbPath = join(dir, "database.txt");
    const truthPath = join(dir, "truth.txt");
    writeFileSync(queryPath, formatMatrix(queries));
    writeFileSync(dbPath, formatMatrix(database));
    const lines = truth.map((pos, q) => `${q}: ${pos.join(" ")}`).join("\n") + "\n";
    writeFileSync(truthPath, lines);
    const kv = parseKeyValues(runCli(["eval", queryPath, dbPath, truthPath]));
    return {
      ar1: Number(kv.ar_at_1),
      ar1pct: Number(kv.ar_at_1pct),
      numEvaluated: Number(kv.num_evaluated),
      numSkipped: Number(kv.num_skipped),
    };
  });
}

/** Version string of the underlying command-line tool. */
export function version(): string {
  return runCli(["version"]).trim();
}
