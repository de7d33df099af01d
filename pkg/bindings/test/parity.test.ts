/**
 * Parity suite: binding results vs direct CLI invocations on identical
 * inputs, plus fixtures with independently known values.
 *
 * The direct route below re-implements file serialization and output parsing
 * on its own (no imports from src/) so that agreement actually exercises the
 * binding's encoding fidelity.
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, test } from "vitest";

import { manifold, recallEval, totalLoss, version } from "../src/index.js";

const PYTHON = process.env.RELKD_PYTHON ?? "python3";

// --- independent CLI route (deliberately not using src/index.ts) -----------

function rawCli(args: string[]): string {
  const proc = spawnSync(PYTHON, ["-m", "relkd", ...args], { encoding: "utf8" });
  if (proc.status !== 0) {
    throw new Error(`cli failed: ${proc.stderr}`);
  }
  return proc.stdout;
}

function rawWrite(path: string, rows: number[][]): void {
  const body = rows.map((r) => r.map((v) => String(v)).join(" ")).join("\n");
  writeFileSync(path, `# ${rows.length} ${rows[0].length}\n${body}\n`);
}

function rawParse(out: string): Map<string, string> {
  const kv = new Map<string, string>();
  for (const line of out.trim().split("\n")) {
    const i = line.indexOf("=");
    if (i > 0) kv.set(line.slice(0, i), line.slice(i + 1));
  }
  return kv;
}

function rawGradient(path: string): number[][] {
  const lines = readFileSync(path, "utf8").split("\n").filter((l) => l.trim() !== "");
  return lines.slice(1).map((l) => l.trim().split(/\s+/).map(Number));
}

// --- deterministic case generator (SplitMix64, same update rule as the CLI)

const MASK = (1n << 64n) - 1n;

class SplitMix64 {
  private state: bigint;
  constructor(seed: number) {
    this.state = BigInt(seed) & MASK;
  }
  nextU64(): bigint {
    this.state = (this.state + 0x9e3779b97f4a7c15n) & MASK;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK;
    return z ^ (z >> 31n);
  }
  uniform(): number {
    return Number(this.nextU64() >> 11n) * 2 ** -53;
  }
  /** Box-Muller without caching; fine for test data generation. */
  normal(): number {
    const u1 = (Number(this.nextU64() >> 11n) + 1) * 2 ** -53;
    const u2 = this.uniform();
    return Math.sqrt(-2 * Math.log(u1)) * Math.cos(2 * Math.PI * u2);
  }
  matrix(n: number, c: number): number[][] {
    return Array.from({ length: n }, () =>
      Array.from({ length: c }, () => this.normal())
    );
  }
  int(bound: number): number {
    return Math.floor(this.uniform() * bound);
  }
}

const VARIANTS = ["s", "c", "sc"] as const;

describe("random-case parity with the CLI", () => {
  test(
    "100 seeded cases: loss within 1e-15 relative, gradient within 1e-12",
    () => {
      const rng = new SplitMix64(20240);
      for (let caseId = 0; caseId < 100; caseId++) {
        const n = 2 + rng.int(4);
        const c = 2 + rng.int(6);
        const teacher = rng.matrix(n, c);
        const student = rng.matrix(n, c);
        const variant = VARIANTS[rng.int(3)];
        const opts = {
          lambdaS: 0.5 + rng.uniform(),
          lambdaC: 0.5 + rng.uniform(),
          curvature: 0.5 + rng.uniform(),
          huberDelta: 0.5 + rng.uniform(),
          includeDiagonal: rng.uniform() < 0.5,
        };

        const viaBinding = totalLoss(teacher, student, opts, variant);

        const dir = mkdtempSync(join(tmpdir(), "relkd-parity-"));
        try {
          const t = join(dir, "t.txt");
          const s = join(dir, "s.txt");
          const g = join(dir, "g.txt");
          rawWrite(t, teacher);
          rawWrite(s, student);
          const out = rawCli([
            "loss", t, s,
            "--variant", variant,
            "--grad-out", g,
            "--lambda-s", String(opts.lambdaS),
            "--lambda-c", String(opts.lambdaC),
            "--curvature", String(opts.curvature),
            "--delta", String(opts.huberDelta),
            "--include-diagonal", opts.includeDiagonal ? "true" : "false",
          ]);
          const direct = Number(rawParse(out).get(`total_${variant}`));
          const directGrad = rawGradient(g);

          const scale = Math.max(Math.abs(direct), Math.abs(viaBinding.value), 1e-300);
          expect(Math.abs(viaBinding.value - direct) / scale).toBeLessThanOrEqual(1e-15);
          for (let i = 0; i < n; i++) {
            for (let j = 0; j < c; j++) {
              expect(
                Math.abs(viaBinding.gradient[i][j] - directGrad[i][j])
              ).toBeLessThanOrEqual(1e-12);
            }
          }
        } finally {
          rmSync(dir, { recursive: true, force: true });
        }
      }
    },
    { timeout: 300_000 }
  );

  test("repeated identical calls return identical results", () => {
    const rng = new SplitMix64(7);
    const teacher = rng.matrix(3, 4);
    const student = rng.matrix(3, 4);
    const a = totalLoss(teacher, student);
    const b = totalLoss(teacher, student);
    expect(a.value).toBe(b.value);
    expect(a.gradient).toEqual(b.gradient);
  });
});

describe("manifold fixtures", () => {
  test("hyperbolic distance from origin to (0.5, 0) at c=1 is ln 3", () => {
    const d = manifold("hyperbolic", [0, 0], { y: [0.5, 0], curvature: 1.0 }) as number;
    expect(Math.abs(d - Math.log(3))).toBeLessThanOrEqual(1e-12);
  });

  test("mobius addition with zero left operand is the identity", () => {
    const out = manifold("mobius_add", [0, 0], { y: [0.3, -0.2] }) as number[];
    expect(out[0]).toBeCloseTo(0.3, 12);
    expect(out[1]).toBeCloseTo(-0.2, 12);
  });

  test("cosine self-relation is 1", () => {
    expect(manifold("cosine", [1, 2, 3], { y: [1, 2, 3] }) as number).toBeCloseTo(1.0, 12);
  });

  test("euclidean 3-4-5", () => {
    expect(manifold("euclidean", [0, 0], { y: [3, 4] }) as number).toBe(5);
  });

  test("exp0 matches tanh radial form", () => {
    const out = manifold("exp0", [0.5, 0]) as number[];
    expect(out[0]).toBeCloseTo(Math.tanh(0.5), 12);
    expect(out[1]).toBe(0);
  });
});

describe("recall evaluation", () => {
  test("self retrieval gives AR@1 = 100", () => {
    const rng = new SplitMix64(99);
    const db = rng.matrix(6, 3);
    const truth = db.map((_, i) => [i]);
    const result = recallEval(db, db, truth);
    expect(result.ar1).toBe(100);
    expect(result.numEvaluated).toBe(6);
    expect(result.numSkipped).toBe(0);
  });
});

describe("error and version surfaces", () => {
  test("shape mismatch raises with the native message", () => {
    const rng = new SplitMix64(5);
    expect(() => totalLoss(rng.matrix(2, 3), rng.matrix(3, 3))).toThrowError(
      /batch-size mismatch/
    );
  });

  test("version matches the CLI output", () => {
    expect(version()).toBe(rawCli(["version"]).trim());
    expect(version()).toBe("0.1.0");
  });
});
