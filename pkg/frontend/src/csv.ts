/** Parsers for the two result-file schemas the estimation pipeline writes. */

export const SWEEP_HEADER = ["e", "estimator", "metric", "subgroup", "value"];
export const ESTIMATES_HEADER = [
  "subgroup",
  "estimator",
  "estimate",
  "variance",
  "ci_low",
  "ci_high",
  "n_g",
];

export interface SweepRow {
  e: number;
  estimator: string;
  metric: string;
  subgroup: string;
  value: number;
}

export interface EstimateRow {
  subgroup: string;
  estimator: string;
  estimate: number;
  ciLow: number;
  ciHigh: number;
  nG: number;
}

function splitLines(content: string): string[][] {
  const rows = content
    .split(/\r?\n/)
    .filter((line) => line.trim().length > 0)
    .map((line) => line.split(",").map((c) => c.trim()));
  if (rows.length === 0) throw new Error("empty input");
  return rows;
}

function checkHeader(actual: string[], expected: string[]): void {
  for (const column of expected) {
    if (!actual.includes(column)) throw new Error(`unknown column layout: missing ${column}`);
  }
  for (const column of actual) {
    if (!expected.includes(column)) throw new Error(`unknown column ${column}`);
  }
}

function num(token: string, what: string): number {
  const value = Number(token);
  if (!Number.isFinite(value)) throw new Error(`non-numeric ${what}: ${token}`);
  return value;
}

export function parseSweep(content: string): SweepRow[] {
  const rows = splitLines(content);
  checkHeader(rows[0], SWEEP_HEADER);
  const out: SweepRow[] = [];
  for (const row of rows.slice(1)) {
    if (row.length !== 5) throw new Error(`malformed sweep row: ${row.join(",")}`);
    out.push({
      e: num(row[0], "e"),
      estimator: row[1],
      metric: row[2],
      subgroup: row[3],
      value: num(row[4], "value"),
    });
  }
  if (out.length === 0) throw new Error("empty input");
  return out;
}

export function parseEstimates(content: string): EstimateRow[] {
  const rows = splitLines(content);
  checkHeader(rows[0], ESTIMATES_HEADER);
  const out: EstimateRow[] = [];
  for (const row of rows.slice(1)) {
    if (row.length !== 7) throw new Error(`malformed estimates row: ${row.join(",")}`);
    out.push({
      subgroup: row[0],
      estimator: row[1],
      estimate: num(row[2], "estimate"),
      ciLow: num(row[4], "ci_low"),
      ciHigh: num(row[5], "ci_high"),
      nG: num(row[6], "n_g"),
    });
  }
  if (out.length === 0) throw new Error("empty input");
  return out;
}
