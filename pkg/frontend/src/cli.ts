#!/usr/bin/env node
/** CLI: render --input <file> --kind <kind> --out <image> [--estimators a,b]
 *
 * Exit codes: 0 success, 2 bad arguments or unreadable/malformed input.
 */

import * as fs from "fs";
import { FigureKind, FigureSpec, render } from "./figures";

const KINDS: FigureKind[] = ["risk_sweep", "coverage_sweep", "forest"];

interface Args {
  input: string;
  kind: FigureKind;
  out: string;
  estimators?: string[];
}

export function parseArgs(argv: string[]): Args {
  if (argv[0] !== "render") {
    throw new Error("usage: render --input <file> --kind <kind> --out <image>");
  }
  const flags = new Map<string, string>();
  for (let i = 1; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key.startsWith("--") || value === undefined) {
      throw new Error(`malformed flag near ${key}`);
    }
    flags.set(key.slice(2), value);
  }
  const input = flags.get("input");
  const kind = flags.get("kind") as FigureKind | undefined;
  const out = flags.get("out");
  if (!input || !kind || !out) {
    throw new Error("--input, --kind, and --out are required");
  }
  if (!KINDS.includes(kind)) {
    throw new Error(`--kind must be one of ${KINDS.join(", ")}`);
  }
  const estimators = flags.get("estimators");
  return {
    input,
    kind,
    out,
    estimators: estimators ? estimators.split(",").map((s) => s.trim()) : undefined,
  };
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 2;
  }
  let content: string;
  try {
    content = fs.readFileSync(args.input, "utf-8");
  } catch {
    process.stderr.write(`error: cannot read ${args.input}\n`);
    return 2;
  }
  try {
    const spec: FigureSpec = { kind: args.kind, estimators: args.estimators };
    fs.writeFileSync(args.out, render(content, spec), "utf-8");
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 2;
  }
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
