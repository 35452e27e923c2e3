/** The three figure kinds rendered from result files:
 *
 * - risk_sweep: relative target risk vs incompatibility index, one line per
 *   estimator, solid reference line at relative risk 1;
 * - coverage_sweep: Wald-interval coverage vs incompatibility index (mean
 *   across subgroups per estimator), dashed line at the nominal 0.95 level;
 * - forest: one confidence bar per subgroup-estimator pair with a zero
 *   reference line.
 */

import {
  EstimateRow,
  SweepRow,
  parseEstimates,
  parseSweep,
} from "./csv";
import {
  circle,
  colorFor,
  fmt,
  line,
  linearScale,
  polyline,
  svgDocument,
  text,
} from "./svg";

export type FigureKind = "risk_sweep" | "coverage_sweep" | "forest";

export interface FigureSpec {
  kind: FigureKind;
  estimators?: string[]; // optional filter; default all present
}

const WIDTH = 720;
const HEIGHT = 480;
const MARGIN = { left: 64, right: 170, top: 36, bottom: 52 };
const NOMINAL_COVERAGE = 0.95;

function uniqueInOrder(values: string[]): string[] {
  return values.filter((v, i) => values.indexOf(v) === i);
}

function legend(estimators: string[], x: number): string[] {
  const parts: string[] = [];
  estimators.forEach((name, i) => {
    const y = MARGIN.top + 14 + 18 * i;
    parts.push(line(x, y - 4, x + 22, y - 4, colorFor(name, i), "legend-line"));
    parts.push(text(x + 28, y, name));
  });
  return parts;
}

function axes(
  xScale: ReturnType<typeof linearScale>,
  yScale: ReturnType<typeof linearScale>,
  xLabel: string,
  yLabel: string
): string[] {
  const parts: string[] = [];
  const x0 = MARGIN.left;
  const x1 = WIDTH - MARGIN.right;
  const y0 = HEIGHT - MARGIN.bottom;
  const y1 = MARGIN.top;
  parts.push(line(x0, y0, x1, y0, "#222222", "axis"));
  parts.push(line(x0, y0, x0, y1, "#222222", "axis"));
  for (const tick of xScale.ticks) {
    const x = xScale(tick);
    parts.push(line(x, y0, x, y0 + 4, "#222222", "tick"));
    parts.push(text(x, y0 + 18, tick.toFixed(3), "middle", 10));
  }
  for (const tick of yScale.ticks) {
    const y = yScale(tick);
    parts.push(line(x0 - 4, y, x0, y, "#222222", "tick"));
    parts.push(text(x0 - 8, y + 3, tick.toFixed(2), "end", 10));
  }
  parts.push(text((x0 + x1) / 2, HEIGHT - 12, xLabel, "middle", 12));
  parts.push(text(14, MARGIN.top - 14, yLabel, "start", 12));
  return parts;
}

interface SeriesPoint {
  e: number;
  value: number;
}

function sweepSeries(
  rows: SweepRow[],
  metric: string,
  estimators: string[]
): Map<string, SeriesPoint[]> {
  const series = new Map<string, SeriesPoint[]>();
  for (const name of estimators) series.set(name, []);
  const grouped = new Map<string, Map<number, number[]>>();
  for (const row of rows) {
    if (row.metric !== metric) continue;
    if (!estimators.includes(row.estimator)) continue;
    let byE = grouped.get(row.estimator);
    if (!byE) grouped.set(row.estimator, (byE = new Map()));
    const bucket = byE.get(row.e) ?? [];
    bucket.push(row.value);
    byE.set(row.e, bucket);
  }
  for (const [name, byE] of grouped) {
    const points = [...byE.entries()]
      .map(([e, values]) => ({
        e,
        value: values.reduce((a, b) => a + b, 0) / values.length,
      }))
      .sort((a, b) => a.e - b.e);
    series.set(name, points);
  }
  return series;
}

function renderSweep(
  rows: SweepRow[],
  metric: string,
  spec: FigureSpec
): string {
  const present = uniqueInOrder(
    rows.filter((r) => r.metric === metric).map((r) => r.estimator)
  );
  const estimators = spec.estimators
    ? present.filter((name) => spec.estimators!.includes(name))
    : present;
  if (estimators.length === 0) throw new Error(`no ${metric} rows to plot`);
  const series = sweepSeries(rows, metric, estimators);

  const es = rows.map((r) => r.e);
  const values = [...series.values()].flat().map((p) => p.value);
  const isRisk = metric === "relative_risk";
  const reference = isRisk ? 1.0 : NOMINAL_COVERAGE;
  const lo = Math.min(...values, reference) - 0.02;
  const hi = Math.max(...values, reference) + 0.02;
  const eMin = Math.min(...es);
  const eMax = Math.max(...es);
  const xScale = linearScale(
    eMin,
    eMax === eMin ? eMin + 0.01 : eMax,
    MARGIN.left,
    WIDTH - MARGIN.right
  );
  const yScale = linearScale(hi, lo, MARGIN.top, HEIGHT - MARGIN.bottom);

  const body: string[] = [];
  body.push(
    ...axes(
      xScale,
      yScale,
      "incompatibility index e",
      isRisk ? "relative target risk" : "coverage"
    )
  );
  if (isRisk) {
    body.push(
      line(
        MARGIN.left,
        yScale(1.0),
        WIDTH - MARGIN.right,
        yScale(1.0),
        "#555555",
        "unit-risk"
      )
    );
  } else {
    body.push(
      line(
        MARGIN.left,
        yScale(NOMINAL_COVERAGE),
        WIDTH - MARGIN.right,
        yScale(NOMINAL_COVERAGE),
        "#555555",
        "nominal-coverage",
        "6 4"
      )
    );
  }
  estimators.forEach((name, i) => {
    const points = series.get(name)!;
    if (points.length === 1) {
      body.push(
        circle(xScale(points[0].e), yScale(points[0].value), 3, colorFor(name, i))
      );
    } else if (points.length > 1) {
      body.push(
        polyline(
          points.map((p) => [xScale(p.e), yScale(p.value)]),
          colorFor(name, i),
          `series-${name}`
        )
      );
    }
  });
  body.push(...legend(estimators, WIDTH - MARGIN.right + 14));
  return svgDocument(WIDTH, HEIGHT, body);
}

function renderForest(rows: EstimateRow[], spec: FigureSpec): string {
  const present = uniqueInOrder(rows.map((r) => r.estimator));
  const estimators = spec.estimators
    ? present.filter((name) => spec.estimators!.includes(name))
    : present;
  const kept = rows.filter((r) => estimators.includes(r.estimator));
  if (kept.length === 0) throw new Error("no estimate rows to plot");
  const subgroups = uniqueInOrder(kept.map((r) => r.subgroup));

  const rowHeight = 20;
  const height =
    MARGIN.top + MARGIN.bottom + rowHeight * (kept.length + subgroups.length);
  const left = 230;
  const xs = kept.flatMap((r) => [r.ciLow, r.ciHigh, 0]);
  const xScale = linearScale(
    Math.min(...xs) - 0.5,
    Math.max(...xs) + 0.5,
    left,
    WIDTH - 40
  );

  const body: string[] = [];
  body.push(
    line(
      xScale(0),
      MARGIN.top - 6,
      xScale(0),
      height - MARGIN.bottom + 6,
      "#222222",
      "zero-reference"
    )
  );
  let y = MARGIN.top;
  for (const subgroup of subgroups) {
    body.push(text(16, y + 12, subgroup, "start", 12));
    y += rowHeight;
    for (const row of kept.filter((r) => r.subgroup === subgroup)) {
      const i = estimators.indexOf(row.estimator);
      const color = colorFor(row.estimator, i);
      const cy = y + 8;
      body.push(text(36, y + 12, `${row.estimator} (n=${row.nG})`, "start", 10));
      body.push(
        line(xScale(row.ciLow), cy, xScale(row.ciHigh), cy, color, "ci-bar")
      );
      body.push(line(xScale(row.ciLow), cy - 4, xScale(row.ciLow), cy + 4, color, "ci-cap"));
      body.push(
        line(xScale(row.ciHigh), cy - 4, xScale(row.ciHigh), cy + 4, color, "ci-cap")
      );
      body.push(circle(xScale(row.estimate), cy, 3, color));
      y += rowHeight;
    }
  }
  const axisY = height - MARGIN.bottom + 14;
  for (const tick of xScale.ticks) {
    body.push(line(xScale(tick), axisY - 6, xScale(tick), axisY - 2, "#222222", "tick"));
    body.push(text(xScale(tick), axisY + 10, tick.toFixed(1), "middle", 10));
  }
  body.push(text((left + WIDTH - 40) / 2, height - 8, "treatment effect", "middle", 12));
  return svgDocument(WIDTH, height, body);
}

export function render(content: string, spec: FigureSpec): string {
  switch (spec.kind) {
    case "risk_sweep":
      return renderSweep(parseSweep(content), "relative_risk", spec);
    case "coverage_sweep":
      return renderSweep(parseSweep(content), "coverage", spec);
    case "forest":
      return renderForest(parseEstimates(content), spec);
    default:
      throw new Error(`unknown figure kind ${(spec as { kind: string }).kind}`);
  }
}
