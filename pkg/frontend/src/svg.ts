/** Minimal deterministic SVG builder: fixed style version, fixed number
 * formatting, no timestamps, so identical inputs yield identical bytes. */

export const STYLE_VERSION = "cateshrink-figures/1";

export const PALETTE: Record<string, string> = {
  unconstrained: "#4c72b0",
  constrained: "#dd8452",
  james_stein: "#55a868",
  empirical_bayes: "#c44e52",
  generalized_ridge: "#8172b3",
};

export function colorFor(estimator: string, index: number): string {
  const fallback = ["#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd"];
  return PALETTE[estimator] ?? fallback[index % fallback.length];
}

export function fmt(value: number): string {
  return value.toFixed(2);
}

export function escapeText(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}

export function line(
  x1: number,
  y1: number,
  x2: number,
  y2: number,
  stroke: string,
  cls: string,
  dash?: string
): string {
  const dashAttr = dash ? ` stroke-dasharray="${dash}"` : "";
  return (
    `<line class="${cls}" x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" ` +
    `y2="${fmt(y2)}" stroke="${stroke}" stroke-width="1"${dashAttr}/>`
  );
}

export function polyline(
  points: Array<[number, number]>,
  stroke: string,
  cls: string
): string {
  const path = points.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
  return (
    `<polyline class="${cls}" points="${path}" fill="none" ` +
    `stroke="${stroke}" stroke-width="1.8"/>`
  );
}

export function circle(x: number, y: number, r: number, fill: string): string {
  return `<circle cx="${fmt(x)}" cy="${fmt(y)}" r="${fmt(r)}" fill="${fill}"/>`;
}

export function text(
  x: number,
  y: number,
  value: string,
  anchor: "start" | "middle" | "end" = "start",
  size = 11
): string {
  return (
    `<text x="${fmt(x)}" y="${fmt(y)}" font-size="${size}" ` +
    `font-family="sans-serif" text-anchor="${anchor}">${escapeText(value)}</text>`
  );
}

export function svgDocument(width: number, height: number, body: string[]): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" data-style-version="${STYLE_VERSION}">`,
    `<rect width="${width}" height="${height}" fill="white"/>`,
    ...body,
    "</svg>",
    "",
  ].join("\n");
}

export interface LinearScale {
  (value: number): number;
  ticks: number[];
}

export function linearScale(
  domainMin: number,
  domainMax: number,
  rangeMin: number,
  rangeMax: number,
  tickCount = 5
): LinearScale {
  const span = domainMax - domainMin || 1;
  const scale = ((value: number) =>
    rangeMin + ((value - domainMin) / span) * (rangeMax - rangeMin)) as LinearScale;
  const step = span / (tickCount - 1);
  scale.ticks = Array.from({ length: tickCount }, (_, i) => domainMin + i * step);
  return scale;
}
