// SVG trajectory chart, built as a string so it stays a pure function of
// its inputs. Mean lines with shaded 95% bands, observed outcome points,
// and vertical action markers colored by type; the factual overlay renders
// grey, the counterfactual blue. None of the numbers here are invented:
// series arrays arrive verbatim from prediction responses.

export interface ChartSeries {
  label: "counterfactual" | "factual";
  times: number[];
  mean: number[];
  lower95: number[];
  upper95: number[];
}

export interface HistoryPoint {
  t: number;
  y: number;
}

export interface ActionMarker {
  t: number;
  type: string;
  planned: boolean;
}

export interface ChartModel {
  cutTime: number;
  tau: number;
  history: HistoryPoint[];
  markers: ActionMarker[];
  series: ChartSeries[];
}

export class GridMismatchError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "GridMismatchError";
  }
}

export interface Scale {
  (value: number): number;
  invert(pixel: number): number;
}

export function linearScale(
  [d0, d1]: [number, number],
  [r0, r1]: [number, number],
): Scale {
  const span = d1 - d0 || 1;
  const scale = ((value: number) => r0 + ((value - d0) / span) * (r1 - r0)) as Scale;
  scale.invert = (pixel) => d0 + ((pixel - r0) / (r1 - r0)) * span;
  return scale;
}

const SERIES_COLOR = { counterfactual: "#1f6fd6", factual: "#8a8a8a" } as const;
const MARKER_PALETTE = ["#c2571a", "#7a3fa8", "#1a8a6d", "#b8336a", "#5d6b1f"];

export function markerColor(type: string, types: string[]): string {
  const index = Math.max(0, types.indexOf(type));
  return MARKER_PALETTE[index % MARKER_PALETTE.length] as string;
}

const fmt = (value: number): string => {
  const rounded = Math.round(value * 100) / 100;
  return Object.is(rounded, -0) ? "0" : String(rounded);
};

export function meanPath(times: number[], mean: number[], x: Scale, y: Scale): string {
  return times
    .map((t, i) => `${i === 0 ? "M" : "L"}${fmt(x(t))},${fmt(y(mean[i] as number))}`)
    .join("");
}

/** Closed polygon: upper edge left to right, then lower edge back. */
export function bandPath(
  times: number[],
  lower: number[],
  upper: number[],
  x: Scale,
  y: Scale,
): string {
  const forward = times
    .map((t, i) => `${i === 0 ? "M" : "L"}${fmt(x(t))},${fmt(y(upper[i] as number))}`)
    .join("");
  const back = [...times.keys()]
    .reverse()
    .map((i) => `L${fmt(x(times[i] as number))},${fmt(y(lower[i] as number))}`)
    .join("");
  return `${forward}${back}Z`;
}

function assertSharedGrid(series: ChartSeries[]): void {
  for (const s of series) {
    const n = s.times.length;
    if (s.mean.length !== n || s.lower95.length !== n || s.upper95.length !== n) {
      throw new GridMismatchError(`${s.label} arrays disagree on length`);
    }
  }
  if (series.length < 2) return;
  const [first, ...rest] = series;
  for (const s of rest) {
    const same =
      s.times.length === first!.times.length &&
      s.times.every((t, i) => t === first!.times[i]);
    if (!same) {
      throw new GridMismatchError(
        "factual and counterfactual responses use different query grids",
      );
    }
  }
}

function ticks(lo: number, hi: number, count: number): number[] {
  const step = (hi - lo) / (count - 1);
  return Array.from({ length: count }, (_, i) => lo + i * step);
}

const PAD = { left: 46, right: 12, top: 12, bottom: 28 };

export function renderChartSvg(
  model: ChartModel,
  width = 860,
  height = 320,
): string {
  assertSharedGrid(model.series);

  const values: number[] = model.history.map((p) => p.y);
  for (const s of model.series) values.push(...s.lower95, ...s.upper95);
  const vLo = values.length ? Math.min(...values) : -1;
  const vHi = values.length ? Math.max(...values) : 1;
  const margin = 0.08 * (vHi - vLo || 1);

  const x = linearScale([0, model.tau], [PAD.left, width - PAD.right]);
  const y = linearScale([vLo - margin, vHi + margin], [height - PAD.bottom, PAD.top]);

  const markerTypes = [...new Set(model.markers.map((m) => m.type))].sort();
  const parts: string[] = [];

  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" ` +
      `class="trajectory-chart" role="img">`,
  );

  for (const t of ticks(0, model.tau, 7)) {
    const px = fmt(x(t));
    parts.push(
      `<line class="grid" x1="${px}" y1="${PAD.top}" x2="${px}" ` +
        `y2="${height - PAD.bottom}"/>`,
      `<text class="tick" x="${px}" y="${height - 8}" text-anchor="middle">` +
        `${fmt(t)}h</text>`,
    );
  }
  for (const v of ticks(vLo, vHi, 5)) {
    parts.push(
      `<text class="tick" x="${PAD.left - 6}" y="${fmt(y(v) + 3)}" ` +
        `text-anchor="end">${fmt(v)}</text>`,
    );
  }

  const cutX = fmt(x(model.cutTime));
  parts.push(
    `<line class="cut-line" x1="${cutX}" y1="${PAD.top}" x2="${cutX}" ` +
      `y2="${height - PAD.bottom}"/>`,
  );

  for (const marker of model.markers) {
    const px = fmt(x(marker.t));
    const color = markerColor(marker.type, markerTypes);
    const dash = marker.planned ? ` stroke-dasharray="5 3"` : "";
    parts.push(
      `<line class="action-marker" data-type="${marker.type}" x1="${px}" ` +
        `y1="${PAD.top}" x2="${px}" y2="${height - PAD.bottom}" ` +
        `stroke="${color}"${dash}/>`,
    );
  }

  for (const s of model.series) {
    const color = SERIES_COLOR[s.label];
    parts.push(
      `<path class="band" data-series="${s.label}" ` +
        `d="${bandPath(s.times, s.lower95, s.upper95, x, y)}" fill="${color}" ` +
        `fill-opacity="0.16" stroke="none"/>`,
      `<path class="mean" data-series="${s.label}" ` +
        `d="${meanPath(s.times, s.mean, x, y)}" fill="none" stroke="${color}" ` +
        `stroke-width="2"/>`,
    );
  }

  for (const point of model.history) {
    parts.push(
      `<circle class="observed" cx="${fmt(x(point.t))}" cy="${fmt(y(point.y))}" ` +
        `r="3"/>`,
    );
  }

  parts.push("</svg>");
  return parts.join("");
}
