import { ApiError, Client, GridDoc, DensityDoc, JobStatus } from "./api.js";
import { exportCsv, csvFilename } from "./export.js";
import { Box, cdfGeometry, densityGeometry, Geometry, pathD, ticks } from "./plot.js";
import { FormValues, Session, validateForm } from "./state.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const BOX: Box = { width: 560, height: 320, pad: 36 };

function el<T extends Element>(selector: string): T {
  const found = document.querySelector(selector);
  if (!found) throw new Error(`missing element ${selector}`);
  return found as T;
}

function svgEl(name: string, attrs: Record<string, string | number>): Element {
  const node = document.createElementNS(SVG_NS, name);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, String(value));
  }
  return node;
}

function drawPanel(
  svg: SVGSVGElement,
  geometry: Geometry,
  xLo: number,
  xHi: number,
  yLabels: boolean,
): void {
  svg.innerHTML = "";
  svg.setAttribute("viewBox", `0 0 ${BOX.width} ${BOX.height}`);
  const bottom = BOX.height - BOX.pad;
  svg.appendChild(
    svgEl("line", {
      x1: BOX.pad, y1: bottom, x2: BOX.width - BOX.pad, y2: bottom,
      stroke: "#888", "stroke-width": 1,
    }),
  );
  const innerW = BOX.width - 2 * BOX.pad;
  for (const t of ticks(xLo, xHi)) {
    const px = BOX.pad + ((t - xLo) / (xHi - xLo)) * innerW;
    svg.appendChild(svgEl("line", { x1: px, y1: bottom, x2: px, y2: bottom + 4, stroke: "#888" }));
    const label = svgEl("text", { x: px, y: bottom + 16, "text-anchor": "middle", "font-size": 10 });
    label.textContent = String(t);
    svg.appendChild(label);
  }
  if (yLabels) {
    for (const t of [0, 0.5, 1]) {
      const py = bottom - t * (BOX.height - 2 * BOX.pad);
      const label = svgEl("text", { x: BOX.pad - 6, y: py + 3, "text-anchor": "end", "font-size": 10 });
      label.textContent = t.toFixed(1);
      svg.appendChild(label);
    }
  }
  svg.appendChild(
    svgEl("path", { d: pathD(geometry.line), fill: "none", stroke: "#1565c0", "stroke-width": 1.5 }),
  );
  // atoms: vertical line with a dot at the post-jump value
  for (const m of geometry.markers) {
    svg.appendChild(
      svgEl("line", { x1: m.x, y1: m.yLo, x2: m.x, y2: m.yHi, stroke: "#c62828", "stroke-width": 1.5 }),
    );
    svg.appendChild(svgEl("circle", { cx: m.x, cy: m.yHi, r: 3.5, fill: "#c62828" }));
  }
}

export function gridSummary(grid: GridDoc, status: JobStatus): string {
  const parts = [`F(0) = ${(grid.values[0] ?? 0).toFixed(6)}`];
  for (const atom of grid.atoms) {
    parts.push(`atom at ${atom.x} with mass ${atom.mass.toFixed(6)}`);
  }
  if (status.mass_captured !== undefined) {
    parts.push(`mass captured ${status.mass_captured.toFixed(6)}`);
  }
  if (status.wall_time !== undefined) {
    parts.push(`solved in ${status.wall_time.toFixed(2)}s`);
  }
  return parts.join("  |  ");
}

function wire(): void {
  const statusLine = el<HTMLElement>("#status");
  const errorLine = el<HTMLElement>("#errors");
  const summary = el<HTMLElement>("#summary");
  const cdfSvg = el<SVGSVGElement>("#cdf-plot");
  const densitySvg = el<SVGSVGElement>("#density-plot");

  const readForm = (): FormValues => ({
    g: el<HTMLInputElement>("#in-g").value,
    n: el<HTMLInputElement>("#in-n").value,
    T: el<HTMLInputElement>("#in-T").value,
    delta: el<HTMLInputElement>("#in-delta").value,
    h: el<HTMLInputElement>("#in-h").value,
    x_max: el<HTMLInputElement>("#in-xmax").value,
  });

  let lastGrid: GridDoc | null = null;
  const session = new Session(
    new Client(el<HTMLInputElement>("#in-base").value.replace(/\/+$/, "")),
    {
      onStatus: (text) => (statusLine.textContent = text),
      onError: (text) => (errorLine.textContent = text),
      onGrid: (grid, status) => {
        lastGrid = grid;
        statusLine.textContent = "done";
        summary.textContent = gridSummary(grid, status);
        drawPanel(cdfSvg, cdfGeometry(grid, BOX), grid.mesh.x_min, grid.mesh.x_max, true);
      },
      onDensity: (density: DensityDoc) => {
        drawPanel(
          densitySvg,
          densityGeometry(density, BOX),
          density.mesh.x_min,
          density.mesh.x_max,
          false,
        );
      },
    },
  );

  el<HTMLButtonElement>("#btn-compute").addEventListener("click", () => {
    errorLine.textContent = "";
    const { request, problems } = validateForm(readForm());
    if (!request) {
      errorLine.textContent = problems.map((p) => `${p.field}: ${p.message}`).join("; ");
      return;
    }
    statusLine.textContent = "submitting";
    void session.compute(request);
  });

  el<HTMLInputElement>("#in-x").addEventListener("change", async (event) => {
    const x = Number((event.target as HTMLInputElement).value);
    if (!Number.isFinite(x)) return;
    const point = await session.query(x);
    if (point) {
      el<HTMLElement>("#out-fx").textContent =
        point.F.toFixed(6) + (point.truncated ? " (beyond the window: mass captured)" : "");
    }
  });

  el<HTMLInputElement>("#in-p").addEventListener("change", async (event) => {
    const p = Number((event.target as HTMLInputElement).value);
    if (!Number.isFinite(p)) return;
    try {
      const point = await session.inverseQuery(p);
      if (point) {
        el<HTMLElement>("#out-xp").textContent =
          point.x.toFixed(6) + (point.truncated ? " (level never reached on the window)" : "");
      }
    } catch (err) {
      errorLine.textContent = err instanceof ApiError ? err.message : String(err);
    }
  });

  el<HTMLInputElement>("#in-window").addEventListener("change", (event) => {
    const window = Number((event.target as HTMLInputElement).value);
    if (Number.isFinite(window) && window > 0) {
      void session.refreshDensity(window);
    }
  });

  el<HTMLButtonElement>("#btn-export").addEventListener("click", async () => {
    const bytes = await session.exportCsvBytes();
    if (!bytes || !lastGrid) {
      errorLine.textContent = "nothing to export yet";
      return;
    }
    const form = readForm();
    exportCsv(csvFilename(form.g, Number(form.T)), bytes);
  });
}

if (typeof document !== "undefined" && document.readyState !== undefined) {
  document.addEventListener("DOMContentLoaded", wire);
}
