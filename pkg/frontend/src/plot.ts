// Pure plot geometry: grid documents in, pixel coordinates out. Keeping this
// DOM-free is what lets the invariants (bounded, monotone display) be tested
// directly.

import { Atom, GridDoc, DensityDoc } from "./api.js";

export interface Box {
  width: number;
  height: number;
  pad: number;
}

export interface Pt {
  x: number;
  y: number;
}

export interface Marker {
  x: number;
  yLo: number;
  yHi: number; // dot goes here
}

export interface Geometry {
  line: Pt[];
  markers: Marker[];
}

export function scales(box: Box, xLo: number, xHi: number, yLo: number, yHi: number) {
  const innerW = box.width - 2 * box.pad;
  const innerH = box.height - 2 * box.pad;
  const toX = (x: number) => box.pad + ((x - xLo) / (xHi - xLo)) * innerW;
  // pixel y grows downward
  const toY = (y: number) => box.height - box.pad - ((y - yLo) / (yHi - yLo)) * innerH;
  return { toX, toY };
}

const clamp01 = (v: number) => Math.min(1, Math.max(0, v));

function nodePositions(mesh: GridDoc["mesh"], count: number): number[] {
  const xs = new Array<number>(count);
  for (let i = 0; i < count; i++) xs[i] = mesh.x_min + i * mesh.delta;
  return xs;
}

function atomMass(atoms: Atom[], x: number, delta: number): number {
  for (const atom of atoms) {
    if (Math.abs(atom.x - x) <= delta / 2) return atom.mass;
  }
  return 0;
}

export function cdfGeometry(grid: GridDoc, box: Box): Geometry {
  const xs = nodePositions(grid.mesh, grid.values.length);
  const { toX, toY } = scales(box, grid.mesh.x_min, grid.mesh.x_max, 0, 1);
  const line: Pt[] = [];
  let running = 0; // displayed curve never dips, whatever the payload says
  for (let i = 0; i < xs.length; i++) {
    running = Math.max(running, clamp01(grid.values[i]));
    line.push({ x: toX(xs[i]), y: toY(running) });
  }
  const markers: Marker[] = grid.atoms.map((atom) => {
    const i = Math.round((atom.x - grid.mesh.x_min) / grid.mesh.delta);
    const value = clamp01(grid.values[Math.min(i, grid.values.length - 1)]);
    const left = clamp01(value - atom.mass);
    return { x: toX(atom.x), yLo: toY(left), yHi: toY(value) };
  });
  return { line, markers };
}

export function densityGeometry(doc: DensityDoc, box: Box): Geometry {
  const xs = nodePositions(doc.mesh, doc.values.length);
  const yMax = Math.max(1e-12, ...doc.values);
  const { toX, toY } = scales(box, doc.mesh.x_min, doc.mesh.x_max, 0, yMax);
  const line: Pt[] = xs.map((x, i) => ({
    x: toX(x),
    y: toY(Math.max(0, doc.values[i])),
  }));
  // atoms sit on their own scale: stem height is mass relative to the
  // heaviest atom, drawn over the full panel
  const massMax = Math.max(1e-12, ...doc.atoms.map((a) => a.mass));
  const markers: Marker[] = doc.atoms.map((atom) => ({
    x: toX(atom.x),
    yLo: toY(0),
    yHi: toY((atom.mass / massMax) * yMax),
  }));
  return { line, markers };
}

export function pathD(points: Pt[]): string {
  if (!points.length) return "";
  return points
    .map((p, i) => `${i === 0 ? "M" : "L"}${p.x.toFixed(2)} ${p.y.toFixed(2)}`)
    .join(" ");
}

// round axis labels: a handful of evenly spaced values at a power-of-ten step
export function ticks(lo: number, hi: number, target = 6): number[] {
  const span = hi - lo;
  if (!(span > 0)) return [lo];
  const raw = span / target;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((s) => span / s <= target)!;
  const out: number[] = [];
  for (let t = Math.ceil(lo / step) * step; t <= hi + step * 1e-9; t += step) {
    out.push(Number(t.toFixed(12)));
  }
  return out;
}
