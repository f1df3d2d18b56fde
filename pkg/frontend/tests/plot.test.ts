import { describe, expect, it } from "vitest";
import { DensityDoc, GridDoc } from "../src/api.js";
import { Box, cdfGeometry, densityGeometry, pathD, ticks } from "../src/plot.js";

const BOX: Box = { width: 400, height: 300, pad: 20 };

const GRID: GridDoc = {
  mesh: { delta: 0.5, x_min: 0, x_max: 2 },
  values: [0.4, 0.6, 0.8, 0.9, 1.0],
  atoms: [{ x: 0, mass: 0.4 }],
};

describe("cdfGeometry", () => {
  it("maps nodes left to right with the curve never dropping", () => {
    const { line } = cdfGeometry(GRID, BOX);
    expect(line).toHaveLength(5);
    for (let i = 1; i < line.length; i++) {
      expect(line[i].x).toBeGreaterThan(line[i - 1].x);
      // pixel y shrinks as the value grows
      expect(line[i].y).toBeLessThanOrEqual(line[i - 1].y);
    }
  });

  it("keeps every point inside the panel even for out-of-range payloads", () => {
    const dirty: GridDoc = {
      ...GRID,
      values: [-0.05, 0.6, 0.59, 0.9, 1.0001],
    };
    const { line } = cdfGeometry(dirty, BOX);
    for (const p of line) {
      expect(p.x).toBeGreaterThanOrEqual(BOX.pad);
      expect(p.x).toBeLessThanOrEqual(BOX.width - BOX.pad);
      expect(p.y).toBeGreaterThanOrEqual(BOX.pad);
      expect(p.y).toBeLessThanOrEqual(BOX.height - BOX.pad);
    }
    // the dip at index 2 is flattened, not drawn
    expect(line[2].y).toBe(line[1].y);
  });

  it("draws the atom as a vertical run from the left limit up to the value", () => {
    const { markers } = cdfGeometry(GRID, BOX);
    expect(markers).toHaveLength(1);
    const m = markers[0];
    expect(m.x).toBe(BOX.pad); // atom at x_min
    // left limit is value - mass = 0: the stem spans the whole jump
    expect(m.yLo).toBe(BOX.height - BOX.pad);
    expect(m.yHi).toBeLessThan(m.yLo);
    const innerH = BOX.height - 2 * BOX.pad;
    expect(m.yLo - m.yHi).toBeCloseTo(0.4 * innerH, 10);
  });
});

describe("densityGeometry", () => {
  const DENSITY: DensityDoc = {
    mesh: { delta: 0.5, x_min: 0, x_max: 2 },
    values: [0, 0.2, 0.5, 0.1, 0],
    atoms: [{ x: 0, mass: 0.4 }, { x: 1, mass: 0.2 }],
    delta1: 0.5,
    clamped_mass: 0,
  };

  it("scales the curve to its own maximum", () => {
    const { line } = densityGeometry(DENSITY, BOX);
    const ys = line.map((p) => p.y);
    expect(Math.min(...ys)).toBe(BOX.pad); // the peak touches the top
    expect(Math.max(...ys)).toBe(BOX.height - BOX.pad);
  });

  it("stems rise from the baseline with height proportional to mass", () => {
    const { markers } = densityGeometry(DENSITY, BOX);
    expect(markers).toHaveLength(2);
    const [heavy, light] = markers;
    const base = BOX.height - BOX.pad;
    expect(heavy.yLo).toBe(base);
    expect(light.yLo).toBe(base);
    // half the mass, half the stem
    expect((light.yLo - light.yHi) / (heavy.yLo - heavy.yHi)).toBeCloseTo(0.5, 10);
  });
});

describe("pathD", () => {
  it("emits one move and then line segments", () => {
    const d = pathD([
      { x: 1, y: 2 },
      { x: 3, y: 4 },
      { x: 5, y: 6 },
    ]);
    expect(d).toBe("M1.00 2.00 L3.00 4.00 L5.00 6.00");
  });

  it("is empty for no points", () => {
    expect(pathD([])).toBe("");
  });
});

describe("ticks", () => {
  it("covers the range at a round step", () => {
    expect(ticks(0, 4)).toEqual([0, 1, 2, 3, 4]);
    expect(ticks(0, 1)).toEqual([0, 0.2, 0.4, 0.6, 0.8, 1]);
  });

  it("handles negative spans and degenerate input", () => {
    const symmetric = ticks(-3, 3);
    expect(symmetric).toContain(0);
    expect(symmetric[0]).toBeGreaterThanOrEqual(-3);
    expect(symmetric[symmetric.length - 1]).toBeLessThanOrEqual(3 + 1e-9);
    expect(ticks(2, 2)).toEqual([2]);
  });
});
