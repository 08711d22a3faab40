import { describe, expect, it } from "vitest";
import { projectTop, projectSide, type Workspace, type Viewport } from "../src/projection.js";
import type { Vec3 } from "../src/types.js";

const WS: Workspace = [
  [-0.2, -0.2, 0.0],
  [0.2, 0.2, 0.3],
];
const VP: Viewport = { width: 360, height: 360, margin: 24 };

describe("projectTop", () => {
  it("maps the workspace center to the viewport center", () => {
    const center: Vec3 = [0, 0, 0.15];
    const p = projectTop(center, WS, VP);
    expect(p.x).toBeCloseTo(180);
    expect(p.y).toBeCloseTo(180);
  });

  it("maps +y to smaller canvas y (up on screen)", () => {
    const low = projectTop([0, -0.2, 0], WS, VP);
    const high = projectTop([0, 0.2, 0], WS, VP);
    expect(high.y).toBeLessThan(low.y);
    expect(high.y).toBeCloseTo(VP.margin);
    expect(low.y).toBeCloseTo(VP.height - VP.margin);
  });

  it("maps +x to larger canvas x", () => {
    const left = projectTop([-0.2, 0, 0], WS, VP);
    const right = projectTop([0.2, 0, 0], WS, VP);
    expect(right.x).toBeGreaterThan(left.x);
  });

  it("clamps points outside the workspace to the frame", () => {
    const p = projectTop([5, -5, 0], WS, VP);
    expect(p.x).toBeCloseTo(VP.width - VP.margin);
    expect(p.y).toBeCloseTo(VP.height - VP.margin);
  });

  it("ignores z entirely", () => {
    const a = projectTop([0.1, 0.1, 0.0], WS, VP);
    const b = projectTop([0.1, 0.1, 0.3], WS, VP);
    expect(a).toEqual(b);
  });
});

describe("projectSide", () => {
  it("maps z to the vertical axis", () => {
    const floor = projectSide([0, 0, 0], WS, VP);
    const top = projectSide([0, 0, 0.3], WS, VP);
    expect(top.y).toBeCloseTo(VP.margin);
    expect(floor.y).toBeCloseTo(VP.height - VP.margin);
  });

  it("ignores y entirely", () => {
    const a = projectSide([0.05, -0.2, 0.1], WS, VP);
    const b = projectSide([0.05, 0.2, 0.1], WS, VP);
    expect(a).toEqual(b);
  });

  it("shares the x mapping with the top view", () => {
    const pos: Vec3 = [0.13, 0.02, 0.07];
    expect(projectSide(pos, WS, VP).x).toBeCloseTo(projectTop(pos, WS, VP).x);
  });
});

describe("degenerate workspaces", () => {
  it("pins a zero-extent axis to the middle instead of dividing by zero", () => {
    const flat: Workspace = [
      [-0.2, 0, 0],
      [0.2, 0, 0.3],
    ];
    const p = projectTop([0.1, 0, 0.1], flat, VP);
    expect(p.y).toBeCloseTo(180);
    expect(Number.isFinite(p.x)).toBe(true);
  });
});
