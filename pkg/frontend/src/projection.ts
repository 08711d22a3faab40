import type { Vec3 } from "./types.js";

export interface Viewport {
  width: number;
  height: number;
  margin: number;
}

export interface Point2 {
  x: number;
  y: number;
}

/** Workspace bounds as [lo, hi] corners in world coordinates. */
export type Workspace = [Vec3, Vec3];

function axisFrac(value: number, lo: number, hi: number): number {
  if (hi <= lo) return 0.5;
  const f = (value - lo) / (hi - lo);
  return Math.min(1, Math.max(0, f));
}

function toPixels(fx: number, fy: number, vp: Viewport): Point2 {
  const w = vp.width - 2 * vp.margin;
  const h = vp.height - 2 * vp.margin;
  // canvas y grows downward; world "up" on screen needs the flip
  return { x: vp.margin + fx * w, y: vp.margin + (1 - fy) * h };
}

/** Top-down orthographic view: world x maps right, world y maps up. */
export function projectTop(p: Vec3, ws: Workspace, vp: Viewport): Point2 {
  const fx = axisFrac(p[0], ws[0][0], ws[1][0]);
  const fy = axisFrac(p[1], ws[0][1], ws[1][1]);
  return toPixels(fx, fy, vp);
}

/** Side orthographic view: world x maps right, world z maps up. */
export function projectSide(p: Vec3, ws: Workspace, vp: Viewport): Point2 {
  const fx = axisFrac(p[0], ws[0][0], ws[1][0]);
  const fz = axisFrac(p[2], ws[0][2], ws[1][2]);
  return toPixels(fx, fz, vp);
}
