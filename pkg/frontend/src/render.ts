import type { Marker, SceneModel } from "./scene.js";
import type { Point2, Viewport } from "./projection.js";

const COLORS: Record<Marker["kind"], string> = {
  "gripper-open": "#2e7dd1",
  "gripper-closed": "#1a4a80",
  object: "#c9a227",
  held: "#d14b2e",
};

function drawMarker(ctx: CanvasRenderingContext2D, kind: Marker["kind"], label: string, p: Point2): void {
  ctx.fillStyle = COLORS[kind];
  ctx.strokeStyle = COLORS[kind];
  ctx.beginPath();
  if (kind === "gripper-open") {
    ctx.lineWidth = 2;
    ctx.arc(p.x, p.y, 7, 0, 2 * Math.PI);
    ctx.stroke();
  } else if (kind === "gripper-closed") {
    ctx.arc(p.x, p.y, 7, 0, 2 * Math.PI);
    ctx.fill();
  } else if (kind === "held") {
    // held object rides the gripper; diamond keeps it visible underneath
    ctx.moveTo(p.x, p.y - 10);
    ctx.lineTo(p.x + 10, p.y);
    ctx.lineTo(p.x, p.y + 10);
    ctx.lineTo(p.x - 10, p.y);
    ctx.closePath();
    ctx.fill();
  } else {
    ctx.fillRect(p.x - 5, p.y - 5, 10, 10);
  }
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(label, p.x + 10, p.y - 8);
}

export function drawPane(
  canvas: HTMLCanvasElement,
  model: SceneModel,
  pane: "top" | "side",
  vp: Viewport,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#bbb";
  ctx.lineWidth = 1;
  ctx.strokeRect(vp.margin, vp.margin, vp.width - 2 * vp.margin, vp.height - 2 * vp.margin);
  // held markers first so the gripper outline stays readable on top
  const order: Marker["kind"][] = ["object", "held", "gripper-open", "gripper-closed"];
  for (const kind of order) {
    for (const m of model.markers) {
      if (m.kind !== kind) continue;
      drawMarker(ctx, m.kind, m.label, pane === "top" ? m.top : m.side);
    }
  }
}
