import type { EnvView } from "./types.js";
import type { Point2, Viewport } from "./projection.js";
import { projectTop, projectSide } from "./projection.js";

export type MarkerKind = "gripper-open" | "gripper-closed" | "object" | "held";

export interface Marker {
  kind: MarkerKind;
  label: string;
  top: Point2;
  side: Point2;
}

export interface SceneModel {
  markers: Marker[];
  step: number;
  success: boolean;
}

/** Pure view model for the two orthographic panes. The held object is marked
 * distinctly and sits at the gripper position, open and closed grippers get
 * different kinds so the drawing layer can tell them apart. */
export function sceneModel(env: EnvView, vp: Viewport): SceneModel {
  const ws = env.workspace;
  const markers: Marker[] = [];
  for (const [name, pos] of Object.entries(env.objects)) {
    markers.push({
      kind: name === env.gripper.held ? "held" : "object",
      label: name,
      top: projectTop(pos, ws, vp),
      side: projectSide(pos, ws, vp),
    });
  }
  markers.push({
    kind: env.gripper.open ? "gripper-open" : "gripper-closed",
    label: "gripper",
    top: projectTop(env.gripper.pos, ws, vp),
    side: projectSide(env.gripper.pos, ws, vp),
  });
  return { markers, step: env.step, success: env.success };
}
