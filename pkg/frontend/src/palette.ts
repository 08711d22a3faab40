import type { VocabEntry, VocabPayload } from "./types.js";

export interface PaletteGroup {
  label: string;
  entries: VocabEntry[];
}

/** Arrange fetched vocabulary entries for display. Combined mode groups by
 * gripper state and then single moves before pairs; flat mode is one group
 * in vocabulary order. Entries are never invented: the concatenation of all
 * groups is exactly the fetched entry list. */
export function groupEntries(vocab: VocabPayload): PaletteGroup[] {
  if (vocab.mode === "flat") {
    return [{ label: "instructions", entries: [...vocab.entries] }];
  }
  const bucket = (gripper: string, n: number) =>
    vocab.entries.filter((e) => e.gripper === gripper && e.directions.length === n);
  const groups: PaletteGroup[] = [
    { label: "gripper open, single move", entries: bucket("open", 1) },
    { label: "gripper open, paired move", entries: bucket("open", 2) },
    { label: "gripper closed, single move", entries: bucket("closed", 1) },
    { label: "gripper closed, paired move", entries: bucket("closed", 2) },
    { label: "adjustment", entries: vocab.entries.filter((e) => e.directions.length === 0) },
  ];
  return groups.filter((g) => g.entries.length > 0);
}

export const SHORTCUT_KEYS: Record<string, [string, string]> = {
  d: ["x", "+"],
  a: ["x", "-"],
  w: ["y", "+"],
  s: ["y", "-"],
  e: ["z", "+"],
  q: ["z", "-"],
};

/** Resolve a single-direction keyboard shortcut to an entry id, or null when
 * no fetched entry matches. In combined mode the same direction exists once
 * per gripper state; preferGripper picks between them. */
export function shortcutEntry(
  key: string,
  vocab: VocabPayload,
  preferGripper: "open" | "closed",
): VocabEntry | null {
  const dir = SHORTCUT_KEYS[key.toLowerCase()];
  if (!dir) return null;
  const singles = vocab.entries.filter(
    (e) => e.directions.length === 1 && e.directions[0]![0] === dir[0] && e.directions[0]![1] === dir[1],
  );
  if (singles.length === 0) return null;
  if (singles.length === 1) return singles[0]!;
  return singles.find((e) => e.gripper === preferGripper) ?? singles[0]!;
}
