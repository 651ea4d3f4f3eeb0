/** The four label classes, in keyboard order: key "1" submits the first. */
export const LABEL_CLASSES = [
  "nonmedical_use",
  "consumption",
  "mention",
  "unrelated",
] as const;

export type LabelValue = (typeof LABEL_CLASSES)[number];

/** Short button captions; the value is what goes over the wire. */
export const LABEL_CAPTIONS: Record<LabelValue, string> = {
  nonmedical_use: "Nonmedical use",
  consumption: "Consumption",
  mention: "Mention",
  unrelated: "Unrelated",
};

export function labelForKey(key: string): LabelValue | null {
  const idx = Number.parseInt(key, 10) - 1;
  if (Number.isInteger(idx) && idx >= 0 && idx < LABEL_CLASSES.length) {
    return LABEL_CLASSES[idx];
  }
  return null;
}
