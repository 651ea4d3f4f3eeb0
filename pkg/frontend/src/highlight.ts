import type { Highlight } from "./api.js";

/**
 * Keep only spans that fit the text: in-bounds, non-empty, non-overlapping.
 * Offsets come from the service's match data and should already be valid,
 * but a span must never be allowed to run past the text it decorates.
 */
export function sanitizeHighlights(text: string, highlights: Highlight[]): Highlight[] {
  const sorted = [...highlights].sort((a, b) => a.start - b.start || a.end - b.end);
  const out: Highlight[] = [];
  let cursor = 0;
  for (const h of sorted) {
    const start = Math.max(0, h.start);
    const end = Math.min(h.end, text.length);
    if (start >= end) continue;
    if (start < cursor) continue; // overlaps the previous kept span
    out.push({ ...h, start, end });
    cursor = end;
  }
  return out;
}

/**
 * Render the post text with matched terms wrapped in <mark> elements.
 * Text goes in as text nodes, never markup.
 */
export function renderTaskText(
  doc: Document,
  text: string,
  highlights: Highlight[],
): HTMLElement {
  const p = doc.createElement("p");
  p.className = "post-text";
  let cursor = 0;
  for (const h of sanitizeHighlights(text, highlights)) {
    if (h.start > cursor) {
      p.appendChild(doc.createTextNode(text.slice(cursor, h.start)));
    }
    const mark = doc.createElement("mark");
    mark.className = "term-highlight";
    mark.title = h.seed;
    mark.appendChild(doc.createTextNode(text.slice(h.start, h.end)));
    p.appendChild(mark);
    cursor = h.end;
  }
  if (cursor < text.length) {
    p.appendChild(doc.createTextNode(text.slice(cursor)));
  }
  return p;
}
