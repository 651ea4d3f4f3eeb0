import { member, numberRaw, parseRaw, type RawObject, type RawValue } from "./rawjson.js";

/**
 * Render the pairwise-kappa panel from the agreement endpoint's response
 * body. Every number on screen is a byte slice of that body; this module
 * does no arithmetic. Before rendering, the matrix is checked for shape:
 * rows must cover the same annotators as columns and mirrored cells must
 * carry identical bytes. A payload that fails the check gets an error
 * panel instead of numbers.
 */
export function renderAgreement(container: HTMLElement, payloadText: string): void {
  container.textContent = "";
  try {
    render(container, payloadText);
  } catch (err) {
    renderError(container, (err as Error).message);
  }
}

function render(container: HTMLElement, payloadText: string): void {
  const doc = container.ownerDocument;

  const payload = parseRaw(payloadText);
  if (payload.kind !== "object") throw new Error("payload is not an object");

  const average = member(payload, "average");
  if (average.kind === "literal" && average.value === null) {
    const empty = doc.createElement("div");
    empty.className = "agreement-empty";
    const note = payload.entries.get("note");
    empty.textContent =
      note && note.kind === "string"
        ? `No agreement yet: ${note.value}`
        : "No agreement yet: labels from at least two annotators are needed.";
    container.appendChild(empty);
    return;
  }

  const matrix = member(payload, "matrix");
  const problem = matrixProblem(matrix);
  if (problem !== null) {
    renderError(container, problem);
    return;
  }

  const avgLine = doc.createElement("div");
  avgLine.className = "agreement-average";
  avgLine.append("average kappa: ");
  avgLine.appendChild(num(doc, numberRaw(average), { id: "agreement-average-value" }));
  container.appendChild(avgLine);

  container.appendChild(renderMatrix(doc, matrix as RawObject));
  container.appendChild(renderPairs(doc, member(payload, "pairs")));

  const excluded = member(payload, "excluded_pairs");
  if (excluded.kind === "array" && excluded.items.length > 0) {
    container.appendChild(renderExcluded(doc, excluded.items));
  }
}

function renderError(container: HTMLElement, message: string): void {
  const div = container.ownerDocument.createElement("div");
  div.className = "agreement-error";
  div.textContent = `agreement payload failed validation: ${message}`;
  container.appendChild(div);
}

/** Returns a description of the shape violation, or null when sound. */
function matrixProblem(matrix: RawValue): string | null {
  if (matrix.kind !== "object") return "matrix is not an object";
  const names = [...matrix.entries.keys()];
  for (const [rowName, row] of matrix.entries) {
    if (row.kind !== "object") return `matrix row ${rowName} is not an object`;
    const cols = [...row.entries.keys()].sort();
    if (cols.join("\n") !== [...names].sort().join("\n")) {
      return `matrix row ${rowName} does not cover all annotators`;
    }
  }
  for (const a of names) {
    for (const b of names) {
      const ab = (matrix.entries.get(a) as RawObject).entries.get(b)!;
      const ba = (matrix.entries.get(b) as RawObject).entries.get(a)!;
      if (ab.raw !== ba.raw) {
        return `matrix asymmetry between ${a} and ${b}: ${ab.raw} vs ${ba.raw}`;
      }
    }
  }
  return null;
}

function num(
  doc: Document,
  raw: string,
  attrs: Record<string, string> = {},
): HTMLElement {
  const span = doc.createElement("span");
  span.className = "num";
  span.textContent = raw;
  for (const [k, v] of Object.entries(attrs)) span.setAttribute(k, v);
  return span;
}

function renderMatrix(doc: Document, matrix: RawObject): HTMLElement {
  const names = [...matrix.entries.keys()];
  const table = doc.createElement("table");
  table.className = "kappa-matrix";

  const head = table.createTHead().insertRow();
  head.appendChild(doc.createElement("th"));
  for (const name of names) {
    const th = doc.createElement("th");
    th.textContent = name;
    head.appendChild(th);
  }

  const body = table.createTBody();
  for (const a of names) {
    const row = body.insertRow();
    const th = doc.createElement("th");
    th.textContent = a;
    row.appendChild(th);
    for (const b of names) {
      const cell = row.insertCell();
      const value = (matrix.entries.get(a) as RawObject).entries.get(b)!;
      cell.appendChild(
        num(doc, numberRaw(value), { "data-row": a, "data-col": b }),
      );
    }
  }
  return table;
}

function renderPairs(doc: Document, pairs: RawValue): HTMLElement {
  const list = doc.createElement("ul");
  list.className = "pair-list";
  if (pairs.kind !== "array") return list;
  for (const entry of pairs.items) {
    if (entry.kind !== "object") continue;
    const annotators = member(entry, "annotators");
    if (annotators.kind !== "array") continue;
    const [a, b] = annotators.items.map((v) =>
      v.kind === "string" ? (v.value as string) : v.raw,
    );
    const li = doc.createElement("li");
    li.append(`${a} / ${b}: kappa `);
    li.appendChild(
      num(doc, numberRaw(member(entry, "kappa")), { "data-pair": `${a}|${b}` }),
    );
    li.append(" over ");
    li.appendChild(num(doc, numberRaw(member(entry, "shared_posts"))));
    li.append(" shared posts");
    list.appendChild(li);
  }
  return list;
}

function renderExcluded(doc: Document, entries: RawValue[]): HTMLElement {
  const div = doc.createElement("div");
  div.className = "excluded-pairs";
  const parts: string[] = [];
  for (const entry of entries) {
    if (entry.kind !== "object") continue;
    const annotators = member(entry, "annotators");
    const shared = member(entry, "shared_posts");
    if (annotators.kind !== "array") continue;
    const names = annotators.items
      .map((v) => (v.kind === "string" ? (v.value as string) : v.raw))
      .join(" / ");
    parts.push(`${names} (${shared.raw} shared)`);
  }
  div.textContent = `Excluded for too few shared posts: ${parts.join(", ")}`;
  return div;
}
