import { beforeEach, describe, expect, it } from "vitest";
import { renderAgreement } from "../src/agreement.js";

// Payloads below mirror the service's serialization, spaces and all.
const TWO_ANNOTATORS =
  '{"average": 0.86, "excluded_pairs": [], ' +
  '"matrix": {"alice": {"alice": 1.0, "bob": 0.86}, "bob": {"alice": 0.86, "bob": 1.0}}, ' +
  '"pairs": [{"annotators": ["alice", "bob"], "kappa": 0.86, "shared_posts": 50}]}';

const EMPTY_STATE =
  '{"average": null, "excluded_pairs": [], "matrix": {}, ' +
  '"note": "no annotator pair shares enough labeled posts", "pairs": []}';

let panel: HTMLElement;

beforeEach(() => {
  document.body.innerHTML = '<section id="agreement-panel"></section>';
  panel = document.getElementById("agreement-panel")!;
});

describe("renderAgreement", () => {
  it("shows the service's average verbatim", () => {
    renderAgreement(panel, TWO_ANNOTATORS);
    const avg = panel.querySelector("#agreement-average-value")!;
    expect(avg.textContent).toBe("0.86");
  });

  it("renders the matrix with the payload's bytes, diagonal included", () => {
    renderAgreement(panel, TWO_ANNOTATORS);
    const cell = (row: string, col: string) =>
      panel.querySelector(`[data-row="${row}"][data-col="${col}"]`)!.textContent;
    // Python serializes the diagonal as 1.0; the panel must not turn it into "1".
    expect(cell("alice", "alice")).toBe("1.0");
    expect(cell("bob", "bob")).toBe("1.0");
    expect(cell("alice", "bob")).toBe("0.86");
    expect(cell("bob", "alice")).toBe("0.86");
  });

  it("lists pairs with kappa and shared-post counts", () => {
    renderAgreement(panel, TWO_ANNOTATORS);
    const li = panel.querySelector(".pair-list li")!;
    expect(li.textContent).toContain("alice / bob");
    expect(li.querySelector('[data-pair="alice|bob"]')!.textContent).toBe("0.86");
    expect(li.textContent).toContain("50 shared posts");
  });

  it("keeps full float precision on display", () => {
    const payload =
      '{"average": 0.6666666666666666, "excluded_pairs": [], ' +
      '"matrix": {"a": {"a": 1.0, "b": 0.6666666666666666}, ' +
      '"b": {"a": 0.6666666666666666, "b": 1.0}}, ' +
      '"pairs": [{"annotators": ["a", "b"], "kappa": 0.6666666666666666, "shared_posts": 20}]}';
    renderAgreement(panel, payload);
    expect(panel.querySelector("#agreement-average-value")!.textContent).toBe(
      "0.6666666666666666",
    );
  });

  it("explains the empty state instead of rendering numbers", () => {
    renderAgreement(panel, EMPTY_STATE);
    expect(panel.querySelector(".agreement-empty")!.textContent).toContain(
      "no annotator pair shares enough labeled posts",
    );
    expect(panel.querySelectorAll(".num")).toHaveLength(0);
  });

  it("rejects a numerically asymmetric matrix", () => {
    const bad = TWO_ANNOTATORS.replace('"bob": {"alice": 0.86', '"bob": {"alice": 0.87');
    renderAgreement(panel, bad);
    const err = panel.querySelector(".agreement-error")!;
    expect(err.textContent).toContain("asymmetry");
    expect(err.textContent).toContain("0.86");
    expect(err.textContent).toContain("0.87");
    expect(panel.querySelectorAll(".num")).toHaveLength(0);
  });

  it("rejects mirrored cells whose bytes differ even when the values match", () => {
    // 0.86 and 0.860 are the same number; the display contract is byte-level.
    const bad = TWO_ANNOTATORS.replace('"bob": {"alice": 0.86', '"bob": {"alice": 0.860');
    renderAgreement(panel, bad);
    expect(panel.querySelector(".agreement-error")).not.toBeNull();
  });

  it("rejects a matrix with a missing column", () => {
    const bad =
      '{"average": 0.5, "excluded_pairs": [], ' +
      '"matrix": {"a": {"a": 1.0, "b": 0.5}, "b": {"b": 1.0}}, "pairs": []}';
    renderAgreement(panel, bad);
    expect(panel.querySelector(".agreement-error")!.textContent).toContain(
      "does not cover all annotators",
    );
  });

  it("surfaces malformed payloads without throwing", () => {
    renderAgreement(panel, "not json at all");
    expect(panel.querySelector(".agreement-error")).not.toBeNull();
  });

  it("mentions excluded pairs when the service reports them", () => {
    const payload =
      '{"average": 0.86, ' +
      '"excluded_pairs": [{"annotators": ["bob", "carol"], "shared_posts": 1}], ' +
      '"matrix": {"alice": {"alice": 1.0, "bob": 0.86}, "bob": {"alice": 0.86, "bob": 1.0}}, ' +
      '"pairs": [{"annotators": ["alice", "bob"], "kappa": 0.86, "shared_posts": 50}]}';
    renderAgreement(panel, payload);
    expect(panel.querySelector(".excluded-pairs")!.textContent).toContain("bob / carol");
    expect(panel.querySelector(".excluded-pairs")!.textContent).toContain("1 shared");
  });

  it("clears previous content on re-render", () => {
    renderAgreement(panel, TWO_ANNOTATORS);
    renderAgreement(panel, EMPTY_STATE);
    expect(panel.querySelectorAll("table")).toHaveLength(0);
    expect(panel.querySelector(".agreement-empty")).not.toBeNull();
  });
});
