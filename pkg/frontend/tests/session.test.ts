import { afterEach, describe, expect, it, vi } from "vitest";
import { ApiError } from "../src/api.js";
import { AnnotatorSession, type SessionView } from "../src/session.js";
import { FakeService, makeTask } from "./fake_service.js";

const ids = (n: number) => Array.from({ length: n }, (_, i) => `p${i + 1}`);

function setup(taskIds: string[], retryDelayMs = 5) {
  const service = new FakeService(taskIds.map((id) => makeTask(id)));
  const views: SessionView[] = [];
  const notices: string[] = [];
  const session = new AnnotatorSession(service, "ann-a", {
    retryDelayMs,
    onView: (v) => views.push(v),
    onNotice: (m) => notices.push(m),
  });
  return { service, session, views, notices };
}

let active: AnnotatorSession | null = null;

afterEach(() => {
  active?.dispose();
  active = null;
});

describe("AnnotatorSession", () => {
  it("serves the first task on start", async () => {
    const { session } = setup(ids(2));
    active = session;
    await session.start();
    expect(session.view).toMatchObject({ state: "task" });
    expect(session.currentTask()?.post_id).toBe("p1");
  });

  it("submits the label and advances", async () => {
    const { service, session } = setup(ids(2));
    active = session;
    await session.start();
    session.submit("consumption");
    await session.idle();
    expect(service.submissions).toEqual([
      { post_id: "p1", annotator_id: "ann-a", label: "consumption" },
    ]);
    expect(session.currentTask()?.post_id).toBe("p2");
    expect(session.submittedCount).toBe(1);
  });

  it("reports done when the queue is exhausted", async () => {
    const { session } = setup(ids(1));
    active = session;
    await session.start();
    session.submit("mention");
    await session.idle();
    expect(session.view.state).toBe("done");
  });

  it("ignores a second keypress for the same task", async () => {
    const { service, session } = setup(ids(2));
    active = session;
    await session.start();
    session.submit("consumption");
    session.submit("mention"); // task already taken; must be a no-op
    await session.idle();
    expect(session.submittedCount).toBe(1);
    expect(service.submissions.filter((s) => s.post_id === "p1")).toHaveLength(1);
  });

  it("skips without submitting anything", async () => {
    const { service, session } = setup(ids(2));
    active = session;
    await session.start();
    session.skip();
    await session.idle();
    expect(service.submissions).toHaveLength(0);
    // server-side the lease parks p1, so the fake just hands out p2
    expect(session.currentTask()?.post_id).toBe("p2");
  });

  it("turns a failed fetch into a retryable error view", async () => {
    const { service, session } = setup(ids(1));
    active = session;
    service.nextTaskErrors.push(new TypeError("fetch failed"));
    await session.start();
    expect(session.view).toMatchObject({ state: "error", retryable: true });
    await session.retry();
    expect(session.view).toMatchObject({ state: "task" });
    expect(session.currentTask()?.post_id).toBe("p1");
  });

  it("marks a 403 as not retryable", async () => {
    const { service, session } = setup(ids(1));
    active = session;
    service.nextTaskErrors.push(
      new ApiError(403, "unknown_annotator", "unknown annotator: ann-a"),
    );
    await session.start();
    expect(session.view).toMatchObject({
      state: "error",
      retryable: false,
      message: "unknown annotator: ann-a",
    });
  });

  it("keeps an unsent label queued and auto-advances once it lands", async () => {
    const { service, session } = setup(ids(2));
    active = session;
    await session.start();
    service.submitErrors.push(new TypeError("fetch failed"));
    session.submit("nonmedical_use");
    await session.idle();

    expect(session.view).toMatchObject({ state: "error", retryable: true });
    expect(session.queuedCount).toBe(1);
    expect(service.submissions).toHaveLength(0);

    // the retry timer (5 ms here) re-flushes against a healed service
    await vi.waitFor(() => {
      expect(session.view.state).toBe("task");
    });
    expect(service.submissions).toEqual([
      { post_id: "p1", annotator_id: "ann-a", label: "nonmedical_use" },
    ]);
    expect(session.queuedCount).toBe(0);
    expect(session.currentTask()?.post_id).toBe("p2");
  });

  it("recovers via retry() after a failed submit", async () => {
    // long timer so the button press, not the timer, does the work
    const { service, session } = setup(ids(2), 60_000);
    active = session;
    await session.start();
    service.submitErrors.push(new TypeError("fetch failed"));
    session.submit("consumption");
    await session.idle();
    expect(session.view.state).toBe("error");

    await session.retry();
    await session.idle();
    expect(service.submissions).toHaveLength(1);
    expect(session.currentTask()?.post_id).toBe("p2");
  });

  it("stays in the banner when retry() finds the service still down", async () => {
    const { service, session } = setup(ids(2), 60_000);
    active = session;
    await session.start();
    service.submitErrors.push(new TypeError("one"), new TypeError("two"));
    session.submit("consumption");
    await session.idle();

    await session.retry();
    expect(session.view).toMatchObject({
      state: "error",
      message: "still unreachable; queued labels are kept",
    });
    expect(session.queuedCount).toBe(1);
  });

  it("drops a stale-task label with a notice and moves on", async () => {
    const { service, session, notices } = setup(ids(2));
    active = session;
    await session.start();
    service.submitErrors.push(new ApiError(404, "unknown_post", "no such post: p1"));
    session.submit("mention");
    await session.idle();

    expect(service.submissions).toHaveLength(0);
    expect(notices).toEqual(["label for p1 dropped: no such post: p1"]);
    expect(session.view.state).toBe("task");
    expect(session.currentTask()?.post_id).toBe("p2");
  });

  it("delivers a queued label exactly once across repeated retries", async () => {
    const { service, session } = setup(ids(3), 60_000);
    active = session;
    await session.start();
    service.submitErrors.push(new TypeError("down"), new TypeError("down"));
    session.submit("consumption"); // p1, fails, queued
    await session.idle();
    session.retry(); // second failure consumed, still queued
    await session.idle();
    expect(session.queuedCount).toBe(1);

    await session.retry(); // service healed now
    await session.idle();
    expect(service.submissions).toEqual([
      { post_id: "p1", annotator_id: "ann-a", label: "consumption" },
    ]);
  });

  it("counts submissions even while the service is down", async () => {
    const { service, session } = setup(ids(3), 60_000);
    active = session;
    await session.start();
    service.submitErrors.push(new TypeError("down"));
    session.submit("unrelated");
    await session.idle();
    expect(session.submittedCount).toBe(1);
    expect(session.queuedCount).toBe(1);
  });
});
