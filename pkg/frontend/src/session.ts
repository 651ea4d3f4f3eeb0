import {
  ApiError,
  isRetryable,
  type TaskPayload,
  type TaskService,
} from "./api.js";
import { RetryQueue } from "./queue.js";

export type SessionView =
  | { state: "loading" }
  | { state: "task"; task: TaskPayload }
  | { state: "done" }
  | { state: "error"; message: string; retryable: boolean };

export interface SessionOptions {
  onView?: (view: SessionView) => void;
  onQueueChange?: (size: number) => void;
  /** One-line messages worth showing but not worth blocking on. */
  onNotice?: (message: string) => void;
  retryDelayMs?: number;
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  return `network error: ${String(err)}`;
}

/**
 * One annotator's labeling pass: fetch a task, submit or skip, repeat.
 *
 * Submissions go through a retry queue, so a dropped connection never
 * loses a label; the session advances to the next task once the queue
 * has drained. A skipped task is simply not submitted: the server-side
 * lease keeps it parked until it expires, and a later fetch hands out
 * the next unleased post instead.
 *
 * All operations run on one internal promise chain, which is what makes
 * keyboard mashing safe and gives tests a quiescence point (idle()).
 */
export class AnnotatorSession {
  /** Labels submitted this session (counted at the moment of submission). */
  submittedCount = 0;
  view: SessionView = { state: "loading" };

  private current: TaskPayload | null = null;
  private queue: RetryQueue;
  private chainTail: Promise<void> = Promise.resolve();
  private awaitingDrain = false;

  constructor(
    private service: TaskService,
    readonly annotatorId: string,
    private opts: SessionOptions = {},
  ) {
    this.queue = new RetryQueue((sub) => this.service.submitLabel(sub), {
      retryDelayMs: opts.retryDelayMs,
      onChange: (size) => opts.onQueueChange?.(size),
      onDiscard: (sub, err) => {
        // Stale task (404) or an outright rejection: report and move on.
        opts.onNotice?.(`label for ${sub.post_id} dropped: ${describe(err)}`);
      },
      onDrained: () => {
        if (this.awaitingDrain) {
          this.awaitingDrain = false;
          void this.chain(() => this.advance());
        }
      },
    });
  }

  currentTask(): TaskPayload | null {
    return this.current;
  }

  get queuedCount(): number {
    return this.queue.size;
  }

  start(): Promise<void> {
    return this.chain(() => this.advance());
  }

  /** Label the displayed task and move on once the service has it. */
  submit(label: string): void {
    const task = this.current;
    if (task === null) return;
    this.current = null;
    this.submittedCount += 1;
    this.queue.push({
      post_id: task.post_id,
      annotator_id: this.annotatorId,
      label,
    });
    void this.chain(async () => {
      this.awaitingDrain = true;
      this.setView({ state: "loading" });
      const drained = await this.queue.flush();
      if (drained && this.awaitingDrain) {
        // The queue was empty before this op ran (a timer-driven flush
        // beat it), so no drain callback fired for it; advance here.
        this.awaitingDrain = false;
        await this.advance();
      } else if (!drained) {
        this.setView({
          state: "error",
          retryable: true,
          message: "label saved locally; the service is unreachable",
        });
      }
    });
  }

  skip(): void {
    if (this.current === null) return;
    this.current = null;
    void this.chain(() => this.advance());
  }

  /** Banner button and the browser's online event both land here. */
  retry(): Promise<void> {
    return this.chain(async () => {
      if (this.view.state !== "error") {
        await this.queue.flush(); // background drain only
        return;
      }
      const hadPending = this.queue.size > 0;
      const drained = await this.queue.flush();
      if (!drained) {
        this.setView({
          state: "error",
          retryable: true,
          message: "still unreachable; queued labels are kept",
        });
        return;
      }
      // A drain with pending entries already chained its own advance via
      // the queue callback; only a plain fetch failure needs one here.
      if (!hadPending) await this.advance();
    });
  }

  /** Resolves once every queued operation has settled. */
  async idle(): Promise<void> {
    for (;;) {
      const tail = this.chainTail;
      await tail;
      if (tail === this.chainTail) return;
    }
  }

  dispose(): void {
    this.queue.stop();
  }

  private setView(view: SessionView): void {
    this.view = view;
    this.opts.onView?.(view);
  }

  private async advance(): Promise<void> {
    this.current = null;
    this.setView({ state: "loading" });
    try {
      const task = await this.service.nextTask(this.annotatorId);
      if (task === null) {
        this.setView({ state: "done" });
      } else {
        this.current = task;
        this.setView({ state: "task", task });
      }
    } catch (err) {
      this.setView({
        state: "error",
        message: describe(err),
        retryable: isRetryable(err),
      });
    }
  }

  private chain(op: () => Promise<void>): Promise<void> {
    this.chainTail = this.chainTail.then(op, op);
    return this.chainTail;
  }
}
