import { ApiError, isRetryable, type LabelSubmission } from "./api.js";

export interface RetryQueueOptions {
  /** Delay before an automatic re-flush after a retryable failure. */
  retryDelayMs?: number;
  /** Called whenever the number of queued submissions changes. */
  onChange?: (size: number) => void;
  /** Called when a submission is dropped for a non-retryable reason. */
  onDiscard?: (sub: LabelSubmission, err: ApiError) => void;
  /** Called when a flush that started with queued work drains to empty. */
  onDrained?: () => void;
}

/**
 * At-least-once delivery of label submissions, in order.
 *
 * Failed sends stay queued and are retried; the server overwrites on
 * resubmission, so a duplicate delivery is harmless. A stale task (404)
 * is dropped and reported rather than retried forever.
 */
export class RetryQueue {
  private pending: LabelSubmission[] = [];
  private flushing = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private send: (sub: LabelSubmission) => Promise<void>,
    private opts: RetryQueueOptions = {},
  ) {}

  get size(): number {
    return this.pending.length;
  }

  /**
   * Queue a submission. A resubmission for the same post and annotator
   * replaces the queued one in place; the server would overwrite anyway,
   * and replacing keeps the queue one-entry-per-task.
   */
  push(sub: LabelSubmission): void {
    const i = this.pending.findIndex(
      (p) => p.post_id === sub.post_id && p.annotator_id === sub.annotator_id,
    );
    if (i >= 0) this.pending[i] = sub;
    else this.pending.push(sub);
    this.opts.onChange?.(this.pending.length);
  }

  /**
   * Send queued submissions head-first until empty or a retryable failure.
   * Returns true when the queue drained. Concurrent calls coalesce: a
   * flush already in progress makes this call a no-op reporting "not
   * drained yet".
   */
  async flush(): Promise<boolean> {
    if (this.flushing) return false;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.flushing = true;
    const hadPending = this.pending.length > 0;
    try {
      while (this.pending.length > 0) {
        const head = this.pending[0];
        try {
          await this.send(head);
        } catch (err) {
          if (isRetryable(err)) {
            this.scheduleRetry();
            return false;
          }
          this.opts.onDiscard?.(head, err as ApiError);
        }
        // Drop the head only if nothing replaced it while the request
        // was in flight (push() replaces in place on resubmission).
        if (this.pending[0] === head) this.pending.shift();
        this.opts.onChange?.(this.pending.length);
      }
    } finally {
      this.flushing = false;
    }
    if (hadPending) this.opts.onDrained?.();
    return true;
  }

  private scheduleRetry(): void {
    if (this.timer !== null) return;
    const delay = this.opts.retryDelayMs ?? 5000;
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.flush();
    }, delay);
  }

  /** Cancel a scheduled retry (for teardown). Queued entries stay queued. */
  stop(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }
}
