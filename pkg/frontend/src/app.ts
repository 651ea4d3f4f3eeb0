import type { Client, TaskPayload } from "./api.js";
import { renderAgreement } from "./agreement.js";
import { renderTaskText } from "./highlight.js";
import { LABEL_CAPTIONS, LABEL_CLASSES, labelForKey } from "./labels.js";
import { AnnotatorSession, type SessionView } from "./session.js";

export interface AppHandles {
  session: AnnotatorSession;
  openAgreement(): Promise<void>;
  openGuideline(): Promise<void>;
  /** Resolves when the session chain and any panel fetches have settled. */
  idle(): Promise<void>;
  dispose(): void;
}

export interface AppOptions {
  retryDelayMs?: number;
}

// Keystrokes aimed at form fields are not shortcuts.
const IGNORED_TAGS = new Set(["INPUT", "TEXTAREA", "SELECT"]);

export function wireApp(
  doc: Document,
  client: Client,
  annotatorId: string,
  opts: AppOptions = {},
): AppHandles {
  const $ = (id: string): HTMLElement => {
    const el = doc.getElementById(id);
    if (el === null) throw new Error(`missing element #${id}`);
    return el;
  };

  const taskCard = $("task-card");
  const doneCard = $("done-card");
  const banner = $("status-banner");
  const statusMessage = $("status-message");
  const retryBtn = $("retry-btn");
  const notice = $("notice");
  const textSlot = $("post-text-slot");
  const sourceBadge = $("source-badge");
  const regionBadge = $("region-badge");
  const queueNote = $("queue-note");
  const labelButtons = $("label-buttons");
  const sessionCount = $("session-count");
  const queueSize = $("queue-size");
  const agreementPanel = $("agreement-panel");
  const guidelinePanel = $("guideline-panel");
  const guidelineText = $("guideline-text");

  $("annotator-name").textContent = annotatorId;

  const session = new AnnotatorSession(client, annotatorId, {
    retryDelayMs: opts.retryDelayMs,
    onView: renderView,
    onQueueChange: (size) => {
      queueSize.textContent = `${size} queued`;
      queueSize.hidden = size === 0;
    },
    onNotice: (message) => {
      notice.textContent = message;
      notice.hidden = false;
    },
  });

  for (const [i, value] of LABEL_CLASSES.entries()) {
    const btn = doc.createElement("button");
    btn.type = "button";
    btn.className = "label-btn";
    btn.dataset.label = value;
    btn.textContent = `${i + 1} ${LABEL_CAPTIONS[value]}`;
    btn.addEventListener("click", () => session.submit(value));
    labelButtons.appendChild(btn);
  }
  $("skip-btn").addEventListener("click", () => session.skip());
  retryBtn.addEventListener("click", () => void session.retry());

  function renderView(view: SessionView): void {
    doc.body.dataset.state = view.state;
    taskCard.hidden = view.state !== "task";
    doneCard.hidden = view.state !== "done";
    banner.hidden = view.state !== "error";
    sessionCount.textContent = `${session.submittedCount} labeled`;
    if (view.state === "task") {
      renderTask(view.task);
      notice.hidden = true;
    } else if (view.state === "error") {
      statusMessage.textContent = view.message;
      (retryBtn as HTMLButtonElement).hidden = !view.retryable;
    }
  }

  function renderTask(task: TaskPayload): void {
    taskCard.dataset.postId = task.post_id;
    sourceBadge.textContent = task.source;
    regionBadge.hidden = task.region === null;
    regionBadge.textContent = task.region ?? "";
    queueNote.textContent = `${task.queue.fully_labeled} of ${task.queue.tasks} posts fully labeled`;
    textSlot.replaceChildren(renderTaskText(doc, task.text, task.highlights));
  }

  // Panel fetches are chained so idle() can wait for them too.
  let panelOps: Promise<void> = Promise.resolve();
  const chainPanel = (op: () => Promise<void>): Promise<void> => {
    panelOps = panelOps.then(op, op);
    return panelOps;
  };

  function openAgreement(): Promise<void> {
    if (!agreementPanel.hidden) {
      agreementPanel.hidden = true;
      return Promise.resolve();
    }
    return chainPanel(async () => {
      agreementPanel.hidden = false;
      try {
        renderAgreement(agreementPanel, await client.agreementText());
      } catch (err) {
        agreementPanel.textContent = `could not load agreement: ${String(err)}`;
      }
    });
  }

  function openGuideline(): Promise<void> {
    if (!guidelinePanel.hidden) {
      guidelinePanel.hidden = true;
      return Promise.resolve();
    }
    return chainPanel(async () => {
      guidelinePanel.hidden = false;
      try {
        guidelineText.textContent = await client.guideline();
      } catch (err) {
        guidelineText.textContent = `could not load guideline: ${String(err)}`;
      }
    });
  }

  function onKeyDown(event: KeyboardEvent): void {
    if (event.altKey || event.ctrlKey || event.metaKey) return;
    const target = event.target as HTMLElement | null;
    if (target && (IGNORED_TAGS.has(target.tagName) || target.isContentEditable)) {
      return;
    }
    const label = labelForKey(event.key);
    if (label !== null) {
      event.preventDefault();
      session.submit(label);
    } else if (event.key === "s") {
      event.preventDefault();
      session.skip();
    } else if (event.key === "g") {
      event.preventDefault();
      void openGuideline();
    } else if (event.key === "a") {
      event.preventDefault();
      void openAgreement();
    } else if (event.key === "Escape") {
      agreementPanel.hidden = true;
      guidelinePanel.hidden = true;
    }
  }

  $("agreement-btn").addEventListener("click", () => void openAgreement());
  $("guideline-btn").addEventListener("click", () => void openGuideline());

  const onOnline = (): void => void session.retry();

  doc.addEventListener("keydown", onKeyDown as EventListener);
  doc.defaultView?.addEventListener("online", onOnline);

  void session.start();

  return {
    session,
    openAgreement,
    openGuideline,
    idle: async () => {
      await session.idle();
      await panelOps;
    },
    dispose: () => {
      doc.removeEventListener("keydown", onKeyDown as EventListener);
      doc.defaultView?.removeEventListener("online", onOnline);
      session.dispose();
    },
  };
}
