/**
 * Annotation workspace: one task at a time.
 *
 * Renders the caption with the target label highlighted, walks the annotator
 * through the conditional questions, and submits only drafts the rule mirror
 * accepts. Digits 1-9 select options in the highlighted question and Enter
 * moves on (or submits at the end); rejected or failed submissions keep the
 * form state so nothing is retyped.
 */

import { type AnnotationApiLike, type Task, SubmissionRejected } from "./api.js";
import {
  type Question,
  OPTION_INFO,
  QUESTION_NOTES,
  QUESTION_TITLES,
} from "./schema.js";
import {
  type Draft,
  chooseQ1,
  draftViolations,
  emptyDraft,
  toggleOption,
  toPayload,
  visibleQuestions,
} from "./form.js";
import { attachKeyboard, type KeyBindings } from "./keyboard.js";

export interface TaskViewOptions {
  api: AnnotationApiLike;
  annotator: string;
  root: HTMLElement;
  /** Timestamp source in seconds; injectable for tests. */
  now?: () => number;
}

export interface TaskViewHandle {
  start(): Promise<void>;
  destroy(): void;
}

type Phase = "loading" | "task" | "done" | "error";

const MULTISELECT: readonly ("q2" | "q3" | "q4")[] = ["q2", "q3", "q4"];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [name, value] of Object.entries(attrs)) {
    node.setAttribute(name, value);
  }
  for (const child of children) {
    node.append(typeof child === "string" ? document.createTextNode(child) : child);
  }
  return node;
}

function firstUnanswered(draft: Draft, questions: Question[]): Question | null {
  for (const question of questions) {
    if (question === "q1" ? draft.q1 === null : draft[question].size === 0) return question;
  }
  return null;
}

export function createTaskView(options: TaskViewOptions): TaskViewHandle {
  const { api, annotator, root } = options;
  const now = options.now ?? (() => Date.now() / 1000);

  let task: Task | null = null;
  let draft: Draft = emptyDraft();
  let active: Question = "q1";
  let progress = { completed: 0, total: 0 };
  let serverViolations: string[] = [];
  let networkError = "";
  let offerRevision = false;
  let submitting = false;

  const detachKeyboard = attachKeyboard(root.ownerDocument, currentBindings);

  function emit(phase: Phase): void {
    root.dispatchEvent(
      new CustomEvent("annotate:state", {
        detail: { phase, taskId: task ? task.task_id : null },
        bubbles: true,
      }),
    );
  }

  function ensureActive(): void {
    const questions = visibleQuestions(draft);
    if (!questions.includes(active)) {
      active = firstUnanswered(draft, questions) ?? questions[questions.length - 1] ?? "q1";
    }
  }

  function advanceActive(): void {
    const questions = visibleQuestions(draft);
    active = firstUnanswered(draft, questions) ?? questions[questions.length - 1] ?? "q1";
  }

  function currentBindings(): KeyBindings {
    if (task === null) return {};
    const bindings: KeyBindings = { enter: handleEnter };
    const optionIds = OPTION_INFO[active].map((info) => info.id);
    optionIds.slice(0, 9).forEach((option, index) => {
      bindings[String(index + 1)] = () => selectOption(active, option);
    });
    return bindings;
  }

  function handleEnter(): void {
    const questions = visibleQuestions(draft);
    const index = questions.indexOf(active);
    if (index >= 0 && index < questions.length - 1) {
      active = questions[index + 1] ?? active;
      renderTask();
      return;
    }
    void trySubmit();
  }

  function selectOption(question: Question, option: string): void {
    if (question === "q1") {
      chooseQ1(draft, option);
      advanceActive();
    } else {
      toggleOption(draft, question, option);
      ensureActive();
    }
    serverViolations = [];
    renderTask();
  }

  async function loadNext(): Promise<void> {
    render(el("p", { class: "status" }, ["Loading the next task..."]));
    try {
      const response = await api.nextTask(annotator);
      progress = { completed: response.completed, total: response.total };
      if (response.done || response.task === null) {
        task = null;
        renderDone();
        emit("done");
        return;
      }
      task = response.task;
      draft = emptyDraft();
      active = "q1";
      serverViolations = [];
      networkError = "";
      offerRevision = false;
      renderTask();
      emit("task");
    } catch (error) {
      task = null;
      renderLoadError(error instanceof Error ? error.message : String(error));
      emit("error");
    }
  }

  async function trySubmit(): Promise<void> {
    if (task === null || submitting) return;
    if (draftViolations(draft).length > 0) {
      renderTask();
      return;
    }
    submitting = true;
    renderTask();
    const payload = toPayload(draft, task.task_id, annotator, now());
    try {
      await api.submit(payload);
      submitting = false;
      await loadNext();
    } catch (error) {
      submitting = false;
      if (error instanceof SubmissionRejected) {
        serverViolations = error.violations;
        offerRevision = error.violations.some((v) => v.includes("revision"));
        renderTask();
        root.dispatchEvent(
          new CustomEvent("annotate:rejected", {
            detail: { violations: error.violations },
            bubbles: true,
          }),
        );
      } else {
        networkError = error instanceof Error ? error.message : String(error);
        renderTask();
        root.dispatchEvent(new CustomEvent("annotate:network-error", { bubbles: true }));
      }
    }
  }

  function render(...nodes: Node[]): void {
    root.replaceChildren(...nodes);
  }

  function renderDone(): void {
    render(
      el("section", { class: "done-screen" }, [
        el("h2", {}, ["All tasks annotated"]),
        el("p", {}, [
          `You completed ${progress.completed} of ${progress.total} tasks. Thank you!`,
        ]),
        el("p", {}, [
          el("a", { class: "export-link", href: api.exportUrl() }, [
            "Download the annotation log (JSONL)",
          ]),
        ]),
        el("p", {}, [
          el("a", { href: "#/agreement" }, ["Open the agreement dashboard"]),
        ]),
      ]),
    );
  }

  function renderLoadError(message: string): void {
    const retry = el("button", { type: "button", class: "retry" }, ["Retry"]);
    retry.addEventListener("click", () => void loadNext());
    render(
      el("section", { class: "load-error" }, [
        el("p", { class: "error-banner" }, [`Could not reach the service: ${message}`]),
        retry,
      ]),
    );
  }

  function renderCaption(current: Task): HTMLElement {
    const { char_start, char_end } = current.target_label;
    return el("p", { class: "caption" }, [
      current.caption.slice(0, char_start),
      el("mark", {}, [current.caption.slice(char_start, char_end)]),
      current.caption.slice(char_end),
    ]);
  }

  function renderQuestion(question: Question): HTMLElement {
    const isActive = question === active;
    const fieldset = el("fieldset", {
      class: `question${isActive ? " active" : ""}`,
      "data-question": question,
    });
    fieldset.append(el("legend", {}, [`${question.toUpperCase()} - ${QUESTION_TITLES[question]}`]));
    const note = QUESTION_NOTES[question];
    if (note) fieldset.append(el("p", { class: "note" }, [note]));
    OPTION_INFO[question].forEach((info, index) => {
      const pressed =
        question === "q1" ? draft.q1 === info.id : draft[question].has(info.id);
      const button = el(
        "button",
        {
          type: "button",
          class: "option",
          "data-option": info.id,
          "aria-pressed": String(pressed),
        },
        [
          ...(isActive && index < 9 ? [el("kbd", {}, [String(index + 1)])] : []),
          el("span", { class: "option-label" }, [info.label]),
          el("small", { class: "option-help" }, [info.help]),
        ],
      );
      button.addEventListener("click", () => selectOption(question, info.id));
      fieldset.append(button);
    });
    return fieldset;
  }

  function renderTask(): void {
    const current = task;
    if (current === null) return;
    const header = el("header", { class: "progress" }, [
      `Task ${Math.min(progress.completed + 1, progress.total)} of ${progress.total}`,
      el("span", { class: "annotator" }, [annotator]),
    ]);

    const image = el("img", {
      class: "task-image",
      src: current.image_ref,
      alt: `image for ${current.target_label.category}`,
    });
    image.addEventListener("error", () => {
      image.hidden = true;
    });
    const card = el("section", { class: "task-card" }, [
      image,
      el("code", { class: "image-ref" }, [current.image_ref]),
      renderCaption(current),
      el("p", { class: "target" }, [
        "Label under review: ",
        el("strong", {}, [current.target_label.category]),
      ]),
    ]);

    const form = el("form", { class: "question-form" });
    const shown = visibleQuestions(draft);
    form.append(renderQuestion("q1"));
    for (const question of MULTISELECT) {
      if (shown.includes(question)) form.append(renderQuestion(question));
    }

    const notes = el("input", {
      type: "text",
      class: "free-text",
      placeholder: "anything worth flagging",
    }) as HTMLInputElement;
    notes.value = draft.freeText;
    notes.addEventListener("input", () => {
      draft.freeText = notes.value;
    });
    form.append(el("label", { class: "notes" }, ["Notes ", notes]));

    const messages = el("div", { class: "violations" });
    if (networkError) {
      const retry = el("button", { type: "button", class: "retry" }, ["Retry submission"]);
      retry.addEventListener("click", () => void trySubmit());
      messages.append(
        el("p", { class: "error-banner" }, [
          `Could not reach the service (${networkError}); your answers are kept below.`,
        ]),
        retry,
      );
    }
    if (serverViolations.length > 0) {
      messages.append(
        el(
          "ul",
          { class: "server-violations" },
          serverViolations.map((violation) => el("li", {}, [violation])),
        ),
      );
      if (offerRevision) {
        const revise = el("button", { type: "button", class: "revise" }, [
          "Resubmit as revision",
        ]);
        revise.addEventListener("click", () => {
          draft.revision = true;
          void trySubmit();
        });
        messages.append(revise);
      }
    }
    const hints = draftViolations(draft);
    if (hints.length > 0) {
      messages.append(
        el("ul", { class: "hints" }, hints.map((hint) => el("li", {}, [hint]))),
      );
    }
    form.append(messages);

    const submit = el("button", { type: "submit", class: "submit" }, [
      submitting ? "Submitting..." : "Submit and continue",
    ]) as HTMLButtonElement;
    submit.disabled = hints.length > 0 || submitting;
    form.append(submit);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void trySubmit();
    });

    render(header, card, form);
  }

  return {
    start: () => loadNext(),
    destroy: () => {
      detachKeyboard();
      root.replaceChildren();
    },
  };
}
