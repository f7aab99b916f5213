import { afterEach, describe, expect, it } from "vitest";

import type { AnnotationApiLike, NextTaskResponse, Task } from "../src/api.js";
import { SubmissionRejected } from "../src/api.js";
import { validate, type AnnotationPayload } from "../src/schema.js";
import { createTaskView, type TaskViewHandle } from "../src/taskView.js";

function makeTask(taskId: number, category = "dog"): Task {
  const caption = `a ${category} sits by the table`;
  return {
    task_id: taskId,
    record_id: `r${taskId}`,
    image_ref: `images/${taskId}.png`,
    caption,
    target_label: { category, char_start: 2, char_end: 2 + category.length },
  };
}

interface Stub {
  api: AnnotationApiLike;
  submitted: AnnotationPayload[];
  submitQueue: Error[];
  failNextLoad(error: Error): void;
}

function makeStub(tasks: Task[]): Stub {
  const submitted: AnnotationPayload[] = [];
  const submitQueue: Error[] = [];
  let accepted = 0;
  let loadFailure: Error | null = null;
  const api: AnnotationApiLike = {
    async nextTask(): Promise<NextTaskResponse> {
      if (loadFailure !== null) {
        const failure = loadFailure;
        loadFailure = null;
        throw failure;
      }
      if (accepted >= tasks.length) {
        return { done: true, task: null, completed: accepted, total: tasks.length };
      }
      return { done: false, task: tasks[accepted]!, completed: accepted, total: tasks.length };
    },
    async submit(payload) {
      const failure = submitQueue.shift();
      if (failure) throw failure;
      submitted.push(payload);
      accepted += 1;
    },
    async agreement() {
      throw new Error("not used here");
    },
    async disagreements() {
      return [];
    },
    exportUrl: () => "/api/export",
  };
  return {
    api,
    submitted,
    submitQueue,
    failNextLoad: (error) => {
      loadFailure = error;
    },
  };
}

function onceEvent(target: EventTarget, type: string): Promise<CustomEvent> {
  return new Promise((resolve) => {
    target.addEventListener(type, (event) => resolve(event as CustomEvent), { once: true });
  });
}

const mounted: { root: HTMLElement; view: TaskViewHandle }[] = [];

async function mountView(stub: Stub, annotator = "ana") {
  const root = document.createElement("div");
  document.body.append(root);
  const view = createTaskView({ api: stub.api, annotator, root, now: () => 42 });
  mounted.push({ root, view });
  const state = onceEvent(root, "annotate:state");
  await view.start();
  await state;
  return { root, view };
}

afterEach(() => {
  while (mounted.length > 0) {
    const { root, view } = mounted.pop()!;
    view.destroy();
    root.remove();
  }
});

function click(root: HTMLElement, selector: string): void {
  const node = root.querySelector(selector);
  if (node === null) throw new Error(`nothing matches ${selector}`);
  (node as HTMLElement).click();
}

function pressKey(key: string, target: EventTarget = document): void {
  target.dispatchEvent(new KeyboardEvent("keydown", { key, bubbles: true, cancelable: true }));
}

function submitButton(root: HTMLElement): HTMLButtonElement {
  return root.querySelector(".submit") as HTMLButtonElement;
}

function forceSubmit(root: HTMLElement): void {
  const form = root.querySelector("form.question-form");
  form!.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
}

function pressedOptions(root: HTMLElement, question: string): string[] {
  return [...root.querySelectorAll(`fieldset[data-question="${question}"] [aria-pressed="true"]`)]
    .map((node) => node.getAttribute("data-option") ?? "")
    .sort();
}

describe("task rendering", () => {
  it("shows the caption with the target label highlighted", async () => {
    const stub = makeStub([makeTask(0)]);
    const { root } = await mountView(stub);
    expect(root.querySelector(".caption mark")?.textContent).toBe("dog");
    expect(root.querySelector(".caption")?.textContent).toBe("a dog sits by the table");
    expect(root.querySelector(".image-ref")?.textContent).toBe("images/0.png");
    expect(root.querySelector("img.task-image")?.getAttribute("src")).toBe("images/0.png");
    expect(root.querySelector(".progress")?.textContent).toContain("Task 1 of 1");
  });

  it("starts with q1 alone and submission disabled", async () => {
    const stub = makeStub([makeTask(0)]);
    const { root } = await mountView(stub);
    const questions = [...root.querySelectorAll("fieldset[data-question]")].map((fs) =>
      fs.getAttribute("data-question"),
    );
    expect(questions).toEqual(["q1"]);
    expect(submitButton(root).disabled).toBe(true);
  });

  it("reveals q2 and q4 for absent, never q3", async () => {
    const stub = makeStub([makeTask(0)]);
    const { root } = await mountView(stub);
    click(root, '[data-question="q1"] [data-option="absent"]');
    const questions = [...root.querySelectorAll("fieldset[data-question]")].map((fs) =>
      fs.getAttribute("data-question"),
    );
    expect(questions).toEqual(["q1", "q2", "q4"]);
  });

  it("keeps q4 hidden for a visible object without defects, and enables submit", async () => {
    const stub = makeStub([makeTask(0)]);
    const { root } = await mountView(stub);
    click(root, '[data-question="q1"] [data-option="visible"]');
    click(root, '[data-question="q3"] [data-option="none"]');
    const questions = [...root.querySelectorAll("fieldset[data-question]")].map((fs) =>
      fs.getAttribute("data-question"),
    );
    expect(questions).toEqual(["q1", "q3"]);
    expect(submitButton(root).disabled).toBe(false);
  });

  it("reveals q4 once a defect is picked", async () => {
    const stub = makeStub([makeTask(0)]);
    const { root } = await mountView(stub);
    click(root, '[data-question="q1"] [data-option="visible"]');
    click(root, '[data-question="q3"] [data-option="occlusion"]');
    expect(root.querySelector('fieldset[data-question="q4"]')).not.toBeNull();
  });

  it("keeps none exclusive under clicks", async () => {
    const stub = makeStub([makeTask(0)]);
    const { root } = await mountView(stub);
    click(root, '[data-question="q1"] [data-option="visible"]');
    click(root, '[data-question="q3"] [data-option="occlusion"]');
    click(root, '[data-question="q3"] [data-option="atypical"]');
    expect(pressedOptions(root, "q3")).toEqual(["atypical", "occlusion"]);
    click(root, '[data-question="q3"] [data-option="none"]');
    expect(pressedOptions(root, "q3")).toEqual(["none"]);
    click(root, '[data-question="q3"] [data-option="occlusion"]');
    expect(pressedOptions(root, "q3")).toEqual(["occlusion"]);
  });
});

describe("submission guard", () => {
  // Walk every selection pattern reachable with clicks and check the button
  // state matches "every revealed question answered"; enabled submissions
  // must pass the rule mirror, disabled ones must never reach the API.
  it("submits exactly the drafts with every revealed question answered", async () => {
    const scripts = {
      q2: [[], ["co_occurring_context"], ["none"]],
      q3: [[], ["occlusion"], ["none"]],
      q4: [[], ["past"], ["none"]],
    } as const;
    for (const q1 of ["visible", "partially_visible", "absent", "unclear"]) {
      for (const q2 of scripts.q2) {
        for (const q3 of scripts.q3) {
          for (const q4 of scripts.q4) {
            const stub = makeStub([makeTask(0)]);
            const { root, view } = await mountView(stub);
            click(root, `[data-question="q1"] [data-option="${q1}"]`);
            for (const [question, sequence] of [
              ["q2", q2],
              ["q3", q3],
              ["q4", q4],
            ] as const) {
              for (const option of sequence) {
                if (root.querySelector(`fieldset[data-question="${question}"]`) === null) break;
                click(root, `fieldset[data-question="${question}"] [data-option="${option}"]`);
              }
            }
            const answered = [...root.querySelectorAll("fieldset[data-question]")].every(
              (fs) => fs.querySelector('[aria-pressed="true"]') !== null,
            );
            const button = submitButton(root);
            expect(button.disabled, `${q1}/${q2}/${q3}/${q4}`).toBe(!answered);
            if (answered) {
              const state = onceEvent(root, "annotate:state");
              click(root, ".submit");
              await state;
              expect(stub.submitted).toHaveLength(1);
              expect(validate(stub.submitted[0]!)).toEqual([]);
            } else {
              forceSubmit(root);
              await Promise.resolve();
              expect(stub.submitted).toHaveLength(0);
            }
            view.destroy();
            root.remove();
          }
        }
      }
    }
  });

  it("never loses the draft when the service rejects", async () => {
    const stub = makeStub([makeTask(0)]);
    stub.submitQueue.push(new SubmissionRejected(["q2: a made-up rejection"]));
    const { root } = await mountView(stub);
    click(root, '[data-question="q1"] [data-option="absent"]');
    click(root, '[data-question="q2"] [data-option="similar_object"]');
    click(root, '[data-question="q4"] [data-option="past"]');
    const rejected = onceEvent(root, "annotate:rejected");
    click(root, ".submit");
    await rejected;
    expect(root.querySelector(".server-violations")?.textContent).toContain("made-up rejection");
    expect(pressedOptions(root, "q2")).toEqual(["similar_object"]);
    const state = onceEvent(root, "annotate:state");
    click(root, ".submit");
    await state;
    expect(stub.submitted).toHaveLength(1);
  });

  it("offers a revision resubmit when the task was already annotated", async () => {
    const stub = makeStub([makeTask(0)]);
    stub.submitQueue.push(
      new SubmissionRejected(["task 0 already annotated by ana; set revision to supersede"]),
    );
    const { root } = await mountView(stub);
    click(root, '[data-question="q1"] [data-option="unclear"]');
    const rejected = onceEvent(root, "annotate:rejected");
    click(root, ".submit");
    await rejected;
    const state = onceEvent(root, "annotate:state");
    click(root, ".revise");
    await state;
    expect(stub.submitted).toHaveLength(1);
    expect(stub.submitted[0]!.revision).toBe(true);
  });

  it("keeps everything typed through a network failure and retries", async () => {
    const stub = makeStub([makeTask(0)]);
    stub.submitQueue.push(new TypeError("fetch failed"));
    const { root } = await mountView(stub);
    click(root, '[data-question="q1"] [data-option="absent"]');
    click(root, '[data-question="q2"] [data-option="co_occurring_context"]');
    click(root, '[data-question="q4"] [data-option="beyond_image"]');
    const notes = root.querySelector(".free-text") as HTMLInputElement;
    notes.value = "possibly a mural";
    notes.dispatchEvent(new Event("input", { bubbles: true }));
    const failed = onceEvent(root, "annotate:network-error");
    click(root, ".submit");
    await failed;
    expect(root.querySelector(".error-banner")?.textContent).toContain("fetch failed");
    expect(pressedOptions(root, "q2")).toEqual(["co_occurring_context"]);
    expect((root.querySelector(".free-text") as HTMLInputElement).value).toBe("possibly a mural");
    const state = onceEvent(root, "annotate:state");
    click(root, ".retry");
    await state;
    expect(stub.submitted).toHaveLength(1);
    expect(stub.submitted[0]!.free_text).toBe("possibly a mural");
    expect(stub.submitted[0]!.timestamp).toBe(42);
  });

  it("retries a failed task fetch", async () => {
    const stub = makeStub([makeTask(0)]);
    stub.failNextLoad(new TypeError("fetch failed"));
    const { root } = await mountView(stub);
    expect(root.querySelector(".load-error")).not.toBeNull();
    const state = onceEvent(root, "annotate:state");
    click(root, ".retry");
    await state;
    expect(root.querySelector(".caption")).not.toBeNull();
  });
});

describe("keyboard shortcuts", () => {
  it("walks a whole task with digits and enter", async () => {
    const stub = makeStub([makeTask(0)]);
    const { root } = await mountView(stub);
    pressKey("3");
    expect(pressedOptions(root, "q1")).toEqual(["absent"]);
    expect(root.querySelector("fieldset.active")?.getAttribute("data-question")).toBe("q2");
    pressKey("1");
    expect(pressedOptions(root, "q2")).toEqual(["co_occurring_context"]);
    pressKey("Enter");
    expect(root.querySelector("fieldset.active")?.getAttribute("data-question")).toBe("q4");
    pressKey("2");
    expect(pressedOptions(root, "q4")).toEqual(["past"]);
    const state = onceEvent(root, "annotate:state");
    pressKey("Enter");
    await state;
    expect(stub.submitted).toHaveLength(1);
    expect(stub.submitted[0]).toMatchObject({
      q1: "absent",
      q2: ["co_occurring_context"],
      q3: null,
      q4: ["past"],
      timestamp: 42,
    });
  });

  it("shows digit hints only on the active question", async () => {
    const stub = makeStub([makeTask(0)]);
    const { root } = await mountView(stub);
    click(root, '[data-question="q1"] [data-option="partially_visible"]');
    expect(root.querySelectorAll('fieldset[data-question="q3"] kbd').length).toBeGreaterThan(0);
    expect(root.querySelectorAll('fieldset[data-question="q1"] kbd')).toHaveLength(0);
  });

  it("leaves digits alone while typing notes", async () => {
    const stub = makeStub([makeTask(0)]);
    const { root } = await mountView(stub);
    click(root, '[data-question="q1"] [data-option="absent"]');
    const notes = root.querySelector(".free-text") as HTMLInputElement;
    pressKey("1", notes);
    expect(pressedOptions(root, "q2")).toEqual([]);
  });

  it("stores nothing outside the in-flight form", async () => {
    const stub = makeStub([makeTask(0)]);
    const { root } = await mountView(stub);
    pressKey("4");
    const state = onceEvent(root, "annotate:state");
    pressKey("Enter");
    await state;
    expect(localStorage.length).toBe(0);
    expect(sessionStorage.length).toBe(0);
  });
});

describe("done screen", () => {
  it("links to the export once the pool is finished", async () => {
    const stub = makeStub([makeTask(0)]);
    const { root } = await mountView(stub);
    click(root, '[data-question="q1"] [data-option="unclear"]');
    const state = onceEvent(root, "annotate:state");
    click(root, ".submit");
    const detail = (await state).detail as { phase: string };
    expect(detail.phase).toBe("done");
    expect(root.querySelector(".done-screen")).not.toBeNull();
    expect(root.querySelector("a.export-link")?.getAttribute("href")).toBe("/api/export");
    expect(root.textContent).toContain("1 of 1");
  });
});
