/**
 * Draft state for one annotation form.
 *
 * Selections are kept per question, but only the questions the conditional
 * rules reveal are serialized. A hidden answer therefore never leaks into
 * the payload, which is what keeps every reachable submission server-legal.
 */

import {
  type AnnotationPayload,
  type Question,
  q4Required,
  validate,
} from "./schema.js";

export interface Draft {
  q1: string | null;
  q2: Set<string>;
  q3: Set<string>;
  q4: Set<string>;
  freeText: string;
  revision: boolean;
}

export function emptyDraft(): Draft {
  return {
    q1: null,
    q2: new Set(),
    q3: new Set(),
    q4: new Set(),
    freeText: "",
    revision: false,
  };
}

export function chooseQ1(draft: Draft, option: string): void {
  draft.q1 = option;
}

/** Toggle one multi-select option; "none" excludes everything else. */
export function toggleOption(draft: Draft, question: "q2" | "q3" | "q4", option: string): void {
  const selection = draft[question];
  if (selection.has(option)) {
    selection.delete(option);
    return;
  }
  if (option === "none") {
    selection.clear();
  } else {
    selection.delete("none");
  }
  selection.add(option);
}

function serialized(draft: Draft, question: "q2" | "q3" | "q4", visible: boolean): string[] | null {
  if (!visible || draft[question].size === 0) return null;
  return [...draft[question]].sort();
}

/** Questions the rules reveal for the current draft, in display order. */
export function visibleQuestions(draft: Draft): Question[] {
  const questions: Question[] = ["q1"];
  if (draft.q1 === null) return questions;
  if (draft.q1 === "absent") questions.push("q2");
  const q3Visible = draft.q1 === "visible" || draft.q1 === "partially_visible";
  if (q3Visible) questions.push("q3");
  if (q4Required(draft.q1, serialized(draft, "q3", q3Visible))) questions.push("q4");
  return questions;
}

/** Serialize the draft; hidden questions always become null. */
export function toPayload(
  draft: Draft,
  taskId: number,
  annotator: string,
  timestamp: number,
): AnnotationPayload {
  const visible = new Set(visibleQuestions(draft));
  return {
    task_id: taskId,
    annotator_id: annotator,
    q1: draft.q1 ?? "",
    q2: serialized(draft, "q2", visible.has("q2")),
    q3: serialized(draft, "q3", visible.has("q3")),
    q4: serialized(draft, "q4", visible.has("q4")),
    timestamp,
    free_text: draft.freeText,
    revision: draft.revision,
  };
}

/** Client-side violations for the draft as it would be submitted. */
export function draftViolations(draft: Draft): string[] {
  if (draft.q1 === null) return ["q1: choose one option to begin"];
  return validate(toPayload(draft, 0, "draft", 0));
}
