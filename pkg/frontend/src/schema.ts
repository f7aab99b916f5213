/**
 * Annotation schema mirror.
 *
 * Option ids, conditional rules, and validation are kept logically identical
 * to the service's schema module, so the form can refuse anything the server
 * would reject before it goes on the wire. The end-to-end suite cross-checks
 * every presence combination against the live service.
 */

export type Question = "q1" | "q2" | "q3" | "q4";

export const Q1_OPTIONS = ["visible", "partially_visible", "absent", "unclear"] as const;
export const Q2_OPTIONS = ["co_occurring_context", "similar_object", "none", "other"] as const;
export const Q3_OPTIONS = ["occlusion", "key_parts_missing", "atypical", "none", "other"] as const;
export const Q4_OPTIONS = [
  "beyond_image",
  "past",
  "prepositional_phrase",
  "non_literal",
  "noun_modifier",
  "word_sense",
  "named_entity",
  "none",
  "other",
] as const;

export const QUESTION_OPTIONS: Record<Question, readonly string[]> = {
  q1: Q1_OPTIONS,
  q2: Q2_OPTIONS,
  q3: Q3_OPTIONS,
  q4: Q4_OPTIONS,
};

export const QUESTION_TITLES: Record<Question, string> = {
  q1: "How much of the object is present?",
  q2: "The object is absent. What in the image could explain the mention?",
  q3: "Does the object have a visual defect?",
  q4: "Which linguistic cues explain the mention?",
};

/** Multiple indicators may apply; shown under the Q4 legend. */
export const QUESTION_NOTES: Partial<Record<Question, string>> = {
  q3: "Select every defect that applies.",
  q4: "Multiple indicators may apply; select all of them.",
};

export interface OptionInfo {
  id: string;
  label: string;
  help: string;
}

/** Option labels and rubric text, quoting the category definitions. */
export const OPTION_INFO: Record<Question, readonly OptionInfo[]> = {
  q1: [
    { id: "visible", label: "Visible", help: "fully visible: 75% or more of the object from this viewpoint" },
    { id: "partially_visible", label: "Partially visible", help: "less than 75% of the object is shown" },
    { id: "absent", label: "Absent", help: "the object is completely absent from the image" },
    { id: "unclear", label: "Unclear", help: "cannot tell from the image" },
  ],
  q2: [
    {
      id: "co_occurring_context",
      label: "Co-occurring context",
      help: 'traditionally co-occurring context is present ("boat" and "water")',
    },
    {
      id: "similar_object",
      label: "Similar object",
      help: 'a semantically similar object is present instead ("cake" and "bread", "car" and "truck")',
    },
    { id: "none", label: "No similar context", help: "nothing in the image relates to the mention" },
    { id: "other", label: "Other", help: "explain in the notes field" },
  ],
  q3: [
    { id: "occlusion", label: "Occluded", help: "another object blocks part of it" },
    { id: "key_parts_missing", label: "Key parts missing", help: "defining parts are cut off or not depicted" },
    { id: "atypical", label: "Atypical appearance", help: "e.g. knitted animal, hand-drawn object" },
    { id: "none", label: "No defects", help: "the object looks ordinary" },
    { id: "other", label: "Other", help: "explain in the notes field" },
  ],
  q4: [
    {
      id: "beyond_image",
      label: "Beyond the image",
      help: "the caption discusses events or information beyond what the image shows",
    },
    { id: "past", label: "Describes the past", help: 'e.g. "earlier that day, my dog peed on a flower"' },
    {
      id: "prepositional_phrase",
      label: "Prepositional phrase",
      help: 'describes the setting rather than an object, e.g. "on a train"',
    },
    { id: "non_literal", label: "Non-literal", help: 'metaphor or simile, e.g. "elephant in the room"' },
    { id: "noun_modifier", label: "Noun modifier", help: 'the word modifies another noun, e.g. "car park"' },
    { id: "word_sense", label: "Different word sense", help: 'e.g. "bed" vs "river bed"' },
    { id: "named_entity", label: "Named entity", help: 'part of a proper name, e.g. "Super Bowl Party"' },
    { id: "none", label: "No indicator", help: "no linguistic cue applies" },
    { id: "other", label: "Other", help: "explain in the notes field" },
  ],
};

/** The answers of one submission as they travel to the service. */
export interface AnnotationPayload {
  task_id: number;
  annotator_id: string;
  q1: string;
  q2: string[] | null;
  q3: string[] | null;
  q4: string[] | null;
  timestamp: number;
  free_text: string;
  revision: boolean;
}

/** A defect is any Q3 selection other than the bare "none". */
export function hasDefect(q3: Iterable<string> | null): boolean {
  if (q3 === null) return false;
  for (const option of q3) {
    if (option !== "none") return true;
  }
  return false;
}

export function q4Required(q1: string, q3: Iterable<string> | null): boolean {
  return q1 === "partially_visible" || q1 === "absent" || (q1 === "visible" && hasDefect(q3));
}

function checkMultiselect(
  name: string,
  value: string[] | null,
  options: readonly string[],
  violations: string[],
): void {
  if (value === null) return;
  const picked = new Set(value);
  const unknown = [...picked].filter((option) => !options.includes(option)).sort();
  if (unknown.length > 0) {
    violations.push(`${name}: unknown options ${JSON.stringify(unknown)}`);
  }
  if (picked.size === 0) {
    violations.push(`${name}: must select at least one option when present`);
  }
  if (picked.has("none") && picked.size > 1) {
    violations.push(`${name}: 'none' cannot be combined with other options`);
  }
}

/** All rule violations for a would-be submission; empty array means valid. */
export function validate(
  payload: Pick<AnnotationPayload, "q1" | "q2" | "q3" | "q4">,
): string[] {
  const violations: string[] = [];
  if (!(Q1_OPTIONS as readonly string[]).includes(payload.q1)) {
    violations.push(`q1: must be one of ${Q1_OPTIONS.join(", ")}, got ${JSON.stringify(payload.q1)}`);
    return violations;
  }
  checkMultiselect("q2", payload.q2, Q2_OPTIONS, violations);
  checkMultiselect("q3", payload.q3, Q3_OPTIONS, violations);
  checkMultiselect("q4", payload.q4, Q4_OPTIONS, violations);
  if (payload.q1 === "absent") {
    if (payload.q2 === null) violations.push("q2: required when the object is absent");
  } else if (payload.q2 !== null) {
    violations.push("q2: only annotated for absent objects");
  }
  if (payload.q1 === "visible" || payload.q1 === "partially_visible") {
    if (payload.q3 === null) violations.push("q3: required for visible or partially visible objects");
  } else if (payload.q3 !== null) {
    violations.push("q3: requires visibility");
  }
  if (q4Required(payload.q1, payload.q3)) {
    if (payload.q4 === null) {
      violations.push("q4: required for partial/absent objects or visible objects with a defect");
    }
  } else if (payload.q4 !== null) {
    violations.push("q4: only annotated with a visual defect or partial/no visibility");
  }
  return violations;
}
