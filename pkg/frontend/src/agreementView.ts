/**
 * Read-only agreement dashboard.
 *
 * Shows the per-question kappa table and the per-task disagreement list the
 * service computes; values are displayed as delivered, never recomputed.
 * With fewer than two annotators an empty-state message is shown instead.
 */

import type { AnnotationApiLike, Disagreement } from "./api.js";
import { QUESTION_TITLES, type Question } from "./schema.js";

export interface AgreementViewOptions {
  api: AnnotationApiLike;
  root: HTMLElement;
}

export interface AgreementViewHandle {
  refresh(): Promise<void>;
}

const QUESTIONS: readonly Question[] = ["q1", "q2", "q3", "q4"];

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

export function formatMetric(value: number | null | undefined): string {
  return value === null || value === undefined ? "n/a" : value.toFixed(2);
}

function answerText(answer: string | string[] | null): string {
  if (answer === null) return "(not asked)";
  return Array.isArray(answer) ? answer.join(", ") : answer;
}

function disagreementRow(row: Disagreement): HTMLElement {
  const annotators = Object.keys(row.answers).sort();
  const details = el("details", { class: "disagreement", id: `task-${row.task_id}` }, [
    el("summary", {}, [
      el("a", { class: "task-link", href: `#task-${row.task_id}` }, [`task ${row.task_id}`]),
      ` - ${row.question}`,
    ]),
    el(
      "ul",
      { class: "answers" },
      annotators.map((annotator) =>
        el("li", {}, [el("strong", {}, [annotator]), `: ${answerText(row.answers[annotator] ?? null)}`]),
      ),
    ),
  ]);
  return details;
}

export function createAgreementView(options: AgreementViewOptions): AgreementViewHandle {
  const { api, root } = options;

  async function refresh(): Promise<void> {
    root.replaceChildren(el("p", { class: "status" }, ["Loading agreement..."]));
    try {
      const [agreement, disagreements] = await Promise.all([
        api.agreement(),
        api.disagreements(),
      ]);
      renderReport(agreement, disagreements);
    } catch (error) {
      const retry = el("button", { type: "button", class: "retry" }, ["Retry"]);
      retry.addEventListener("click", () => void refresh());
      root.replaceChildren(
        el("p", { class: "error-banner" }, [
          `Could not reach the service: ${error instanceof Error ? error.message : String(error)}`,
        ]),
        retry,
      );
    }
  }

  function renderReport(
    agreement: Awaited<ReturnType<AnnotationApiLike["agreement"]>>,
    disagreements: Disagreement[],
  ): void {
    if (!agreement.ready) {
      root.replaceChildren(
        el("section", { class: "agreement-empty" }, [
          el("h2", {}, ["Agreement"]),
          el("p", { class: "empty-state" }, [
            `Not enough annotators yet: ${agreement.detail}`,
          ]),
        ]),
      );
      return;
    }

    const table = el("table", { class: "kappa-table" });
    table.append(
      el("thead", {}, [
        el("tr", {}, [
          el("th", {}, ["Question"]),
          el("th", {}, ["Kappa"]),
          el("th", {}, ["Disagreement"]),
          el("th", {}, ["Shared"]),
        ]),
      ]),
    );
    const body = el("tbody");
    for (const question of QUESTIONS) {
      body.append(
        el("tr", { "data-question": question }, [
          el("th", { title: QUESTION_TITLES[question] }, [question.toUpperCase()]),
          el("td", { class: "kappa" }, [formatMetric(agreement.kappa[question])]),
          el("td", { class: "disagreement-rate" }, [formatMetric(agreement.disagreement[question])]),
          el("td", { class: "n-shared" }, [String(agreement.n_shared[question] ?? 0)]),
        ]),
      );
      const coarse = agreement.disagreement[`${question}_coarse`];
      if (coarse !== undefined) {
        body.append(
          el("tr", { class: "coarse", "data-question": `${question}_coarse` }, [
            el("th", {}, [`${question.toUpperCase()} (coarse)`]),
            el("td", { class: "kappa" }, ["-"]),
            el("td", { class: "disagreement-rate" }, [formatMetric(coarse)]),
            el("td", { class: "n-shared" }, [String(agreement.n_shared[question] ?? 0)]),
          ]),
        );
      }
    }
    table.append(body);

    const list = el("section", { class: "disagreement-list" }, [
      el("h3", {}, [`Disagreements (${disagreements.length})`]),
      ...(disagreements.length === 0
        ? [el("p", { class: "empty-state" }, ["The annotators agree on every shared task."])]
        : disagreements.map(disagreementRow)),
    ]);

    root.replaceChildren(
      el("section", { class: "agreement-report" }, [
        el("h2", {}, ["Agreement"]),
        table,
        list,
      ]),
    );
  }

  return { refresh };
}
