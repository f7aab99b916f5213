/**
 * App shell: annotator sign-in, tab navigation, view wiring.
 *
 * The annotator name travels in the location hash (#/annotate?annotator=ana)
 * so a reload resumes the session; nothing is persisted in browser storage.
 */

import { AnnotationApi, type AnnotationApiLike } from "./api.js";
import { createAgreementView } from "./agreementView.js";
import { createTaskView, type TaskViewHandle } from "./taskView.js";

export interface AppOptions {
  api?: AnnotationApiLike;
}

export interface AppHandle {
  destroy(): void;
}

interface Route {
  view: "annotate" | "agreement";
  annotator: string;
}

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

export function parseRoute(hash: string): Route {
  const trimmed = hash.replace(/^#\/?/, "");
  const [path = "", query = ""] = trimmed.split("?", 2);
  const view = path === "agreement" ? "agreement" : "annotate";
  const annotator = new URLSearchParams(query).get("annotator") ?? "";
  return { view, annotator };
}

export function routeHash(route: Route): string {
  const query = route.annotator ? `?${new URLSearchParams({ annotator: route.annotator })}` : "";
  return `#/${route.view}${query}`;
}

export function startApp(root: HTMLElement, options: AppOptions = {}): AppHandle {
  const api = options.api ?? new AnnotationApi();
  const doc = root.ownerDocument;
  const win = doc.defaultView;
  if (win === null) throw new Error("app root must be attached to a window");

  let taskView: TaskViewHandle | null = null;

  const tabs = el("nav", { class: "tabs" });
  const annotateTab = el("a", { class: "tab", "data-view": "annotate", href: "#/annotate" }, [
    "Annotate",
  ]);
  const agreementTab = el("a", { class: "tab", "data-view": "agreement", href: "#/agreement" }, [
    "Agreement",
  ]);
  tabs.append(annotateTab, agreementTab);
  const main = el("main", { class: "view" });
  root.replaceChildren(el("h1", {}, ["Caption label annotation"]), tabs, main);

  function teardownTaskView(): void {
    if (taskView !== null) {
      taskView.destroy();
      taskView = null;
    }
  }

  function renderSignIn(route: Route): void {
    const input = el("input", {
      type: "text",
      class: "annotator-name",
      placeholder: "annotator name",
    }) as HTMLInputElement;
    const start = el("button", { type: "submit", class: "start" }, ["Start annotating"]);
    const form = el("form", { class: "sign-in" }, [
      el("p", {}, ["Enter your annotator name to begin."]),
      el("label", {}, ["Annotator ", input]),
      start,
    ]);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const name = input.value.trim();
      if (name === "") return;
      win!.location.hash = routeHash({ view: route.view, annotator: name });
    });
    main.replaceChildren(form);
  }

  function apply(): void {
    const route = parseRoute(win!.location.hash);
    for (const tab of [annotateTab, agreementTab]) {
      const current = tab.getAttribute("data-view") === route.view;
      tab.classList.toggle("current", current);
      if (route.annotator) {
        tab.setAttribute("href", routeHash({
          view: tab.getAttribute("data-view") === "agreement" ? "agreement" : "annotate",
          annotator: route.annotator,
        }));
      }
    }
    teardownTaskView();
    if (route.view === "agreement") {
      const container = el("div", { class: "agreement-root" });
      main.replaceChildren(container);
      void createAgreementView({ api, root: container }).refresh();
      return;
    }
    if (route.annotator === "") {
      renderSignIn(route);
      return;
    }
    const container = el("div", { class: "annotate-root" });
    main.replaceChildren(container);
    taskView = createTaskView({ api, annotator: route.annotator, root: container });
    void taskView.start();
  }

  const onHashChange = () => apply();
  win.addEventListener("hashchange", onHashChange);
  apply();

  return {
    destroy: () => {
      win.removeEventListener("hashchange", onHashChange);
      teardownTaskView();
      root.replaceChildren();
    },
  };
}
