/**
 * End-to-end run against the real annotation service.
 *
 * Spawns the Python HTTP service, drives two scripted annotators through the
 * actual browser client (sign-in, conditional form, keyboardless clicks,
 * done screen), then checks the exported log against the server's own schema
 * validator and the dashboard kappas against the metrics module.
 */

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { AnnotationApi } from "../src/api.js";
import { startApp } from "../src/app.js";
import { Q1_OPTIONS, validate } from "../src/schema.js";

const QUESTIONS = ["q1", "q2", "q3", "q4"] as const;

interface Service {
  base: string;
  proc: ChildProcess;
  dir: string;
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.listen(0, "127.0.0.1", () => {
      const address = probe.address();
      probe.close(() => {
        if (address !== null && typeof address === "object") resolve(address.port);
        else reject(new Error("could not pick a port"));
      });
    });
  });
}

function taskLine(taskId: number): string {
  const category = taskId % 2 === 0 ? "dog" : "cat";
  return JSON.stringify({
    task_id: taskId,
    record_id: `r${String(taskId).padStart(4, "0")}`,
    image_ref: `images/${taskId}.png`,
    caption: `a ${category} sits by the table`,
    target_label: { category, char_start: 2, char_end: 2 + category.length },
  });
}

async function startService(taskCount: number): Promise<Service> {
  const dir = mkdtempSync(join(tmpdir(), "annotation-e2e-"));
  const tasksPath = join(dir, "tasks.jsonl");
  const lines = Array.from({ length: taskCount }, (_, i) => taskLine(i));
  writeFileSync(tasksPath, lines.join("\n") + "\n");
  const port = await freePort();
  const proc = spawn(
    "python3",
    [
      "-c",
      "from capvet.cli import main; import sys; raise SystemExit(main(sys.argv[1:]))",
      "annotate-serve",
      "--tasks",
      tasksPath,
      "--log",
      join(dir, "log.jsonl"),
      "--port",
      String(port),
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  let stderr = "";
  proc.stderr?.on("data", (chunk) => {
    stderr += String(chunk);
  });
  const base = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 60_000;
  for (;;) {
    if (proc.exitCode !== null) throw new Error(`service exited early:\n${stderr}`);
    try {
      const response = await fetch(`${base}/api/tasks/next?annotator=_probe`);
      if (response.ok) break;
    } catch {
      // still booting
    }
    if (Date.now() > deadline) throw new Error(`service never came up:\n${stderr}`);
    await sleep(150);
  }
  return { base, proc, dir };
}

async function stopService(service: Service | null): Promise<void> {
  if (service === null) return;
  await new Promise<void>((resolve) => {
    if (service.proc.exitCode !== null) {
      resolve();
      return;
    }
    const hardKill = setTimeout(() => service.proc.kill("SIGKILL"), 5_000);
    service.proc.once("exit", () => {
      clearTimeout(hardKill);
      resolve();
    });
    service.proc.kill("SIGTERM");
  });
  rmSync(service.dir, { recursive: true, force: true });
}

function pythonJson<T>(script: string, input: string): T {
  const stdout = execFileSync("python3", ["-c", script], { input, encoding: "utf8" });
  return JSON.parse(stdout) as T;
}

const VALIDATE_EXPORT = `
import json, sys
from capvet.annotation.schema import AnnotationRecord, validate
records = 0
violations = []
for line in sys.stdin:
    line = line.strip()
    if not line:
        continue
    record = AnnotationRecord.from_json(json.loads(line))
    records += 1
    violations.extend(f"task {record.task_id}/{record.annotator_id}: {v}" for v in validate(record))
print(json.dumps({"records": records, "violations": violations}))
`;

const KAPPA_FROM_EXPORT = `
import json, sys
from capvet.annotation.schema import AnnotationRecord
from capvet.metrics.agreement import agreement_summary
by_annotator = {}
for line in sys.stdin:
    line = line.strip()
    if not line:
        continue
    record = AnnotationRecord.from_json(json.loads(line))
    by_annotator.setdefault(record.annotator_id, {})[record.task_id] = record
summary = agreement_summary(by_annotator)
print(json.dumps({q: None if v is None else float(v) for q, v in summary["kappa"].items()}))
`;

interface Answer {
  q1: string;
  q2?: string[];
  q3?: string[];
  q4?: string[];
}

const ANA_PLAN: Record<number, Answer> = {
  0: { q1: "visible", q3: ["none"] },
  1: { q1: "visible", q3: ["none"] },
  2: { q1: "visible", q3: ["none"] },
  3: { q1: "visible", q3: ["none"] },
  4: { q1: "absent", q2: ["co_occurring_context"], q4: ["prepositional_phrase"] },
  5: { q1: "absent", q2: ["co_occurring_context"], q4: ["prepositional_phrase"] },
  6: { q1: "absent", q2: ["similar_object"], q4: ["prepositional_phrase"] },
  7: { q1: "partially_visible", q3: ["occlusion", "atypical"], q4: ["past"] },
  8: { q1: "partially_visible", q3: ["occlusion"], q4: ["past"] },
  9: { q1: "partially_visible", q3: ["occlusion"], q4: ["past"] },
};

const BEN_PLAN: Record<number, Answer> = {
  0: { q1: "visible", q3: ["none"] },
  1: { q1: "visible", q3: ["none"] },
  2: { q1: "visible", q3: ["none"] },
  3: { q1: "partially_visible", q3: ["occlusion"], q4: ["past"] },
  4: { q1: "absent", q2: ["co_occurring_context"], q4: ["prepositional_phrase"] },
  5: { q1: "absent", q2: ["similar_object"], q4: ["prepositional_phrase"] },
  6: { q1: "absent", q2: ["similar_object"], q4: ["prepositional_phrase"] },
  7: { q1: "partially_visible", q3: ["occlusion"], q4: ["past"] },
  8: { q1: "partially_visible", q3: ["occlusion"], q4: ["past"] },
  9: { q1: "absent", q2: ["none"], q4: ["none"] },
};

// Disagreements implied by the two plans, as (task_id, question) pairs.
const EXPECTED_DISAGREEMENTS = [
  [3, "q1"],
  [3, "q3"],
  [3, "q4"],
  [5, "q2"],
  [7, "q3"],
  [9, "q1"],
  [9, "q2"],
  [9, "q3"],
  [9, "q4"],
] as const;

function onceEvent(target: EventTarget, type: string): Promise<CustomEvent> {
  return new Promise((resolve) => {
    target.addEventListener(type, (event) => resolve(event as CustomEvent), { once: true });
  });
}

async function setHash(hash: string): Promise<void> {
  if (window.location.hash === hash) return;
  const settled = onceEvent(window, "hashchange");
  window.location.hash = hash;
  await settled;
}

function click(root: HTMLElement, selector: string): void {
  const node = root.querySelector(selector);
  if (node === null) throw new Error(`nothing matches ${selector}`);
  (node as HTMLElement).click();
}

async function waitFor(check: () => boolean, what: string): Promise<void> {
  const deadline = Date.now() + 10_000;
  while (!check()) {
    if (Date.now() > deadline) throw new Error(`timed out waiting for ${what}`);
    await sleep(25);
  }
}

interface SessionResult {
  rejections: number;
  tasksSeen: number[];
}

/** Complete every task in the pool through the real UI. */
async function driveSession(
  base: string,
  annotator: string,
  plan: Record<number, Answer>,
  signIn: boolean,
): Promise<SessionResult> {
  await setHash(signIn ? "" : `#/annotate?annotator=${annotator}`);
  const root = document.createElement("div");
  document.body.append(root);
  const result: SessionResult = { rejections: 0, tasksSeen: [] };
  root.addEventListener("annotate:rejected", () => {
    result.rejections += 1;
  });

  let stateEvent = onceEvent(root, "annotate:state");
  const app = startApp(root, { api: new AnnotationApi(base) });
  if (signIn) {
    const input = root.querySelector(".annotator-name") as HTMLInputElement;
    input.value = annotator;
    click(root, ".start");
  }
  let detail = (await stateEvent).detail as { phase: string; taskId: number | null };

  while (detail.phase === "task") {
    const taskId = detail.taskId;
    if (taskId === null) throw new Error("task phase without a task id");
    result.tasksSeen.push(taskId);
    const answer = plan[taskId];
    if (answer === undefined) throw new Error(`no scripted answer for task ${taskId}`);
    expect(root.querySelector(".caption mark")?.textContent).toMatch(/^(dog|cat)$/);
    expect((root.querySelector(".submit") as HTMLButtonElement).disabled).toBe(true);
    click(root, `fieldset[data-question="q1"] [data-option="${answer.q1}"]`);
    for (const question of ["q2", "q3", "q4"] as const) {
      for (const option of answer[question] ?? []) {
        click(root, `fieldset[data-question="${question}"] [data-option="${option}"]`);
      }
    }
    stateEvent = onceEvent(root, "annotate:state");
    click(root, ".submit");
    detail = (await stateEvent).detail as { phase: string; taskId: number | null };
  }

  expect(detail.phase).toBe("done");
  expect(root.querySelector("a.export-link")?.getAttribute("href")).toBe(`${base}/api/export`);
  app.destroy();
  root.remove();
  return result;
}

describe("annotation flow against the live service", () => {
  let service: Service | null = null;

  beforeAll(async () => {
    service = await startService(10);
  }, 90_000);

  afterAll(async () => {
    await stopService(service);
  });

  it("two scripted annotators finish the pool through the client", async () => {
    const ana = await driveSession(service!.base, "ana", ANA_PLAN, true);
    expect(ana.tasksSeen).toEqual([0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
    expect(ana.rejections).toBe(0);
    const ben = await driveSession(service!.base, "ben", BEN_PLAN, false);
    expect(ben.tasksSeen).toEqual([0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
    expect(ben.rejections).toBe(0);
    expect(localStorage.length).toBe(0);
    expect(sessionStorage.length).toBe(0);
  }, 120_000);

  it("exports a log the schema module validates end to end", async () => {
    const exportText = await (await fetch(`${service!.base}/api/export`)).text();
    expect(exportText.trimEnd().split("\n")).toHaveLength(20);
    const report = pythonJson<{ records: number; violations: string[] }>(
      VALIDATE_EXPORT,
      exportText,
    );
    expect(report.records).toBe(20);
    expect(report.violations).toEqual([]);
  }, 60_000);

  it("reports kappas equal to the metrics module on the same export", async () => {
    const api = new AnnotationApi(service!.base);
    const agreement = await api.agreement();
    expect(agreement.ready).toBe(true);
    if (!agreement.ready) return;
    const exportText = await (await fetch(`${service!.base}/api/export`)).text();
    const moduleKappa = pythonJson<Record<string, number | null>>(KAPPA_FROM_EXPORT, exportText);
    for (const question of QUESTIONS) {
      expect(agreement.kappa[question], question).toBe(moduleKappa[question]);
      expect(agreement.kappa[question], question).not.toBeNull();
    }
    expect(agreement.n_shared).toMatchObject({ q1: 10, q2: 3, q3: 6, q4: 6 });
  }, 60_000);

  it("renders dashboard kappas that match the metrics module", async () => {
    const api = new AnnotationApi(service!.base);
    const disagreements = await api.disagreements();
    expect(
      disagreements.map((row) => [row.task_id, row.question]),
    ).toEqual(EXPECTED_DISAGREEMENTS.map((pair) => [...pair]));
    const exportText = await (await fetch(`${service!.base}/api/export`)).text();
    const moduleKappa = pythonJson<Record<string, number | null>>(KAPPA_FROM_EXPORT, exportText);

    await setHash("#/agreement");
    const root = document.createElement("div");
    document.body.append(root);
    const app = startApp(root, { api });
    await waitFor(() => root.querySelector(".kappa-table") !== null, "the kappa table");
    for (const question of QUESTIONS) {
      const cell = root.querySelector(`tr[data-question="${question}"] .kappa`);
      expect(cell?.textContent, question).toBe(moduleKappa[question]?.toFixed(2));
    }
    const rows = root.querySelectorAll(".disagreement");
    expect(rows).toHaveLength(disagreements.length);
    expect(rows[0]?.querySelector("a.task-link")?.getAttribute("href")).toBe("#task-3");
    app.destroy();
    root.remove();
  }, 60_000);
});

describe("rule mirror against the live validator", () => {
  it("agrees with the service on every presence combination", async () => {
    const probe = await startService(1);
    try {
      let accepted = 0;
      for (const q1 of Q1_OPTIONS) {
        for (const q2 of [null, ["co_occurring_context"]]) {
          for (const q3 of [null, ["occlusion"]]) {
            for (const q4 of [null, ["past"]]) {
              const payload = {
                task_id: 0,
                annotator_id: "probe",
                q1,
                q2,
                q3,
                q4,
                timestamp: 0,
                free_text: "",
                revision: true,
              };
              const mirrorSaysLegal = validate(payload).length === 0;
              const response = await fetch(`${probe.base}/api/annotations`, {
                method: "POST",
                headers: { "content-type": "application/json" },
                body: JSON.stringify(payload),
              });
              const body = (await response.json()) as { violations?: string[] };
              const label = `${q1} q2=${q2 !== null} q3=${q3 !== null} q4=${q4 !== null}`;
              expect(response.status, label).toBe(mirrorSaysLegal ? 200 : 422);
              if (mirrorSaysLegal) {
                accepted += 1;
              } else {
                expect(body.violations?.length, label).toBeGreaterThan(0);
              }
            }
          }
        }
      }
      expect(accepted).toBe(4);
    } finally {
      await stopService(probe);
    }
  }, 120_000);
});
