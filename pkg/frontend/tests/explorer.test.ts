/** Integration test driving the explorer UI against a live service process
 * on a small checkpoint: the full pick-direction / drag-slider / commit /
 * sweep-strip loop, asserting byte-identical images where the contracts
 * promise them. */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { type ChildProcess, spawn, spawnSync } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { ApiClient } from "../src/api.js";
import { ExplorerApp } from "../src/app.js";

const PORT = 8712;
const BASE_URL = `http://127.0.0.1:${PORT}`;
const HERE = dirname(fileURLToPath(import.meta.url));

let serverProcess: ChildProcess | undefined;
let workDir: string;

async function waitForService(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const response = await fetch(`${BASE_URL}/healthz`);
      if (response.ok) {
        return;
      }
    } catch {
      /* not up yet */
    }
    if (Date.now() > deadline) {
      throw new Error("service did not come up in time");
    }
    await new Promise((resolve) => setTimeout(resolve, 500));
  }
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "latentshift-ui-"));
  const checkpoint = join(workDir, "checkpoint.pt");
  const made = spawnSync(
    "python3",
    [join(HERE, "make_checkpoint.py"), checkpoint],
    { encoding: "utf8" },
  );
  if (made.status !== 0) {
    throw new Error(`checkpoint build failed: ${made.stderr}`);
  }
  serverProcess = spawn(
    "python3",
    [
      "-m",
      "latentshift.cli",
      "serve",
      "--checkpoint",
      checkpoint,
      "--port",
      String(PORT),
      "--eval-samples",
      "64",
    ],
    { stdio: "ignore" },
  );
  await waitForService(180_000);
});

afterAll(() => {
  serverProcess?.kill();
  rmSync(workDir, { recursive: true, force: true });
});

function makeApp(): { app: ExplorerApp; root: HTMLElement; api: ApiClient } {
  localStorage.clear();
  const root = document.createElement("div");
  document.body.appendChild(root);
  const api = new ApiClient(BASE_URL);
  // short debounce keeps the latest-wins behaviour observable without slow tests
  const app = new ExplorerApp(root, api, { debounceMs: 20 });
  return { app, root, api };
}

function slider(root: HTMLElement): HTMLInputElement {
  return root.querySelector('[data-role="slider"]') as HTMLInputElement;
}

function preview(root: HTMLElement): HTMLImageElement {
  return root.querySelector('[data-role="preview"]') as HTMLImageElement;
}

function dragSlider(root: HTMLElement, value: number): void {
  const input = slider(root);
  input.value = String(value);
  input.dispatchEvent(new Event("input", { bubbles: true }));
}

describe("explorer UI against a live service", () => {
  it("lists K directions in score order with scores from the service", async () => {
    const { app, root, api } = makeApp();
    await app.init();
    await app.whenIdle();

    const health = await (await fetch(`${BASE_URL}/healthz`)).json();
    const buttons = root.querySelectorAll('[data-role="direction-list"] button');
    expect(buttons.length).toBe(health.K);

    const fromApi = await api.directions();
    const listed = [...buttons].map((b) => Number((b as HTMLButtonElement).dataset.index));
    expect(listed).toEqual(fromApi.map((d) => d.index));
    const scores = fromApi.map((d) => d.score);
    expect([...scores].sort((a, b) => b - a)).toEqual(scores);
  });

  it("selecting a direction binds it to the slider label", async () => {
    const { app, root } = makeApp();
    await app.init();
    await app.whenIdle();

    const second = root.querySelectorAll(
      '[data-role="direction-list"] button',
    )[1] as HTMLButtonElement;
    second.click();
    await app.whenIdle();
    const label = root.querySelector('[data-role="slider-label"]') as HTMLElement;
    expect(label.textContent).toBe(`direction ${second.dataset.index}`);
  });

  it("renders the stack-only image when the slider is dragged back to zero", async () => {
    const { app, root, api } = makeApp();
    await app.init();
    await app.whenIdle();

    dragSlider(root, 2.5);
    await app.whenIdle();
    const shifted = preview(root).src;

    dragSlider(root, 0);
    await app.whenIdle();
    const stackOnly = await api.generate(0, []);
    expect(preview(root).src).toBe(stackOnly.dataUrl);
    expect(preview(root).src).not.toBe(shifted);
  });

  it("rapid drags resolve to the final slider value (latest wins)", async () => {
    const { app, root, api } = makeApp();
    await app.init();
    await app.whenIdle();

    const active = Number(
      (root.querySelector('[data-role="direction-list"] button.active') as HTMLButtonElement)
        .dataset.index,
    );
    for (const value of [-6, -3, 1, 4, 2.25]) {
      dragSlider(root, value);
    }
    await app.whenIdle();
    const expected = await api.generate(0, [{ k: active, eps: 2.25 }]);
    expect(preview(root).src).toBe(expected.dataUrl);
  });

  it("commit appends to the stack and keeps the preview unchanged", async () => {
    const { app, root } = makeApp();
    await app.init();
    await app.whenIdle();

    dragSlider(root, 1.75);
    await app.whenIdle();
    const beforeCommit = preview(root).src;

    (root.querySelector('[data-role="commit"]') as HTMLButtonElement).click();
    await app.whenIdle();

    const items = root.querySelectorAll('[data-role="stack-list"] li');
    expect(items.length).toBe(1);
    expect(slider(root).value).toBe("0");
    expect(preview(root).src).toBe(beforeCommit);
  });

  it("commit + second-direction sweep: middle strip thumbnail equals the preview", async () => {
    const { app, root } = makeApp();
    await app.init();
    await app.whenIdle();

    const buttons = root.querySelectorAll('[data-role="direction-list"] button');
    (buttons[0] as HTMLButtonElement).click();
    await app.whenIdle();
    dragSlider(root, 1.5);
    await app.whenIdle();
    (root.querySelector('[data-role="commit"]') as HTMLButtonElement).click();
    await app.whenIdle();

    (buttons[1] as HTMLButtonElement).click();
    await app.whenIdle();
    const stackOnlyPreview = preview(root).src;

    (root.querySelector('[data-role="strip-lo"]') as HTMLInputElement).value = "-2";
    (root.querySelector('[data-role="strip-hi"]') as HTMLInputElement).value = "2";
    (root.querySelector('[data-role="strip-n"]') as HTMLInputElement).value = "5";
    await app.requestStrip();
    await app.whenIdle();

    const thumbs = root.querySelectorAll('[data-role="strip"] img');
    expect(thumbs.length).toBe(5);
    const middle = thumbs[2] as HTMLImageElement;
    expect(middle.src).toBe(stackOnlyPreview);
  });

  it("clicking a strip thumbnail sets the slider to that magnitude", async () => {
    const { app, root } = makeApp();
    await app.init();
    await app.whenIdle();

    (root.querySelector('[data-role="strip-lo"]') as HTMLInputElement).value = "-2";
    (root.querySelector('[data-role="strip-hi"]') as HTMLInputElement).value = "2";
    (root.querySelector('[data-role="strip-n"]') as HTMLInputElement).value = "5";
    await app.requestStrip();
    await app.whenIdle();

    const thumbs = root.querySelectorAll('[data-role="strip"] img');
    (thumbs[3] as HTMLImageElement).click();
    await app.whenIdle();
    // lo + 3 * (hi - lo) / (n - 1) = -2 + 3
    expect(Number(slider(root).value)).toBeCloseTo(1.0, 5);
  });

  it("session export/import reproduces the same preview bytes", async () => {
    const { app, root } = makeApp();
    await app.init();
    await app.whenIdle();

    dragSlider(root, 3.0);
    await app.whenIdle();
    (root.querySelector('[data-role="commit"]') as HTMLButtonElement).click();
    await app.whenIdle();
    const original = preview(root).src;

    (root.querySelector('[data-role="export"]') as HTMLButtonElement).click();
    const sessionJson = (
      root.querySelector('[data-role="session-json"]') as HTMLTextAreaElement
    ).value;

    const fresh = makeApp();
    await fresh.app.init();
    await fresh.app.whenIdle();
    (fresh.root.querySelector('[data-role="session-json"]') as HTMLTextAreaElement).value =
      sessionJson;
    (fresh.root.querySelector('[data-role="import"]') as HTMLButtonElement).click();
    await fresh.app.whenIdle();
    expect(preview(fresh.root).src).toBe(original);
  });

  it("blocks oversized strip requests client-side", async () => {
    const { app, root } = makeApp();
    await app.init();
    await app.whenIdle();

    (root.querySelector('[data-role="strip-n"]') as HTMLInputElement).value = "64";
    await app.requestStrip();
    await app.whenIdle();
    expect(root.querySelectorAll('[data-role="strip"] img').length).toBe(0);
    const note = root.querySelector('[data-role="clamp-note"]') as HTMLElement;
    expect(note.textContent).toContain("strip size");
  });
});
