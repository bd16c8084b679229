// Console entry point: create or attach to a session, then loop
// render -> label -> advance against the service.

import { ApiClient } from "./api.js";
import { renderError, renderProgress, renderQuery } from "./render.js";
import { SessionState } from "./state.js";
import { Label } from "./types.js";

const api = new ApiClient("");

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function draw(state: SessionState): void {
  if (state.error) {
    el("banner").innerHTML = renderError(state.error);
  } else {
    el("banner").innerHTML = "";
  }
  if (state.query) {
    el("query").innerHTML = renderQuery(state.query);
  }
  if (state.progress) {
    el("progress").innerHTML = renderProgress(state.progress);
  }
  for (const btn of el("query").querySelectorAll<HTMLButtonElement>(".label-btn")) {
    btn.addEventListener("click", () => {
      void handleLabel(btn.dataset.label as Label);
    });
  }
}

let state: SessionState | null = null;

async function handleLabel(label: Label): Promise<void> {
  if (!state) return;
  await state.submitAndAdvance(label);
  draw(state);
}

async function start(): Promise<void> {
  const form = el("setup") as HTMLFormElement;
  form.addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const data = new FormData(form);
    const arm = String(data.get("arm") || "bal");
    const strategy = String(data.get("strategy") || "top");
    const seed = Number(data.get("seed") || 0);
    const budget = Number(data.get("budget") || 50);
    try {
      const created = await api.createSession({
        arm,
        strategy,
        seed,
        B: budget,
        synthetic: { kind: "benchmark" },
      });
      state = new SessionState(api, created.session_id);
      await state.refresh();
      el("setup-wrap").style.display = "none";
      draw(state);
    } catch (err) {
      el("banner").innerHTML = renderError(err instanceof Error ? err.message : String(err));
    }
  });
}

void start();
