// End-to-end: a scripted session through the live service must replay the
// exact trajectory of the engine driven by the simulated oracle.
//
// Needs the Python package installed (the test spawns the service and a
// reference run). Runs by default; set ADLOOP_E2E=0 to skip.

import { spawn, spawnSync } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { SessionState } from "../src/state.js";

const PY = process.env.ADLOOP_PYTHON ?? "python3";
const PORT = 8876 + Math.floor(Math.random() * 100);
const BASE = `http://127.0.0.1:${PORT}`;
const RUN_E2E = process.env.ADLOOP_E2E !== "0";

const SESSION = {
  arm: "bal",
  strategy: "top",
  synthetic: { kind: "benchmark", n: 400 },
  seed: 0,
  B: 12,
  T: 20,
  subsample: 64,
};

// ground truth: run the same engine against the simulated oracle and dump
// the expected history plus the labels the analyst will provide
const REFERENCE_SCRIPT = `
import json
from adloop.data import ANOMALY, Oracle
from adloop.harness import RunConfig, build_engine

config = RunConfig(arm="bal", strategy="top", synthetic={"kind": "benchmark", "n": 400},
                   seeds=[0], B=12, T=20, subsample=64)
ctx = build_engine(config, 0)
oracle = Oracle(ctx.dataset)
while not ctx.driver.done:
    qid = ctx.driver.pending_id()
    ctx.driver.submit(qid, oracle.label(qid))
labels = {int(i): ("anomaly" if int(l) == ANOMALY else "nominal")
          for i, l in enumerate(ctx.dataset.hidden_labels())}
history = [{"iter": h["iter"], "queried_id": h["queried_id"], "label": h["label"],
            "num_anomalies_so_far": h["num_anomalies_so_far"]} for h in ctx.driver.history]
print(json.dumps({"labels": labels, "history": history}))
`;

let server: ReturnType<typeof spawn> | null = null;

async function waitForServer(): Promise<void> {
  for (let i = 0; i < 100; i++) {
    try {
      const resp = await fetch(`${BASE}/sessions/none/progress`);
      if (resp.status === 404) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error("service did not come up");
}

describe.skipIf(!RUN_E2E)("scripted end-to-end session", () => {
  beforeAll(async () => {
    server = spawn(PY, ["-m", "adloop.cli", "serve", "--port", String(PORT)], {
      stdio: "ignore",
    });
    await waitForServer();
  }, 60_000);

  afterAll(() => {
    server?.kill();
  });

  it("replays the simulated-oracle trajectory exactly", async () => {
    const ref = spawnSync(PY, ["-c", REFERENCE_SCRIPT], { encoding: "utf-8" });
    expect(ref.status, ref.stderr).toBe(0);
    const reference = JSON.parse(ref.stdout) as {
      labels: Record<string, "anomaly" | "nominal">;
      history: { iter: number; queried_id: number; label: number; num_anomalies_so_far: number }[];
    };

    const api = new ApiClient(BASE);
    const created = await api.createSession(SESSION);
    const state = new SessionState(api, created.session_id);
    await state.refresh();
    while (state.query && state.query.status === "active") {
      const iid = state.query.instance_id!;
      const ok = await state.submitAndAdvance(reference.labels[String(iid)]);
      expect(ok).toBe(true);
    }
    const got = await api.getHistory(created.session_id);
    expect(got.history).toEqual(reference.history);
  }, 120_000);
});
