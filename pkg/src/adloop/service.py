"""HTTP session service for the interactive analyst loop.

A session wraps one live engine (batch, stream, or glad arm). The analyst
fetches the pending query, submits a label, and watches progress; every
mutation is appended to an event log so a session replays deterministically.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from adloop.data import ANOMALY, NOMINAL
from adloop.describe import compact_description, interpretable_description
from adloop.feedback import score_rows
from adloop.harness import RunConfig, build_engine
from adloop.rules import RuleSet, rules_to_json, rules_to_text

LABELS = {"anomaly": ANOMALY, "nominal": NOMINAL, "1": ANOMALY, "-1": NOMINAL}


class SessionRequest(BaseModel):
    arm: str = "bal"
    strategy: str = "top"
    dataset: str | None = None
    label_column: str = "label"
    class_column: str | None = None
    synthetic: dict = Field(default_factory=dict)
    seed: int = 0
    B: int = 100
    Q: int = 20
    K: int = 512
    tau: float = 0.03
    alpha_kl: float = 0.05
    delta: int = 5
    T: int = 100
    subsample: int = 256
    M: int = 15
    bias_b: float = 0.5

    def to_config(self):
        return RunConfig(
            arm=self.arm,
            strategy=self.strategy,
            dataset=self.dataset,
            label_column=self.label_column,
            class_column=self.class_column,
            synthetic=dict(self.synthetic),
            seeds=[self.seed],
            B=self.B,
            Q=self.Q,
            K=self.K,
            tau=self.tau,
            alpha_kl=self.alpha_kl,
            delta=self.delta,
            T=self.T,
            subsample=self.subsample,
            M=self.M,
            bias_b=self.bias_b,
        )


class LabelRequest(BaseModel):
    instance_id: int
    label: str


class Session:
    def __init__(self, session_id, request, log_path=None):
        self.id = session_id
        self.request = request
        self.config = request.to_config()
        self.ctx = build_engine(self.config, request.seed)
        self.lock = threading.Lock()
        self.curve = []
        self.log_path = log_path
        if log_path is not None and not log_path.exists():
            log_path.parent.mkdir(parents=True, exist_ok=True)
            self._append_event({"type": "created", "request": request.model_dump()})

    # -- event sourcing ------------------------------------------------------

    def _append_event(self, event):
        if self.log_path is not None:
            with open(self.log_path, "a") as fh:
                fh.write(json.dumps(event) + "\n")

    @classmethod
    def replay(cls, session_id, log_path):
        """Rebuild a session by re-applying its event log."""
        with open(log_path) as fh:
            events = [json.loads(line) for line in fh]
        if not events or events[0]["type"] != "created":
            raise ValueError(f"{log_path}: malformed event log")
        request = SessionRequest(**events[0]["request"])
        session = cls(session_id, request, log_path=None)
        session.log_path = log_path
        for event in events[1:]:
            if event["type"] == "label":
                session._apply_label(event["instance_id"], event["label"])
        return session

    # -- engine wrappers -----------------------------------------------------

    @property
    def driver(self):
        return self.ctx.driver

    @property
    def done(self):
        return self.driver.done

    def _apply_label(self, instance_id, label_name):
        y = LABELS[label_name]
        rec = self.driver.submit(instance_id, y)
        self.curve.append(rec["num_anomalies_so_far"])
        return rec

    def submit_label(self, instance_id, label_name):
        if label_name not in LABELS:
            raise HTTPException(422, f"label must be one of {sorted(LABELS)}")
        pending = self.driver.pending_id()
        if pending is None:
            raise HTTPException(409, "session is completed; no pending query")
        if pending != instance_id:
            raise HTTPException(409, f"label for {instance_id} does not match pending query {pending}")
        rec = self._apply_label(instance_id, label_name)
        self._append_event({"type": "label", "instance_id": instance_id, "label": label_name})
        return rec

    def _current_model(self):
        # the stream driver replaces trees as windows arrive
        return getattr(self.driver, "model", self.ctx.model)

    def _feedback_state(self):
        """(FeedbackState, w) of the live batch loop, if the arm has one."""
        driver = self.driver
        inner = getattr(driver, "_driver", None)
        if inner is not None and hasattr(inner, "state"):
            return inner.state, driver.w
        if hasattr(driver, "state") and hasattr(driver, "w"):
            return driver.state, driver.w
        return None, None

    def _instance_rules(self, instance_id):
        model = self._current_model()
        w = self.ctx.current_w()
        if model is None or w is None:
            return RuleSet([])
        x = self.ctx.dataset.X[instance_id].reshape(1, -1)
        _, ruleset, _ = compact_description(
            model, w, x, delta=self.config.delta, clip_box=self.ctx.dataset.clip_box()
        )
        return ruleset

    def _pending_score(self, instance_id):
        fb, w = self._feedback_state()
        if fb is not None:
            row = fb.row_of_id(instance_id)
            return float(score_rows(w, fb.scores[[row]])[0])
        driver = self.driver
        if hasattr(driver, "state"):  # glad driver scores over D rows
            return float(driver.state.scores(np.array([instance_id]))[0])
        if hasattr(driver, "_scores"):  # static ranking arm
            return float(driver._scores[instance_id])
        return 0.0

    def query_payload(self):
        pending = None if self.done else self.driver.pending_id()
        if pending is None:
            return {"session_id": self.id, "status": "completed", "progress": self.progress_payload()}
        ruleset = self._instance_rules(pending)
        batch = [int(pending)]
        inner = getattr(self.driver, "_driver", self.driver)
        if hasattr(inner, "_queue"):
            batch = [int(inner.state.ids[r]) for r in inner._queue]
        # diverse mode surfaces the whole queued batch side by side
        batch_details = [
            {
                "instance_id": iid,
                "features": [float(v) for v in self.ctx.dataset.X[iid]],
                "score": self._pending_score(iid),
                "rules_text": rules_to_text(self._instance_rules(iid)),
            }
            for iid in batch
        ]
        return {
            "session_id": self.id,
            "status": "active",
            "instance_id": int(pending),
            "features": [float(v) for v in self.ctx.dataset.X[pending]],
            "feature_names": list(self.ctx.dataset.feature_names),
            "score": self._pending_score(pending),
            "rules": json.loads(rules_to_json(ruleset)),
            "rules_text": rules_to_text(ruleset),
            "batch": batch,
            "batch_details": batch_details,
            "progress": self.progress_payload(),
        }

    def progress_payload(self):
        driver = self.driver
        return {
            "session_id": self.id,
            "status": "completed" if self.done else "active",
            "budget": self.config.B,
            "queries_made": int(getattr(driver, "spent", 0)),
            "anomalies_seen": int(getattr(driver, "anomalies_seen", 0)),
            "curve": list(self.curve),
        }

    def rules_payload(self):
        model = self._current_model()
        w = self.ctx.current_w()
        state, _ = self._feedback_state()
        empty = {"rules": json.loads(rules_to_json(RuleSet([]))), "rules_text": "false", "status": "none"}
        if model is None or w is None or state is None or not getattr(state, "pos", []):
            return empty
        dataset = self.ctx.dataset
        labeled_rows = state.pos + state.neg
        X_lab = dataset.X[[int(state.ids[r]) for r in labeled_rows]]
        y_lab = np.array([ANOMALY] * len(state.pos) + [NOMINAL] * len(state.neg))
        pool = [int(state.ids[r]) for r in state.unlabeled]
        res = interpretable_description(
            model,
            w,
            X_lab,
            y_lab,
            dataset.X[pool] if pool else dataset.X[:0],
            t=self.config.precision_t,
            delta=self.config.delta,
            clip_box=dataset.clip_box(),
            rng=np.random.default_rng(np.random.SeedSequence([self.request.seed, 0x5E7])),
        )
        return {
            "rules": json.loads(rules_to_json(res.ruleset)),
            "rules_text": rules_to_text(res.ruleset),
            "status": res.status,
        }


class SessionStore:
    def __init__(self, sessions_dir=None):
        self.sessions = {}
        self.dir = Path(sessions_dir) if sessions_dir else None
        self.lock = threading.Lock()

    def create(self, request):
        session_id = uuid.uuid4().hex[:12]
        log = self.dir / f"{session_id}.jsonl" if self.dir else None
        session = Session(session_id, request, log_path=log)
        with self.lock:
            self.sessions[session_id] = session
        return session

    def get(self, session_id):
        with self.lock:
            session = self.sessions.get(session_id)
        if session is None and self.dir is not None:
            log = self.dir / f"{session_id}.jsonl"
            if log.exists():
                session = Session.replay(session_id, log)
                with self.lock:
                    self.sessions[session_id] = session
        if session is None:
            raise HTTPException(404, f"no session {session_id}")
        return session


def create_app(sessions_dir=None):
    app = FastAPI(title="adloop analyst service")
    store = SessionStore(sessions_dir)
    app.state.store = store

    @app.post("/sessions")
    def create_session(request: SessionRequest):
        try:
            request.to_config().mode()
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from None
        session = store.create(request)
        return {
            "session_id": session.id,
            "budget": session.config.B,
            "status": "completed" if session.done else "active",
        }

    @app.get("/sessions/{session_id}/query")
    def get_query(session_id: str):
        session = store.get(session_id)
        with session.lock:
            return session.query_payload()

    @app.post("/sessions/{session_id}/label")
    def submit_label(session_id: str, body: LabelRequest):
        session = store.get(session_id)
        with session.lock:
            session.submit_label(body.instance_id, body.label)
            return session.progress_payload()

    @app.get("/sessions/{session_id}/progress")
    def progress(session_id: str):
        session = store.get(session_id)
        with session.lock:
            return session.progress_payload()

    @app.get("/sessions/{session_id}/rules")
    def rules(session_id: str):
        session = store.get(session_id)
        with session.lock:
            return session.rules_payload()

    @app.get("/sessions/{session_id}/history")
    def history(session_id: str):
        session = store.get(session_id)
        with session.lock:
            return {
                "history": [
                    {
                        "iter": h["iter"],
                        "queried_id": h["queried_id"],
                        "label": h["label"],
                        "num_anomalies_so_far": h["num_anomalies_so_far"],
                    }
                    for h in session.driver.history
                ]
            }

    return app
