import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from adloop.data import ANOMALY, Oracle
from adloop.harness import RunConfig, build_engine, make_benchmark
from adloop.service import Session, SessionRequest, create_app

BASE = dict(
    arm="bal",
    synthetic={"kind": "benchmark", "n": 400},
    seed=0,
    B=12,
    T=20,
    subsample=64,
)


@pytest.fixture()
def client(tmp_path):
    app = create_app(sessions_dir=tmp_path / "sessions")
    with TestClient(app) as c:
        yield c


def _create(client, **overrides):
    body = dict(BASE)
    body.update(overrides)
    resp = client.post("/sessions", json=body)
    assert resp.status_code == 200, resp.text
    return resp.json()


def test_create_session_fresh_state(client):
    payload = _create(client)
    assert payload["budget"] == 12
    assert payload["status"] == "active"
    progress = client.get(f"/sessions/{payload['session_id']}/progress").json()
    assert progress["queries_made"] == 0
    assert progress["anomalies_seen"] == 0


def test_two_creates_distinct_ids(client):
    a = _create(client)
    b = _create(client)
    assert a["session_id"] != b["session_id"]


def test_create_budget_zero_completed(client):
    payload = _create(client, B=0)
    assert payload["status"] == "completed"
    q = client.get(f"/sessions/{payload['session_id']}/query").json()
    assert q["status"] == "completed"


def test_query_idempotent_until_label(client):
    sid = _create(client)["session_id"]
    q1 = client.get(f"/sessions/{sid}/query").json()
    q2 = client.get(f"/sessions/{sid}/query").json()
    assert q1["instance_id"] == q2["instance_id"]
    assert q1["score"] == q2["score"]
    assert isinstance(q1["rules"]["disjuncts"], list)
    assert q1["rules_text"]
    # pending instance is the current argmax for a fresh bal session
    assert q1["progress"]["queries_made"] == 0


def test_label_flow_and_conflicts(client):
    sid = _create(client)["session_id"]
    q = client.get(f"/sessions/{sid}/query").json()
    wrong = client.post(f"/sessions/{sid}/label", json={"instance_id": q["instance_id"] + 1, "label": "nominal"})
    assert wrong.status_code == 409
    ok = client.post(f"/sessions/{sid}/label", json={"instance_id": q["instance_id"], "label": "anomaly"})
    assert ok.status_code == 200
    assert ok.json()["anomalies_seen"] == 1
    dup = client.post(f"/sessions/{sid}/label", json={"instance_id": q["instance_id"], "label": "anomaly"})
    assert dup.status_code == 409  # second submit for the same id rejected
    q2 = client.get(f"/sessions/{sid}/query").json()
    assert q2["instance_id"] != q["instance_id"]


def test_bad_label_rejected(client):
    sid = _create(client)["session_id"]
    q = client.get(f"/sessions/{sid}/query").json()
    resp = client.post(f"/sessions/{sid}/label", json={"instance_id": q["instance_id"], "label": "maybe"})
    assert resp.status_code == 422


def test_unknown_session_404(client):
    assert client.get("/sessions/nope/query").status_code == 404


def test_budget_exhaustion_completes(client):
    sid = _create(client, B=3)["session_id"]
    for _ in range(3):
        q = client.get(f"/sessions/{sid}/query").json()
        client.post(f"/sessions/{sid}/label", json={"instance_id": q["instance_id"], "label": "nominal"})
    assert client.get(f"/sessions/{sid}/progress").json()["status"] == "completed"
    resp = client.post(f"/sessions/{sid}/label", json={"instance_id": 0, "label": "nominal"})
    assert resp.status_code == 409


def test_session_trajectory_equals_harness_run(client):
    """Scripted labels through the service replay the harness trajectory."""
    config = RunConfig(
        arm="bal",
        synthetic={"kind": "benchmark", "n": 400},
        seeds=[0],
        B=12,
        T=20,
        subsample=64,
    )
    ctx = build_engine(config, 0)
    oracle = Oracle(ctx.dataset)
    while not ctx.driver.done:
        qid = ctx.driver.pending_id()
        ctx.driver.submit(qid, oracle.label(qid))
    want = [(h["queried_id"], h["label"]) for h in ctx.driver.history]

    sid = _create(client)["session_id"]
    labels = ctx.dataset.hidden_labels()
    got = []
    while True:
        q = client.get(f"/sessions/{sid}/query").json()
        if q["status"] == "completed":
            break
        iid = q["instance_id"]
        name = "anomaly" if labels[iid] == ANOMALY else "nominal"
        client.post(f"/sessions/{sid}/label", json={"instance_id": iid, "label": name})
        got.append((iid, int(labels[iid])))
    assert got == want
    hist = client.get(f"/sessions/{sid}/history").json()["history"]
    assert [(h["queried_id"], h["label"]) for h in hist] == want


def test_event_log_replay(tmp_path):
    app = create_app(sessions_dir=tmp_path / "sessions")
    with TestClient(app) as client:
        sid = _create(client)["session_id"]
        labels_sent = []
        for _ in range(4):
            q = client.get(f"/sessions/{sid}/query").json()
            client.post(f"/sessions/{sid}/label", json={"instance_id": q["instance_id"], "label": "nominal"})
            labels_sent.append(q["instance_id"])
        progress_before = client.get(f"/sessions/{sid}/progress").json()

    # fresh app over the same sessions dir replays the log
    app2 = create_app(sessions_dir=tmp_path / "sessions")
    with TestClient(app2) as client2:
        progress_after = client2.get(f"/sessions/{sid}/progress").json()
        assert progress_after["queries_made"] == progress_before["queries_made"]
        assert progress_after["curve"] == progress_before["curve"]
        q = client2.get(f"/sessions/{sid}/query").json()
        assert q["status"] == "active"


def test_rules_endpoint_after_anomaly_label(client):
    sid = _create(client)["session_id"]
    labels = None
    for _ in range(6):
        q = client.get(f"/sessions/{sid}/query").json()
        if q["status"] == "completed":
            break
        client.post(f"/sessions/{sid}/label", json={"instance_id": q["instance_id"], "label": "anomaly"})
    rules = client.get(f"/sessions/{sid}/rules").json()
    assert rules["status"] in ("ok", "all-filtered")
    assert "rules_text" in rules


def test_glad_mode_session(client):
    sid = _create(client, arm="glad", synthetic={"kind": "glad-benchmark", "n_main": 150, "n_sat": 30}, M=4, B=4)[
        "session_id"
    ]
    q = client.get(f"/sessions/{sid}/query").json()
    assert q["status"] == "active"
    assert q["rules_text"] == "false"  # projection arms carry no box rules
    resp = client.post(f"/sessions/{sid}/label", json={"instance_id": q["instance_id"], "label": "nominal"})
    assert resp.status_code == 200


def test_stream_mode_session(client):
    sid = _create(
        client,
        arm="sal-kl",
        synthetic={"kind": "drift", "n_windows": 3, "K": 96, "d": 3},
        B=6,
        Q=2,
        K=96,
        T=15,
        subsample=48,
    )["session_id"]
    done = 0
    while done < 6:
        q = client.get(f"/sessions/{sid}/query").json()
        if q["status"] == "completed":
            break
        assert "score" in q and q["rules_text"]
        client.post(f"/sessions/{sid}/label", json={"instance_id": q["instance_id"], "label": "nominal"})
        done += 1
    progress = client.get(f"/sessions/{sid}/progress").json()
    assert progress["queries_made"] == done
