"""Experiment runner: arms, metrics, persistence, and presets.

Each (arm, seed) cell runs one active session and produces an anomalies-seen
curve; results land under runs/<name>/<arm>/<seed>/ as JSON/JSONL/CSV files.
This module is the metrics layer: it may read hidden labels.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from adloop import data as dat
from adloop.data import ANOMALY, Oracle, load_csv, make_drift_stream, make_synthetic
from adloop.describe import interpretable_description
from adloop.feedback import (
    FeedbackState,
    normalize_scores,
    random_unit,
    score_rows,
    w_unif,
)
from adloop.forest import build_forest
from adloop.glad import Fssn, GladState
from adloop.loda import fit_loda
from adloop.query import DiverseStrategy, RandomTopStrategy, TopStrategy
from adloop.rules import rules_to_text
from adloop.stream import StreamConfig

BATCH_ARMS = ("bal", "bal-noprior-unif", "bal-noprior-rand", "unsupervised")
STREAM_ARMS = ("sal-kl", "sal-20pct", "sal-noreplace")
GLAD_ARMS = ("glad", "loda", "loda-global")

def make_benchmark(seed, n=1400, d=2, cluster_std=0.6, hard_dist=3.0, background_fraction=0.10):
    """Canonical lift benchmark: the uniform-weight ranking finds a far easy
    anomaly cluster immediately but wastes most of its budget on diffuse
    nominal noise, while feedback can suppress the noise and vacuum the hard
    anomaly clusters sitting at the outward skirts of the nominal clusters.

    Composition: 3 nominal Gaussian clusters, ~10% diffuse uniform nominals
    inside the cluster box, one far tight anomaly cluster (easy, tag a_far),
    three tight anomaly clusters at hard_dist standard deviations outward of
    each nominal cluster (hard, tags a0..a2).
    """
    rng = np.random.default_rng(seed)
    centers = dat._cluster_centers(rng, 3, d, spread=5.0, min_sep=4.0)
    n_easy, n_hard_each = 10, 16
    n_hard = 3 * n_hard_each
    n_anom = n_easy + n_hard
    n_bg = int(round(background_fraction * (n - n_anom)))
    n_core = n - n_anom - n_bg

    assign = rng.integers(0, 3, size=n_core)
    X_core = centers[assign] + rng.normal(0.0, cluster_std, size=(n_core, d))
    tags = [f"c{j}" for j in assign]

    lo, hi = centers.min(axis=0) - 2.5, centers.max(axis=0) + 2.5
    X_bg = rng.uniform(lo, hi, size=(n_bg, d))
    tags += ["c_bg"] * n_bg

    far_dir = rng.standard_normal(d)
    far_dir /= np.linalg.norm(far_dir)
    far_center = centers.mean(axis=0) + far_dir * (np.max(hi - lo) * 0.9 + 4.0)
    X_easy = far_center + rng.normal(0.0, 0.15, size=(n_easy, d))
    tags += ["a_far"] * n_easy

    hard_parts = []
    for j in range(3):
        others = np.mean([centers[k] for k in range(3) if k != j], axis=0)
        direction = centers[j] - others
        direction /= np.linalg.norm(direction)
        hc = centers[j] + direction * hard_dist * cluster_std
        hard_parts.append(hc + rng.normal(0.0, 0.1, size=(n_hard_each, d)))
        tags += [f"a{j}"] * n_hard_each
    X = np.vstack([X_core, X_bg, X_easy] + hard_parts)
    labels = np.concatenate([np.full(n_core + n_bg, -1), np.full(n_anom, 1)])
    order = rng.permutation(n)
    return dat.Dataset(X[order], labels=labels[order], class_tags=[tags[i] for i in order])


def make_glad_benchmark(seed, n_main=420, n_sat=80, n_anom_each=12):
    """Scene where per-region member relevance matters: a dense nominal
    satellite swamps the unweighted projection ranking with false positives,
    and the two anomaly clusters sit on different axes so no single global
    reweighting serves both. Local suppression of the satellite's misscoring
    members is what surfaces the anomalies.
    """
    rng = np.random.default_rng(seed)
    main = rng.normal(0.0, 1.0, size=(n_main, 2))
    sat = np.array([-5.0, -5.0]) + rng.normal(0.0, 0.25, size=(n_sat, 2))
    A = np.array([0.0, 6.0]) + rng.normal(0.0, 0.2, size=(n_anom_each, 2))
    B = np.array([6.0, 0.0]) + rng.normal(0.0, 0.2, size=(n_anom_each, 2))
    X = np.vstack([main, sat, A, B])
    labels = np.concatenate([np.full(n_main + n_sat, -1), np.full(2 * n_anom_each, 1)])
    tags = ["c0"] * n_main + ["c_sat"] * n_sat + ["a0"] * n_anom_each + ["a1"] * n_anom_each
    order = rng.permutation(len(X))
    return dat.Dataset(X[order], labels=labels[order], class_tags=[tags[i] for i in order])


# budget/window presets used by the original evaluation protocol
PAPER_PRESETS = {
    "batch-small": {"B": 300},
    "stream-covtype": {"B": 3000, "K": 4096},
    "stream-kddcup": {"B": 3000, "K": 4096},
    "stream-mammography": {"B": 1500, "K": 4096},
    "stream-shuttle": {"B": 1500, "K": 4096},
    "stream-electricity": {"B": 1500, "K": 1024},
    "stream-weather": {"B": 1000, "K": 1024},
}


@dataclass
class RunConfig:
    name: str = "run"
    arm: str = "bal"
    strategy: str = "top"  # top | diverse | random-top
    dataset: str | None = None  # CSV path; None -> synthetic generator
    label_column: str = "label"
    class_column: str | None = None
    synthetic: dict = field(default_factory=dict)
    seeds: list[int] = field(default_factory=lambda: [0])
    B: int = 100
    Q: int = 20
    K: int = 512
    tau: float = 0.03
    alpha_kl: float = 0.05
    delta: int = 5
    batch_b: int = 3
    batch_n: int = 10
    T: int = 100
    subsample: int = 256
    M: int = 15
    bins: int | None = None
    bias_b: float = 0.5
    lam: float = 1.0
    precision_t: float = 0.4
    out_dir: str | None = None

    def mode(self):
        if self.arm in BATCH_ARMS:
            return "batch"
        if self.arm in STREAM_ARMS:
            return "stream"
        if self.arm in GLAD_ARMS:
            return "glad"
        raise ValueError(f"unknown arm {self.arm!r}")

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_ini(cls, path):
        parser = configparser.ConfigParser()
        parser.read(path)
        section = parser["run"] if "run" in parser else parser["DEFAULT"]
        kwargs = {}
        for key, value in section.items():
            if key == "seeds":
                kwargs["seeds"] = [int(s) for s in value.replace(",", " ").split()]
            elif key in ("b", "q", "k", "t", "subsample", "m", "delta", "batch_b", "batch_n", "bins"):
                kwargs[{"b": "B", "q": "Q", "k": "K", "t": "T", "m": "M"}.get(key, key)] = int(value)
            elif key in ("tau", "alpha_kl", "bias_b", "lam", "precision_t"):
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        return cls(**kwargs)


@dataclass
class SeedResult:
    seed: int
    curve: np.ndarray  # cumulative anomalies at query 1..B
    total_anomalies: int
    history: list
    drift: list = field(default_factory=list)
    rules_text: str = ""
    diversity_batches: list = field(default_factory=list)
    wall_time: float = 0.0
    queried_ids: list = field(default_factory=list)


@dataclass
class RunResult:
    config: RunConfig
    seeds: list[SeedResult]

    def curve_matrix(self):
        return np.vstack([s.curve for s in self.seeds])


def _code_version():
    import adloop

    root = Path(adloop.__file__).parent
    digest = hashlib.sha256()
    for path in sorted(root.glob("*.py")):
        digest.update(path.read_bytes())
    return digest.hexdigest()[:12]


def _dataset_for(config, seed):
    if config.dataset:
        return load_csv(config.dataset, config.label_column, config.class_column)
    kwargs = dict(config.synthetic)
    kwargs.setdefault("seed", seed)
    kind = kwargs.pop("kind", "clusters")
    if kind == "benchmark":
        return make_benchmark(**kwargs)
    if kind == "glad-benchmark":
        return make_glad_benchmark(**kwargs)
    if kind == "drift" or (config.mode() == "stream" and "n_windows" in kwargs):
        return make_drift_stream(**kwargs)
    kwargs.pop("n_windows", None)
    kwargs.pop("drift_window", None)
    return make_synthetic(**kwargs)


def _pad_curve(history, budget, total):
    curve = np.zeros(budget, dtype=np.int64)
    seen = 0
    for i in range(budget):
        if i < len(history):
            seen = history[i]["num_anomalies_so_far"]
        curve[i] = seen
    return np.minimum(curve, total)


def _strategy_for(config, model, dataset, rng):
    if config.strategy == "top":
        return TopStrategy()
    if config.strategy == "random-top":
        return RandomTopStrategy(rng, b=config.batch_b, n=config.batch_n)
    if config.strategy == "diverse":
        return DiverseStrategy(
            model, dataset.X, b=config.batch_b, n=config.batch_n, delta=config.delta, clip_box=dataset.clip_box()
        )
    raise ValueError(f"unknown strategy {config.strategy!r}")


def _rules_for(model, w, dataset, state, config, seed):
    labeled_rows = state.pos + state.neg
    if not state.pos:
        return ""
    X_lab = dataset.X[[int(state.ids[r]) for r in labeled_rows]]
    y_lab = np.array([ANOMALY] * len(state.pos) + [-1] * len(state.neg))
    pool_rows = [int(state.ids[r]) for r in state.unlabeled]
    res = interpretable_description(
        model,
        w,
        X_lab,
        y_lab,
        dataset.X[pool_rows] if pool_rows else dataset.X[:0],
        t=config.precision_t,
        delta=config.delta,
        clip_box=dataset.clip_box(),
        rng=np.random.default_rng(np.random.SeedSequence([seed, 0x5E7])),
    )
    return rules_to_text(res.ruleset)


@dataclass
class EngineContext:
    """One arm's live engine: the driver plus what metrics/rules need."""

    driver: object
    dataset: object
    model: object = None  # tree model when the arm has one
    strategy: object = None
    state: object = None  # FeedbackState for batch-style arms

    def current_w(self):
        return getattr(self.driver, "w", None)


class _RankingDriver:
    """Static-ranking arm (no learning): queries a fixed score order."""

    def __init__(self, scores, budget):
        order = np.lexsort((np.arange(scores.shape[0]), -scores))
        self._queue = [int(i) for i in order[:budget]]
        self._scores = scores
        self.history = []
        self.anomalies_seen = 0
        self.spent = 0

    @property
    def done(self):
        return not self._queue

    def pending_id(self):
        return None if self.done else self._queue[0]

    def submit(self, instance_id, y):
        if self.pending_id() != int(instance_id):
            raise KeyError(f"label for {instance_id} does not match pending query")
        self._queue.pop(0)
        self.spent += 1
        if y == ANOMALY:
            self.anomalies_seen += 1
        self.history.append(
            {
                "iter": self.spent,
                "queried_id": int(instance_id),
                "label": int(y),
                "num_anomalies_so_far": self.anomalies_seen,
            }
        )
        return self.history[-1]


def build_engine(config, seed):
    """Construct the live engine for one (arm, seed) cell.

    The harness drives it with the simulated oracle; the HTTP service drives
    the same object with human labels, so both trajectories coincide.
    """
    from adloop.feedback import BatchDriver
    from adloop.stream import StreamDriver

    dataset = _dataset_for(config, seed)
    mode = config.mode()
    if mode == "batch":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA51]))
        model = build_forest(dataset.X, T=config.T, subsample=config.subsample, rng_seed=seed)
        # per the experimental protocol, score vectors are normalized to unit length
        Z = normalize_scores(model.transform_matrix(dataset.X))
        state = FeedbackState.from_matrix(Z, tau=config.tau)
        w0 = random_unit(model.m, rng) if config.arm == "bal-noprior-rand" else w_unif(model.m)
        learn = config.arm != "unsupervised"
        lam = 0.0 if config.arm.startswith("bal-noprior") else None
        strategy = _strategy_for(config, model, dataset, rng)
        driver = BatchDriver(state, w0, config.B, strategy=strategy, learn=learn, lam=lam)
        return EngineContext(driver=driver, dataset=dataset, model=model, strategy=strategy, state=state)
    if mode == "stream":
        replace_mode = {"sal-kl": "kl", "sal-20pct": "pct20", "sal-noreplace": "never"}[config.arm]
        scfg = StreamConfig(
            K=config.K,
            B=config.B,
            Q=config.Q,
            T=config.T,
            subsample=config.subsample,
            tau=config.tau,
            alpha_kl=config.alpha_kl,
            replace_mode=replace_mode,
        )
        driver = StreamDriver(dataset.X, scfg, rng_seed=seed)
        return EngineContext(driver=driver, dataset=dataset, model=driver.model)
    # glad-family arms
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x10DA]))
    ens = fit_loda(dataset.X, M=config.M, bins=config.bins, rng=rng)
    if config.arm == "glad":
        fssn = Fssn(d=dataset.d, M=ens.M, seed=seed)
        state = GladState(ensemble=ens, fssn=fssn, X=dataset.X, b=config.bias_b, lam=config.lam, tau=config.tau)
        from adloop.glad import GladDriver

        driver = GladDriver(state, config.B, seed=seed)
        return EngineContext(driver=driver, dataset=dataset, state=state)
    if config.arm == "loda":
        driver = _RankingDriver(ens.score(dataset.X), config.B)
        return EngineContext(driver=driver, dataset=dataset)
    if config.arm == "loda-global":
        from scipy import sparse

        S = ens.member_scores(dataset.X)
        state = FeedbackState.from_matrix(sparse.csr_matrix(S), tau=config.tau)
        from adloop.feedback import BatchDriver

        driver = BatchDriver(state, w_unif(ens.M), config.B)
        return EngineContext(driver=driver, dataset=dataset, state=state)
    raise ValueError(f"unknown arm {config.arm!r}")


def _drive_with_oracle(ctx, oracle):
    driver = ctx.driver
    while not driver.done:
        qid = driver.pending_id()
        if qid is None:
            break
        driver.submit(qid, oracle.label(qid))
    return driver.history


def _run_seed(config, seed):
    ctx = build_engine(config, seed)
    oracle = Oracle(ctx.dataset)
    t0 = time.perf_counter()
    history = _drive_with_oracle(ctx, oracle)
    wall = time.perf_counter() - t0
    rules = ""
    if config.mode() == "batch" and config.arm != "unsupervised":
        rules = _rules_for(ctx.model, ctx.driver.w, ctx.dataset, ctx.state, config, seed)
    batches = [b.selected for b in getattr(ctx.strategy, "batches", [])] if ctx.strategy else []
    return SeedResult(
        seed=seed,
        curve=_pad_curve(history, config.B, ctx.dataset.n_anomalies),
        total_anomalies=ctx.dataset.n_anomalies,
        history=history,
        drift=list(getattr(ctx.driver, "drift_records", [])),
        rules_text=rules,
        diversity_batches=batches,
        wall_time=wall,
        queried_ids=[h["queried_id"] for h in history],
    )


def run(config):
    """Execute every seed of one arm; persists when config.out_dir is set."""
    config.mode()  # validate the arm early
    results = [_run_seed(config, seed) for seed in config.seeds]
    result = RunResult(config=config, seeds=results)
    if config.out_dir:
        persist(result)
    return result


def load_results(out_dir, name):
    """Reload persisted runs as RunResult shims (for curve emission)."""
    base = Path(out_dir) / name
    results = []
    for arm_dir in sorted(p for p in base.iterdir() if p.is_dir()):
        seeds = []
        config = None
        for seed_dir in sorted(arm_dir.iterdir(), key=lambda p: int(p.name)):
            payload = json.loads((seed_dir / "result.json").read_text())
            if config is None:
                config = RunConfig(**json.loads((seed_dir / "config.json").read_text()))
            seeds.append(
                SeedResult(
                    seed=payload["seed"],
                    curve=np.array(payload["curve"], dtype=np.int64),
                    total_anomalies=payload["total_anomalies"],
                    history=[],
                    wall_time=payload.get("wall_time", 0.0),
                )
            )
        if seeds:
            results.append(RunResult(config=config, seeds=seeds))
    return results


def persist(result):
    version = _code_version()
    for sr in result.seeds:
        cell = Path(result.config.out_dir) / result.config.name / result.config.arm / str(sr.seed)
        cell.mkdir(parents=True, exist_ok=True)
        (cell / "config.json").write_text(result.config.to_json())
        with open(cell / "history.jsonl", "w") as fh:
            for rec in sr.history:
                fh.write(
                    json.dumps(
                        {
                            "iter": rec["iter"],
                            "queried_id": rec["queried_id"],
                            "label": rec["label"],
                            "num_anomalies_so_far": rec["num_anomalies_so_far"],
                        }
                    )
                    + "\n"
                )
        with open(cell / "drift.jsonl", "w") as fh:
            for rec in sr.drift:
                fh.write(
                    json.dumps(
                        {
                            "window": rec["window"],
                            "n_trees_replaced": rec["n_trees_replaced"],
                            "q_kl": rec["q_kl"],
                            "kl_max": rec["kl_max"],
                        }
                    )
                    + "\n"
                )
        (cell / "rules.txt").write_text(sr.rules_text + ("\n" if sr.rules_text else ""))
        (cell / "result.json").write_text(
            json.dumps(
                {
                    "seed": sr.seed,
                    "curve": sr.curve.tolist(),
                    "total_anomalies": sr.total_anomalies,
                    "wall_time": sr.wall_time,
                    "code_version": version,
                },
                indent=2,
            )
        )


def angle_histogram(model, dataset, bins=30):
    """Angles between normalized score vectors and the uniform direction,
    split by hidden label (metrics-layer use of ground truth)."""
    Z = normalize_scores(model.transform_matrix(dataset.X))
    cos = np.clip(score_rows(w_unif(model.m), Z), -1.0, 1.0)
    angles = np.degrees(np.arccos(cos))
    y = dataset.hidden_labels()
    edges = np.histogram_bin_edges(angles, bins=bins)
    hist_anom = np.histogram(angles[y == ANOMALY], bins=edges)[0]
    hist_nom = np.histogram(angles[y != ANOMALY], bins=edges)[0]
    return {
        "edges": edges,
        "anomaly_hist": hist_anom,
        "nominal_hist": hist_nom,
        "anomaly_mean": float(angles[y == ANOMALY].mean()),
        "nominal_mean": float(angles[y != ANOMALY].mean()),
    }


def class_diversity_series(queried_batches, class_tags):
    """Unique classes per query batch and the running average across batches."""
    if class_tags is None:
        raise ValueError("dataset has no class tags")
    uniques = [len({class_tags[i] for i in batch}) for batch in queried_batches if batch]
    if not uniques:
        return {"per_batch": [], "cumulative_mean": []}
    cum = np.cumsum(uniques) / np.arange(1, len(uniques) + 1)
    return {"per_batch": uniques, "cumulative_mean": cum.tolist()}


def diversity_difference(series_a, series_b):
    """Pairwise difference of cumulative-average unique-class counts (a - b)."""
    n = min(len(series_a["cumulative_mean"]), len(series_b["cumulative_mean"]))
    a = np.array(series_a["cumulative_mean"][:n])
    b = np.array(series_b["cumulative_mean"][:n])
    return a - b


def batches_of(history, batch_size):
    ids = [h["queried_id"] for h in history]
    return [ids[i : i + batch_size] for i in range(0, len(ids), batch_size)]


def curve_summary(result):
    """Mean percent-anomalies-seen curve with 95% CI half-widths."""
    pct = np.vstack([100.0 * sr.curve / max(sr.total_anomalies, 1) for sr in result.seeds])
    mean = pct.mean(axis=0)
    n = pct.shape[0]
    if n > 1:
        hw = stats.t.ppf(0.975, n - 1) * pct.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        hw = np.zeros_like(mean)
    return mean, hw


def emit_curves(results, out_path):
    """One CSV per arm: query index, mean % anomalies seen, CI half-width."""
    out_path = Path(out_path)
    out_path.mkdir(parents=True, exist_ok=True)
    written = []
    for result in results:
        mean, hw = curve_summary(result)
        path = out_path / f"curve_{result.config.arm}.csv"
        with open(path, "w") as fh:
            fh.write("query_index,mean_pct_anomalies_seen,ci_half_width\n")
            for i, (m, h) in enumerate(zip(mean, hw), start=1):
                fh.write(f"{i},{m:.6f},{h:.6f}\n")
        written.append(path)
    return written
