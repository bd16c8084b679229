"""Dataset ingestion, label oracle, stream windowing, and synthetic data.

Hidden labels live on the Dataset but are only ever read through the Oracle
or the metrics layer; learning code works purely from features and ids.
"""

from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass, field

import numpy as np

ANOMALY = 1
NOMINAL = -1

# Accepted spellings for label values in CSV files.
LABEL_ALIASES = {
    "anomaly": ANOMALY,
    "nominal": NOMINAL,
    "1": ANOMALY,
    "+1": ANOMALY,
    "-1": NOMINAL,
}


class DataError(ValueError):
    """Malformed input file or invalid feature values."""


@dataclass(frozen=True)
class Instance:
    id: int
    features: np.ndarray
    hidden_label: int | None = None
    class_tag: str | None = None


class Dataset:
    """Immutable ordered collection of instances.

    Row order is preserved from the source file: it is also the stream order.
    """

    def __init__(self, X, labels=None, class_tags=None, feature_names=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise DataError("feature matrix must be a nonempty 2-d array")
        if not np.all(np.isfinite(X)):
            bad = int(np.argwhere(~np.all(np.isfinite(X), axis=1))[0][0])
            raise DataError(f"non-finite feature value in row {bad}")
        self.X = X
        self.X.setflags(write=False)
        self.n, self.d = X.shape
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (self.n,):
                raise DataError("labels length must match number of rows")
            if not np.all(np.isin(labels, (ANOMALY, NOMINAL))):
                raise DataError("labels must be +1 (anomaly) or -1 (nominal)")
            labels.setflags(write=False)
        self._labels = labels
        self.class_tags = list(class_tags) if class_tags is not None else None
        self.feature_names = (
            list(feature_names) if feature_names is not None else [f"x{j}" for j in range(self.d)]
        )
        self.bounding_box = np.stack([X.min(axis=0), X.max(axis=0)], axis=1)
        self.bounding_box.setflags(write=False)

    @property
    def anomaly_fraction(self):
        if self._labels is None:
            raise DataError("dataset has no labels")
        return float(np.mean(self._labels == ANOMALY))

    @property
    def n_anomalies(self):
        if self._labels is None:
            raise DataError("dataset has no labels")
        return int(np.sum(self._labels == ANOMALY))

    def hidden_labels(self):
        """Ground-truth labels; for the Oracle and the metrics layer only."""
        if self._labels is None:
            raise DataError("dataset has no labels")
        return self._labels

    def instance(self, i):
        if not 0 <= i < self.n:
            raise DataError(f"unknown instance id {i}")
        return Instance(
            id=i,
            features=self.X[i],
            hidden_label=None if self._labels is None else int(self._labels[i]),
            class_tag=None if self.class_tags is None else self.class_tags[i],
        )

    def clip_box(self, margin=0.05):
        """Bounding box expanded by `margin` per side; degenerate dims get unit width.

        This is the clipping box that makes boundary-leaf volumes finite and
        comparable.
        """
        lo = self.bounding_box[:, 0].copy()
        hi = self.bounding_box[:, 1].copy()
        width = hi - lo
        flat = width <= 0
        lo[flat] -= 0.5
        hi[flat] += 0.5
        lo[~flat] -= margin * width[~flat]
        hi[~flat] += margin * width[~flat]
        return np.stack([lo, hi], axis=1)


def load_csv(path, label_column="label", class_column=None):
    """Load a headered CSV into a Dataset, preserving row order."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if label_column not in header:
            raise DataError(f"{path}: missing label column {label_column!r}")
        label_idx = header.index(label_column)
        class_idx = None
        if class_column is not None:
            if class_column not in header:
                raise DataError(f"{path}: missing class column {class_column!r}")
            class_idx = header.index(class_column)
        feat_idx = [j for j in range(len(header)) if j not in (label_idx, class_idx)]
        feature_names = [header[j] for j in feat_idx]

        rows, labels, tags = [], [], []
        for rownum, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}: row {rownum}: expected {len(header)} fields, got {len(row)}")
            raw = row[label_idx].strip().lower()
            if raw not in LABEL_ALIASES:
                raise DataError(f"{path}: row {rownum}: unknown label value {row[label_idx]!r}")
            labels.append(LABEL_ALIASES[raw])
            try:
                feats = [float(row[j]) for j in feat_idx]
            except ValueError as exc:
                raise DataError(f"{path}: row {rownum}: {exc}") from None
            if not all(math.isfinite(v) for v in feats):
                raise DataError(f"{path}: row {rownum}: non-finite feature value")
            rows.append(feats)
            if class_idx is not None:
                tags.append(row[class_idx])
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(
        np.array(rows, dtype=np.float64),
        labels=labels,
        class_tags=tags if class_idx is not None else None,
        feature_names=feature_names,
    )


def write_csv(dataset, path, label_column="label", class_column=None):
    """Inverse of load_csv; repr() floats so a reload is bit-identical."""
    labels = dataset.hidden_labels()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = list(dataset.feature_names) + [label_column]
        if class_column is not None:
            header.append(class_column)
        writer.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.X[i]] + [str(int(labels[i]))]
            if class_column is not None:
                row.append(dataset.class_tags[i] if dataset.class_tags else "")
            writer.writerow(row)


def downsample_anomalies(dataset, fraction, seed):
    """Subsample anomalies so they make up `fraction` of the result.

    Keeps all nominals and the original relative order of retained rows.
    """
    labels = dataset.hidden_labels()
    anom = np.flatnonzero(labels == ANOMALY)
    nom_count = int(np.sum(labels == NOMINAL))
    want = int(round(fraction / (1.0 - fraction) * nom_count))
    if want >= anom.size:
        return dataset
    rng = np.random.default_rng(seed)
    keep_anom = rng.choice(anom, size=want, replace=False)
    keep = np.zeros(dataset.n, dtype=bool)
    keep[labels == NOMINAL] = True
    keep[keep_anom] = True
    idx = np.flatnonzero(keep)
    return Dataset(
        dataset.X[idx],
        labels=labels[idx],
        class_tags=[dataset.class_tags[i] for i in idx] if dataset.class_tags else None,
        feature_names=dataset.feature_names,
    )


class Oracle:
    """Simulated analyst: answers label queries from the hidden labels.

    Repeat queries for the same id return the same answer and are logged once.
    """

    def __init__(self, dataset):
        self._labels = dataset.hidden_labels()
        self.n = dataset.n
        self.query_log = []
        self._seen = set()
        self._lock = threading.Lock()

    def label(self, instance_id):
        if not 0 <= instance_id < self.n:
            raise DataError(f"unknown instance id {instance_id}")
        y = int(self._labels[instance_id])
        with self._lock:
            if instance_id not in self._seen:
                self._seen.add(instance_id)
                self.query_log.append((instance_id, y))
        return y


class ScriptedOracle:
    """Oracle replaying a fixed id -> label mapping (service-parity tests)."""

    def __init__(self, mapping):
        self._mapping = dict(mapping)
        self.query_log = []
        self._seen = set()

    def label(self, instance_id):
        y = int(self._mapping[instance_id])
        if instance_id not in self._seen:
            self._seen.add(instance_id)
            self.query_log.append((instance_id, y))
        return y


def stream_windows(n, K):
    """Consecutive order-preserving index batches; all but the last have size K."""
    if K < 1:
        raise DataError("window size K must be >= 1")
    return [np.arange(s, min(s + K, n)) for s in range(0, n, K)]


def _cluster_centers(rng, n_clusters, d, spread=6.0, min_sep=3.0):
    centers = []
    for _ in range(n_clusters):
        for _attempt in range(200):
            c = rng.uniform(-spread, spread, size=d)
            if all(np.linalg.norm(c - o) >= min_sep for o in centers):
                centers.append(c)
                break
        else:
            centers.append(rng.uniform(-spread, spread, size=d))
    return np.array(centers)


def make_synthetic(
    n=2000,
    d=2,
    n_clusters=2,
    anomaly_fraction=0.02,
    seed=0,
    cluster_std=0.6,
    anomaly_mode="uniform",
    n_anomaly_clusters=2,
    anomaly_cluster_std=0.25,
    background_fraction=0.0,
    shuffle=True,
):
    """Gaussian nominal clusters plus anomalies; the canonical CI dataset.

    anomaly_mode:
      - "uniform": anomalies uniform over an expanded box around the clusters
      - "clustered": anomalies in small tight clusters away from the nominals
      - "mixed": half uniform, half clustered
    background_fraction of the nominals are drawn uniformly over the box
    (diffuse nominal noise that unsupervised detectors mistake for anomalies).
    Class tags record the generating cluster (c0, c1, ... / a0, a1, ...).
    """
    rng = np.random.default_rng(seed)
    n_anom = max(1, int(round(n * anomaly_fraction)))
    n_nom = n - n_anom
    centers = _cluster_centers(rng, n_clusters, d)

    n_bg = int(round(background_fraction * n_nom))
    assign = rng.integers(0, n_clusters, size=n_nom - n_bg)
    X_nom = centers[assign] + rng.normal(0.0, cluster_std, size=(n_nom - n_bg, d))
    tags_nom = [f"c{j}" for j in assign]
    if n_bg:
        bg_lo = centers.min(axis=0) - 4.0
        bg_hi = centers.max(axis=0) + 4.0
        X_nom = np.vstack([X_nom, rng.uniform(bg_lo, bg_hi, size=(n_bg, d))])
        tags_nom += ["c_bg"] * n_bg

    lo = centers.min(axis=0) - 4.0
    hi = centers.max(axis=0) + 4.0

    def _uniform_anoms(count, tag):
        pts, tgs = [], []
        while len(pts) < count:
            x = rng.uniform(lo, hi)
            if all(np.linalg.norm(x - c) > 2.5 * cluster_std for c in centers):
                pts.append(x)
                tgs.append(tag)
        return pts, tgs

    if anomaly_mode == "uniform":
        pts, tags_anom = _uniform_anoms(n_anom, "a0")
        X_anom = np.array(pts)
    elif anomaly_mode in ("clustered", "mixed"):
        n_uni = n_anom // 2 if anomaly_mode == "mixed" else 0
        n_clu = n_anom - n_uni
        acenters = []
        for _ in range(n_anomaly_clusters):
            for _attempt in range(500):
                c = rng.uniform(lo, hi)
                if all(np.linalg.norm(c - cc) > 3.5 * cluster_std for cc in centers):
                    acenters.append(c)
                    break
        acenters = np.array(acenters)
        assign_a = rng.integers(0, len(acenters), size=n_clu)
        X_clu = acenters[assign_a] + rng.normal(0.0, anomaly_cluster_std, size=(n_clu, d))
        tags_anom = [f"a{j}" for j in assign_a]
        if n_uni:
            pts, tgs = _uniform_anoms(n_uni, f"a{len(acenters)}")
            X_anom = np.vstack([X_clu, np.array(pts)])
            tags_anom += tgs
        else:
            X_anom = X_clu
    else:
        raise DataError(f"unknown anomaly_mode {anomaly_mode!r}")

    X = np.vstack([X_nom, X_anom])
    labels = np.concatenate([np.full(n_nom, NOMINAL), np.full(len(X_anom), ANOMALY)])
    tags = tags_nom + tags_anom
    if shuffle:
        order = rng.permutation(len(X))
        X, labels = X[order], labels[order]
        tags = [tags[i] for i in order]
    return Dataset(X, labels=labels, class_tags=tags)


def make_drift_stream(
    n_windows=8,
    K=512,
    d=4,
    anomaly_fraction=0.04,
    drift_window=None,
    shift_sigmas=3.0,
    seed=0,
    cluster_std=0.7,
    haunt_spread=0.8,
):
    """Stream-ordered dataset; from `drift_window` on, nominal clusters shift
    by `shift_sigmas` standard deviations on the first half of the features.

    Post-drift anomalies sit at the vacated pre-drift cluster sites: a stale
    model scores them as normal, an adapted one isolates them immediately.
    drift_window=None gives a stationary stream.
    """
    rng = np.random.default_rng(seed)
    centers = _cluster_centers(rng, 2, d)
    shift = np.zeros(d)
    shift[: d // 2 or 1] = shift_sigmas * cluster_std

    X_parts, y_parts = [], []
    for w in range(n_windows):
        drifted = drift_window is not None and w >= drift_window
        offset = shift if drifted else 0.0
        n_anom = max(1, int(round(K * anomaly_fraction)))
        n_nom = K - n_anom
        assign = rng.integers(0, len(centers), size=n_nom)
        X_nom = centers[assign] + offset + rng.normal(0.0, cluster_std, size=(n_nom, d))
        if drifted:
            # anomalies haunt the old cluster locations
            which = rng.integers(0, len(centers), size=n_anom)
            pts = centers[which] + rng.normal(0.0, haunt_spread * cluster_std, size=(n_anom, d))
        else:
            lo = centers.min(axis=0) - 4.0
            hi = centers.max(axis=0) + 4.0
            pts = []
            while len(pts) < n_anom:
                x = rng.uniform(lo, hi)
                if all(np.linalg.norm(x - c) > 2.5 * cluster_std for c in centers):
                    pts.append(x)
            pts = np.array(pts)
        X_parts.append(np.vstack([X_nom, pts]))
        y_parts.append(np.concatenate([np.full(n_nom, NOMINAL), np.full(n_anom, ANOMALY)]))
        # shuffle within the window so anomalies are not trailing
        order = rng.permutation(K)
        X_parts[-1] = X_parts[-1][order]
        y_parts[-1] = y_parts[-1][order]
    return Dataset(np.vstack(X_parts), labels=np.concatenate(y_parts))
