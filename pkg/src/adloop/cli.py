"""Command-line interface: run experiments, dump angle histograms, emit
curve CSVs, and serve the interactive labeling API."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from adloop.harness import (
    PAPER_PRESETS,
    RunConfig,
    angle_histogram,
    curve_summary,
    emit_curves,
    load_results,
    run,
)


def _parse_kv(text):
    """'kind=benchmark,n=1400,d=2' -> dict with int/float coercion."""
    out = {}
    if not text:
        return out
    for pair in text.split(","):
        key, _, value = pair.partition("=")
        key, value = key.strip(), value.strip()
        try:
            out[key] = int(value)
        except ValueError:
            try:
                out[key] = float(value)
            except ValueError:
                out[key] = value
    return out


def _add_run_args(p):
    p.add_argument("--config", help="ini file with a [run] section")
    p.add_argument("--name")
    p.add_argument("--arm")
    p.add_argument("--strategy", choices=["top", "diverse", "random-top"])
    p.add_argument("--dataset", help="CSV path; omit to use the synthetic generator")
    p.add_argument("--label-column")
    p.add_argument("--class-column")
    p.add_argument("--synthetic", help="generator args, e.g. kind=benchmark,n=1400")
    p.add_argument("--seeds", help="comma-separated, e.g. 0,1,2")
    p.add_argument("--budget", type=int, dest="B")
    p.add_argument("--queries-per-window", type=int, dest="Q")
    p.add_argument("--window", type=int, dest="K")
    p.add_argument("--tau", type=float)
    p.add_argument("--alpha-kl", type=float, dest="alpha_kl")
    p.add_argument("--delta", type=int)
    p.add_argument("--trees", type=int, dest="T")
    p.add_argument("--subsample", type=int)
    p.add_argument("--projections", type=int, dest="M")
    p.add_argument("--bias", type=float, dest="bias_b")
    p.add_argument("--precision-threshold", type=float, dest="precision_t")
    p.add_argument("--preset", choices=sorted(PAPER_PRESETS))
    p.add_argument("--out", dest="out_dir", help="results directory (runs/)")


def _config_from_args(args):
    if args.config:
        config = RunConfig.from_ini(args.config)
    else:
        config = RunConfig()
    if args.preset:
        for key, value in PAPER_PRESETS[args.preset].items():
            setattr(config, key, value)
    for field in (
        "name",
        "arm",
        "strategy",
        "dataset",
        "label_column",
        "class_column",
        "B",
        "Q",
        "K",
        "tau",
        "alpha_kl",
        "delta",
        "T",
        "subsample",
        "M",
        "bias_b",
        "precision_t",
        "out_dir",
    ):
        value = getattr(args, field, None)
        if value is not None:
            setattr(config, field, value)
    if args.synthetic:
        config.synthetic = _parse_kv(args.synthetic)
    if args.seeds:
        config.seeds = [int(s) for s in args.seeds.replace(",", " ").split()]
    return config


def cmd_run(args):
    config = _config_from_args(args)
    result = run(config)
    mean, hw = curve_summary(result)
    final = mean[-1] if mean.size else 0.0
    print(f"arm={config.arm} seeds={config.seeds} B={config.B}")
    print(f"mean anomalies seen at budget: {final:.1f}% (+/- {hw[-1] if hw.size else 0:.1f})")
    if config.out_dir:
        print(f"results under {Path(config.out_dir) / config.name / config.arm}")
    return 0


def cmd_angles(args):
    from adloop.data import load_csv, make_synthetic
    from adloop.forest import build_forest

    if args.dataset:
        ds = load_csv(args.dataset, args.label_column or "label", args.class_column)
    else:
        ds = make_synthetic(**_parse_kv(args.synthetic or ""))
    model = build_forest(ds.X, T=args.trees, subsample=args.subsample, rng_seed=args.seed)
    hist = angle_histogram(model, ds, bins=args.bins)
    out = Path(args.out)
    with open(out, "w") as fh:
        fh.write("bin_lo,bin_hi,anomaly_count,nominal_count\n")
        for i in range(len(hist["anomaly_hist"])):
            fh.write(
                f"{hist['edges'][i]:.6f},{hist['edges'][i + 1]:.6f},"
                f"{hist['anomaly_hist'][i]},{hist['nominal_hist'][i]}\n"
            )
    print(f"anomaly mean angle {hist['anomaly_mean']:.2f} deg, nominal {hist['nominal_mean']:.2f} deg")
    print(f"histogram written to {out}")
    return 0


def cmd_curves(args):
    results = load_results(args.runs, args.name)
    if not results:
        print(f"no persisted results under {args.runs}/{args.name}", file=sys.stderr)
        return 1
    paths = emit_curves(results, args.out)
    for p in paths:
        print(p)
    return 0


def cmd_serve(args):
    import uvicorn

    from adloop.service import create_app

    app = create_app(sessions_dir=args.sessions_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="adloop", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one arm over its seeds")
    _add_run_args(p_run)
    p_run.set_defaults(func=cmd_run)

    p_ang = sub.add_parser("angles", help="angle histogram of score vectors vs the uniform direction")
    p_ang.add_argument("--dataset")
    p_ang.add_argument("--label-column")
    p_ang.add_argument("--class-column")
    p_ang.add_argument("--synthetic")
    p_ang.add_argument("--trees", type=int, default=100)
    p_ang.add_argument("--subsample", type=int, default=256)
    p_ang.add_argument("--seed", type=int, default=0)
    p_ang.add_argument("--bins", type=int, default=30)
    p_ang.add_argument("--out", default="angles.csv")
    p_ang.set_defaults(func=cmd_angles)

    p_cur = sub.add_parser("curves", help="emit mean curve CSVs from persisted runs")
    p_cur.add_argument("--runs", required=True)
    p_cur.add_argument("--name", required=True)
    p_cur.add_argument("--out", required=True)
    p_cur.set_defaults(func=cmd_curves)

    p_srv = sub.add_parser("serve", help="serve the labeling API")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8765)
    p_srv.add_argument("--sessions-dir", default=None)
    p_srv.set_defaults(func=cmd_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
