"""Command-line entry point: ``loadcast {generate,features,train,benchmark,price}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from loadcast._io import atomic_write_text
from loadcast.features import extract_features, split_chronological
from loadcast.harness import (
    SEED_ENV,
    ConfigError,
    ExperimentConfig,
    cross_validate_baseline,
    default_grid,
    evaluate_on_test,
    make_baseline,
    make_neural,
    run_benchmark,
)
from loadcast.ingest import SeriesError, SyntheticProfileConfig, generate_synthetic, load_csv, load_holidays, write_csv
from loadcast.metrics import MetricsReport
from loadcast.pricing import PricingPolicy, price_schedule
from loadcast.serialize import save_model

logger = logging.getLogger("loadcast")

BASELINE_FLAGS = {"wma": "WMA", "mlr": "MLR", "mqr": "MQR", "rt": "RT", "svr": "SVR"}
NEURAL_FLAGS = {"mlp": "MLP", "dnn-w": "DNN-W", "dnn-sa": "DNN-SA", "rnn": "RNN", "rnn-lstm": "RNN-LSTM",
                "cnn": "CNN", "cnn-lstm": "CNN-LSTM"}


class CliError(Exception):
    """An error with a message meant for the user; exits with status 1."""


def _seed(arg: int | None) -> int:
    if arg is not None:
        return arg
    val = os.environ.get(SEED_ENV)
    if val is None:
        return 42
    try:
        return int(val)
    except ValueError:
        raise CliError(f"{SEED_ENV} must be an integer, got {val!r}") from None


def _series(args):
    if args.csv:
        holidays = load_holidays(args.holidays) if args.holidays else None
        return load_csv(args.csv, holidays=holidays, fill_single_gaps=args.fill_gaps)
    return generate_synthetic(SyntheticProfileConfig(n_hours=args.hours, seed=_seed(args.seed)))


def _add_source(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data source (synthetic unless --csv is given)")
    g.add_argument("--csv", help="meter CSV: timestamp,load_kw,temp_c,humidity_pct,is_holiday")
    g.add_argument("--holidays", help="file of ISO dates overriding the CSV holiday flags")
    g.add_argument("--fill-gaps", action="store_true", help="interpolate isolated missing hours")
    g.add_argument("--seed", type=int, help=f"synthetic/master seed (default ${SEED_ENV} or 42)")
    g.add_argument("--hours", type=int, default=8760, help="synthetic series length")


def cmd_generate(args) -> None:
    s = generate_synthetic(SyntheticProfileConfig(n_hours=args.hours, seed=_seed(args.seed), start=args.start))
    write_csv(s, args.out)
    print(f"wrote {len(s)} hours to {args.out}")


def cmd_features(args) -> None:
    m = extract_features(_series(args))
    m.write_csv(args.out)
    print(f"wrote {len(m)} feature rows to {args.out}")


def cmd_train(args) -> None:
    split = split_chronological(extract_features(_series(args)))
    seed = _seed(args.seed)
    if args.model in BASELINE_FLAGS:
        name = BASELINE_FLAGS[args.model]
        best = cross_validate_baseline(name, default_grid(name), split, seed).best
        f = make_baseline(name, best, seed).fit(split.train)
    else:
        name = NEURAL_FLAGS[args.model]
        if name in ("DNN-W", "DNN-SA"):
            name = f"{name}{args.layers}"
        elif args.layers is not None and args.layers != 1:
            raise CliError(f"--layers applies only to dnn-w and dnn-sa, not {args.model}")
        params = {k: v for k, v in (("learning_rate", args.learning_rate), ("batch_size", args.batch_size),
                                    ("momentum", args.momentum)) if v is not None}
        f = make_neural(name, params, args.epochs, seed).fit(split.train)
    ev = evaluate_on_test(f, split, name)
    print(",".join(MetricsReport.CSV_HEADER))
    print(ev.report.csv_row())
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / "report.json", ev.report.to_json())
        atomic_write_text(out / "predictions.csv", ev.predictions_csv())
    if args.save_model:
        save_model(f, args.save_model)


def cmd_benchmark(args) -> None:
    if args.config:
        try:
            cfg = ExperimentConfig.load(args.config)
        except ConfigError as e:
            raise CliError(f"invalid config {args.config}: {e}") from None
    else:
        cfg = ExperimentConfig()
    cfg = cfg.with_env_seed()
    if args.seed is not None:
        cfg.seed = args.seed
    result = run_benchmark(cfg, args.out)
    failed = [o.name for o in result.outcomes if not o.ok]
    print(f"wrote results to {args.out} (config {result.config_hash[:12]})")
    if failed:
        print(f"models that failed: {', '.join(failed)}", file=sys.stderr)


def read_predictions(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"predictions file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"timestamp", "predicted"} <= set(reader.fieldnames):
            raise CliError(f"{path}: expected columns timestamp and predicted")
        rows = list(reader)
    if not rows:
        raise CliError(f"{path}: no prediction rows")
    try:
        ts = np.array([r["timestamp"] for r in rows], dtype="datetime64[s]")
        pred = np.array([float(r["predicted"]) for r in rows])
    except ValueError as e:
        raise CliError(f"{path}: {e}") from None
    return ts, pred


def cmd_price(args) -> None:
    try:
        policy = PricingPolicy.from_json(args.policy) if args.policy else PricingPolicy()
    except FileNotFoundError:
        raise CliError(f"policy file not found: {args.policy}") from None
    except (json.JSONDecodeError, TypeError, ValueError) as e:
        raise CliError(f"invalid policy {args.policy}: {e}") from None
    ts, pred = read_predictions(args.predictions)
    sched = price_schedule(pred, policy, ts)
    sched.write_csv(args.out)
    print(f"wrote {len(pred)} hourly prices to {args.out} ({int(sched.peak.sum())} peak hours)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="loadcast", description="Hourly electric load forecasting benchmark.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic hourly load CSV")
    g.add_argument("--seed", type=int)
    g.add_argument("--hours", type=int, default=8760)
    g.add_argument("--start", default="2015-01-01T00:00")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("features", help="dump the 18-column feature matrix")
    _add_source(f)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_features)

    t = sub.add_parser("train", help="train one model and score it on the test split")
    t.add_argument("--model", required=True, choices=sorted(BASELINE_FLAGS) + sorted(NEURAL_FLAGS))
    t.add_argument("--layers", type=int, default=None, help="hidden layers for dnn-w/dnn-sa (default 3)")
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--learning-rate", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--momentum", type=float)
    t.add_argument("--out-dir", help="write report.json and predictions.csv here")
    t.add_argument("--save-model", help="write the fitted model as JSON")
    _add_source(t)
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("benchmark", help="run the full model matrix")
    b.add_argument("--config", help="ExperimentConfig JSON (defaults if omitted)")
    b.add_argument("--seed", type=int, help="override the config seed")
    b.add_argument("--out", required=True, help="results directory")
    b.set_defaults(func=cmd_benchmark)

    pr = sub.add_parser("price", help="turn a predictions CSV into an hourly tariff")
    pr.add_argument("--predictions", required=True, help="CSV with timestamp and predicted columns")
    pr.add_argument("--policy", help="PricingPolicy JSON (defaults if omitted)")
    pr.add_argument("--out", default="schedule.csv")
    pr.set_defaults(func=cmd_price)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command == "train" and args.layers is None and args.model in ("dnn-w", "dnn-sa"):
        args.layers = 3
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as e:
        print(f"loadcast: error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        msg = str(e) if e.filename is None else f"file not found: {e.filename}"
        print(f"loadcast: error: {msg}", file=sys.stderr)
        return 1
    except ConfigError as e:
        print(f"loadcast: error: invalid config: {e}", file=sys.stderr)
        return 1
    except SeriesError as e:
        print(f"loadcast: error: bad input series: {e}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError) as e:
        print(f"loadcast: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
