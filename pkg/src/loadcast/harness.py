"""Experiment configuration, hyperparameter selection and the benchmark matrix.

Baselines pick their settings by exhaustive search over a small grid scored
on the validation partition. Neural models pick theirs by seeded random
search: each trial trains for ``search_epochs`` epochs and is scored by
validation MAPE. The winner is retrained once on the training partition for
the largest epoch budget, with weight snapshots at the smaller budgets, and
every (model, budget) pair is scored once on the test partition.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import math
import os
import platform
import time
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from loadcast._io import atomic_write_text
from loadcast.architectures import ArchitectureSpec, NeuralForecaster, default_spec
from loadcast.baselines import (
    LinearForecaster,
    SvrForecaster,
    TreeForecaster,
    WmaCoefficients,
    WmaForecaster,
    wma_grid,
)
from loadcast.features import DatasetSplit, FeatureMatrix, extract_features, split_chronological
from loadcast.forecaster import Forecaster
from loadcast.ingest import LoadSeries, SyntheticProfileConfig, generate_synthetic, load_csv, load_holidays
from loadcast.metrics import DAY_NAMES, MetricsReport, mape
from loadcast.nn.core import TrainConfig

logger = logging.getLogger(__name__)

BASELINE_MODELS = ("WMA", "MLR", "MQR", "RT", "SVR")
NEURAL_MODELS = ("MLP", "DNN-W3", "DNN-W4", "DNN-W5", "DNN-SA3", "DNN-SA4", "DNN-SA5",
                 "RNN", "RNN-LSTM", "CNN-LSTM", "CNN")
ALL_MODELS = BASELINE_MODELS + NEURAL_MODELS
SEED_ENV = "LOADCAST_SEED"


class ConfigError(ValueError):
    pass


def derive_seed(*keys) -> int:
    """Stable 63-bit seed from a master seed and any labels (trial index, model)."""
    digest = hashlib.sha256(json.dumps([str(k) for k in keys]).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def neural_spec(name: str, **overrides) -> ArchitectureSpec:
    """Map a table row label such as ``DNN-SA4`` to its default architecture."""
    base = {"MLP": "mlp", "RNN": "rnn", "RNN-LSTM": "rnn_lstm", "CNN": "cnn", "CNN-LSTM": "cnn_lstm"}
    if name in base:
        return default_spec(base[name], **overrides)
    for prefix, kind in (("DNN-SA", "dnn_sa"), ("DNN-W", "dnn_w")):
        if name.startswith(prefix) and name[len(prefix):].isdigit():
            return default_spec(kind, int(name[len(prefix):]), **overrides)
    raise ConfigError(f"unknown neural model {name!r}")


# --------------------------------------------------------------------------
# search spaces


@dataclass(frozen=True)
class LogUniform:
    low: float
    high: float

    def sample(self, rng: np.random.Generator) -> float:
        return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.low, self.high))


def parse_space(raw: dict) -> dict:
    """JSON form: a list is a categorical choice, ``{"loguniform": [lo, hi]}``
    or ``{"uniform": [lo, hi]}`` a continuous range.
    """
    space = {}
    for key, val in raw.items():
        if isinstance(val, list):
            if not val:
                raise ConfigError(f"search dimension {key!r} has no values")
            space[key] = list(val)
        elif isinstance(val, dict) and len(val) == 1 and next(iter(val)) in ("loguniform", "uniform"):
            kind, (lo, hi) = next(iter(val.items()))
            if not lo <= hi or (kind == "loguniform" and lo <= 0):
                raise ConfigError(f"bad range for {key!r}: {val}")
            space[key] = LogUniform(lo, hi) if kind == "loguniform" else Uniform(lo, hi)
        else:
            raise ConfigError(f"search dimension {key!r} must be a list or a range, got {val!r}")
    return space


def space_to_json(space: dict) -> dict:
    out = {}
    for k, v in space.items():
        if isinstance(v, LogUniform):
            out[k] = {"loguniform": [v.low, v.high]}
        elif isinstance(v, Uniform):
            out[k] = {"uniform": [v.low, v.high]}
        else:
            out[k] = v
    return out


def space_size(space: dict) -> int | None:
    """Number of points in a finite space, ``None`` if any dimension is continuous."""
    if any(not isinstance(v, list) for v in space.values()):
        return None
    return math.prod(len(v) for v in space.values())


def enumerate_space(space: dict) -> list[dict]:
    keys = sorted(space)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(space[k] for k in keys))]


def sample_configs(space: dict, budget: int, seed: int) -> list[dict]:
    """``budget`` configurations; without replacement when the space is finite."""
    if not space:
        raise ConfigError("search space is empty")
    if budget < 1:
        raise ConfigError("search budget must be >= 1")
    rng = np.random.default_rng(seed)
    size = space_size(space)
    if size is not None:
        if budget > size:
            warnings.warn(f"search budget {budget} exceeds the {size}-point space; clamping", RuntimeWarning,
                          stacklevel=2)
            budget = size
        points = enumerate_space(space)
        return [points[i] for i in rng.choice(size, size=budget, replace=False)]
    keys = sorted(space)
    out = []
    for _ in range(budget):
        cfg = {}
        for k in keys:
            v = space[k]
            cfg[k] = v[int(rng.integers(len(v)))] if isinstance(v, list) else v.sample(rng)
        out.append(cfg)
    return out


@dataclass
class Trial:
    index: int
    params: dict
    score: float
    seconds: float
    error: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["score"] = None if not math.isfinite(self.score) else self.score
        return d


@dataclass
class SearchResult:
    best: dict
    best_score: float
    trials: list[Trial]

    @property
    def seconds(self) -> float:
        return sum(t.seconds for t in self.trials)


def _evaluate(candidates: list[dict], objective: Callable[[int, dict], float]) -> SearchResult:
    trials = []
    best_i = None
    for i, params in enumerate(candidates):
        t0 = time.perf_counter()
        error = None
        try:
            score = float(objective(i, params))
            if not math.isfinite(score):
                raise FloatingPointError("non-finite score")
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
            score, error = math.inf, f"{type(e).__name__}: {e}"
        trials.append(Trial(i, params, score, time.perf_counter() - t0, error))
        if best_i is None or score < trials[best_i].score:
            best_i = i
    best = trials[best_i]
    return SearchResult(best.params, best.score, trials)


def random_grid_search(space: dict, budget: int, seed: int, objective: Callable[[int, dict], float]) -> SearchResult:
    """Seeded random search minimizing ``objective(trial_index, params)``.

    Failing trials score ``inf``. Ties go to the earliest sampled trial.
    """
    return _evaluate(sample_configs(space, budget, seed), objective)


def validation_mape(f: Forecaster, validation: FeatureMatrix) -> float:
    return mape(validation.y[f.warmup :], f.predict(validation))


def cross_validate_baseline(name: str, grid: list[dict], split: DatasetSplit, seed: int = 0) -> SearchResult:
    """Exhaustive grid evaluation on the single chronological validation fold.

    Each candidate is trained on the training partition and scored by
    validation MAPE; ties keep the earlier grid entry.
    """
    if not grid:
        raise ConfigError(f"empty grid for {name}")

    def objective(i, params):
        return validation_mape(make_baseline(name, params, seed).fit(split.train), split.validation)

    return _evaluate(list(grid), objective)


# --------------------------------------------------------------------------
# model registry


def default_grid(name: str) -> list[dict]:
    if name == "WMA":
        return [{"alpha": c.alpha} for c in wma_grid(0.05)]
    if name in ("MLR", "MQR"):
        return [{}]
    if name == "RT":
        return [{"min_leaf": k} for k in (4, 8, 16, 32)]
    if name == "SVR":
        return [{"epsilon": e, "C": c} for e in (0.05, 0.1, 0.2) for c in (0.1, 1.0, 10.0)]
    raise ConfigError(f"unknown baseline {name!r}")


def default_space(name: str) -> dict:
    space: dict = {
        "learning_rate": LogUniform(1e-4, 1e-1),
        "batch_size": [16, 32, 64],
        "momentum": [0.5, 0.9],
    }
    spec = neural_spec(name)
    if spec.kind in ("dnn_w", "dnn_sa"):
        space["widths"] = [list(spec.widths), [2 * w for w in spec.widths]]
    elif spec.kind in ("rnn", "rnn_lstm"):
        space["widths"] = [[16], [32]]
    return space


def make_baseline(name: str, params: dict, seed: int = 0) -> Forecaster:
    params = dict(params)
    if name == "WMA":
        alpha = params.pop("alpha", 0.05)
        f = WmaForecaster(WmaCoefficients(alpha, round(1 - alpha, 10)))
    elif name == "MLR":
        f = LinearForecaster("linear", **params)
    elif name == "MQR":
        f = LinearForecaster("quadratic", **params)
    elif name == "RT":
        f = TreeForecaster(**params)
    elif name == "SVR":
        f = SvrForecaster(seed=seed % (2**32), **params)
    else:
        raise ConfigError(f"unknown baseline {name!r}")
    return f


ARCH_KEYS = {f.name for f in fields(ArchitectureSpec)} - {"kind", "hidden_layers"}
TRAIN_KEYS = {"batch_size", "learning_rate", "momentum"}


def make_neural(name: str, params: dict, epochs: int, seed: int, train_defaults: dict | None = None,
                arch_overrides: dict | None = None) -> NeuralForecaster:
    unknown = set(params) - ARCH_KEYS - TRAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown hyperparameter(s) for {name}: {sorted(unknown)}")
    arch = dict(arch_overrides or {})
    arch.update({k: v for k, v in params.items() if k in ARCH_KEYS})
    spec = neural_spec(name, **arch)
    tcfg = dict(train_defaults or {})
    tcfg.update({k: v for k, v in params.items() if k in TRAIN_KEYS})
    cfg = TrainConfig(epochs=epochs, seed=seed % (2**32), **tcfg)
    return NeuralForecaster(spec, cfg)


# --------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """Everything that determines a benchmark run. Serialized as JSON.

    ``dataset`` is ``{"synthetic": {...SyntheticProfileConfig fields}}`` or
    ``{"csv": path, "holidays": optional path, "fill_single_gaps": bool}``.
    A synthetic dataset without an explicit seed uses the master ``seed``.
    """

    seed: int = 42
    dataset: dict = field(default_factory=lambda: {"synthetic": {}})
    models: list[str] = field(default_factory=lambda: list(ALL_MODELS))
    epoch_budgets: list[int] = field(default_factory=lambda: [200, 400])
    search_budget: int = 20
    search_epochs: int = 20
    train: dict = field(default_factory=dict)
    spaces: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    architectures: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        unknown = [m for m in self.models if m not in ALL_MODELS]
        if unknown:
            raise ConfigError(f"unknown model(s) {unknown}; choose from {list(ALL_MODELS)}")
        if not self.models:
            raise ConfigError("no models selected")
        if self.search_budget < 1:
            raise ConfigError("search_budget must be >= 1")
        if self.search_epochs < 1:
            raise ConfigError("search_epochs must be >= 1")
        if not self.epoch_budgets or any(int(e) < 1 for e in self.epoch_budgets):
            raise ConfigError("epoch_budgets must be a non-empty list of positive integers")
        if set(self.train) - TRAIN_KEYS:
            raise ConfigError(f"unknown train setting(s) {sorted(set(self.train) - TRAIN_KEYS)}")
        ds = self.dataset
        if not isinstance(ds, dict) or ("synthetic" in ds) == ("csv" in ds):
            raise ConfigError("dataset must name exactly one of 'synthetic' or 'csv'")
        if "synthetic" in ds:
            bad = set(ds["synthetic"]) - {f.name for f in fields(SyntheticProfileConfig)}
            if bad:
                raise ConfigError(f"unknown synthetic setting(s) {sorted(bad)}")
        for key in ("spaces", "grids", "architectures"):
            bad = set(getattr(self, key)) - set(ALL_MODELS)
            if bad:
                raise ConfigError(f"{key} names unknown model(s) {sorted(bad)}")
        for name, raw in self.spaces.items():
            parse_space(raw)

    @property
    def budgets(self) -> list[int]:
        return sorted({int(e) for e in self.epoch_budgets})

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        bad = set(d) - {f.name for f in fields(cls)}
        if bad:
            raise ConfigError(f"unknown config field(s) {sorted(bad)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from None
        return cls.from_dict(raw)

    def with_env_seed(self, environ=os.environ) -> "ExperimentConfig":
        """Apply the ``LOADCAST_SEED`` override, if set."""
        val = environ.get(SEED_ENV)
        if val is None:
            return self
        try:
            seed = int(val)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {val!r}") from None
        return replace(self, seed=seed)

    def search_space(self, name: str) -> dict:
        return parse_space(self.spaces[name]) if name in self.spaces else default_space(name)

    def grid(self, name: str) -> list[dict]:
        return list(self.grids[name]) if name in self.grids else default_grid(name)


def load_dataset(cfg: ExperimentConfig) -> LoadSeries:
    ds = cfg.dataset
    if "synthetic" in ds:
        params = {"seed": cfg.seed, **ds["synthetic"]}
        if "holidays" in params:
            params["holidays"] = tuple(params["holidays"])
        return generate_synthetic(SyntheticProfileConfig(**params))
    holidays = load_holidays(ds["holidays"]) if ds.get("holidays") else None
    return load_csv(ds["csv"], holidays=holidays, fill_single_gaps=bool(ds.get("fill_single_gaps", False)))


# --------------------------------------------------------------------------
# running models


@dataclass
class Evaluation:
    """One final model scored once on the test partition."""

    label: str
    report: MetricsReport
    timestamps: np.ndarray
    actual: np.ndarray
    predicted: np.ndarray

    def predictions_csv(self) -> str:
        lines = ["timestamp,actual,predicted"]
        for t, a, p in zip(self.timestamps, self.actual, self.predicted):
            lines.append(f"{np.datetime64(t, 's')},{float(a)!r},{float(p)!r}")
        return "\n".join(lines) + "\n"


@dataclass
class ModelOutcome:
    name: str
    family: str
    params: dict = field(default_factory=dict)
    tune_seconds: float = 0.0
    trials: list[Trial] = field(default_factory=list)
    evaluations: dict = field(default_factory=dict)  # budget (or 0 for baselines) -> Evaluation
    error: str | None = None
    model: Forecaster | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def final(self) -> Evaluation | None:
        return self.evaluations[max(self.evaluations)] if self.evaluations else None


def evaluate_on_test(f: Forecaster, split: DatasetSplit, label: str) -> Evaluation:
    test = split.open_test(label)
    pred = f.predict(test)
    actual = test.y[f.warmup :]
    ts = test.timestamps[f.warmup :]
    report = MetricsReport.from_predictions(label, actual, pred, ts, f.train_seconds)
    return Evaluation(label, report, ts, actual, pred)


def eval_label(name: str, budget: int | None) -> str:
    return name if budget is None else f"{name}@{budget}"


def run_baseline(name: str, split: DatasetSplit, cfg: ExperimentConfig) -> ModelOutcome:
    seed = derive_seed(cfg.seed, name)
    out = ModelOutcome(name, "baseline")
    search = cross_validate_baseline(name, cfg.grid(name), split, seed)
    out.params, out.trials, out.tune_seconds = search.best, search.trials, search.seconds
    f = make_baseline(name, search.best, seed).fit(split.train)
    out.model = f
    out.evaluations[0] = evaluate_on_test(f, split, eval_label(name, None))
    return out


def run_neural(name: str, split: DatasetSplit, cfg: ExperimentConfig) -> ModelOutcome:
    out = ModelOutcome(name, "neural")
    arch = cfg.architectures.get(name)

    def objective(i, params):
        f = make_neural(name, params, cfg.search_epochs, derive_seed(cfg.seed, name, "trial", i), cfg.train, arch)
        return validation_mape(f.fit(split.train), split.validation)

    search = random_grid_search(cfg.search_space(name), cfg.search_budget, derive_seed(cfg.seed, name, "search"),
                                objective)
    out.params, out.trials, out.tune_seconds = search.best, search.trials, search.seconds
    if not math.isfinite(search.best_score):
        raise RuntimeError(f"every search trial failed for {name}")
    budgets = cfg.budgets
    f = make_neural(name, search.best, budgets[-1], derive_seed(cfg.seed, name, "final"), cfg.train, arch)
    f.fit(split.train, snapshot_epochs=budgets[:-1])
    out.model = f
    for b in budgets:
        out.evaluations[b] = evaluate_on_test(f.at_epoch(b), split, eval_label(name, b))
    return out


def run_model(name: str, split: DatasetSplit, cfg: ExperimentConfig) -> ModelOutcome:
    """Tune, train and test one model; failures are captured, not raised."""
    family = "baseline" if name in BASELINE_MODELS else "neural"
    t0 = time.perf_counter()
    try:
        out = run_baseline(name, split, cfg) if family == "baseline" else run_neural(name, split, cfg)
    except Exception as e:  # one bad model must not sink the matrix
        logger.exception("model %s failed", name)
        return ModelOutcome(name, family, error=f"{type(e).__name__}: {e}")
    logger.info("%s done in %.1fs", name, time.perf_counter() - t0)
    return out


# --------------------------------------------------------------------------
# benchmark


def environment_note() -> str:
    return (f"{platform.platform()}; python {platform.python_version()}; numpy {np.__version__}; "
            f"{os.cpu_count()} cpu")


@dataclass
class BenchmarkResult:
    config: ExperimentConfig
    outcomes: list[ModelOutcome]
    test_accesses: dict
    environment: str
    split_sizes: tuple[int, int, int]

    @property
    def config_hash(self) -> str:
        return self.config.config_hash()

    def outcome(self, name: str) -> ModelOutcome:
        for o in self.outcomes:
            if o.name == name:
                return o
        raise KeyError(name)

    def reports(self) -> list[MetricsReport]:
        return [e.report for o in self.outcomes for e in o.evaluations.values()]

    def to_dict(self) -> dict:
        models = []
        for o in self.outcomes:
            models.append({
                "name": o.name,
                "family": o.family,
                "status": "ok" if o.ok else "error",
                "error": o.error,
                "params": o.params,
                "tune_seconds": o.tune_seconds,
                "trials": [t.to_dict() for t in o.trials],
                "reports": {str(b): e.report.to_dict() for b, e in o.evaluations.items()},
            })
        return {
            "config": self.config.to_dict(),
            "config_hash": self.config_hash,
            "environment": self.environment,
            "split_sizes": list(self.split_sizes),
            "search_spaces": {n: space_to_json(self.config.search_space(n))
                              for n in self.config.models if n in NEURAL_MODELS},
            "baseline_grids": {n: self.config.grid(n) for n in self.config.models if n in BASELINE_MODELS},
            "test_accesses": dict(sorted(self.test_accesses.items())),
            "models": models,
        }


def run_benchmark(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> BenchmarkResult:
    """Run every configured model and optionally write the result directory."""
    series = load_dataset(cfg)
    split = split_chronological(extract_features(series))
    logger.info("split sizes %s", split.sizes)
    outcomes = [run_model(name, split, cfg) for name in cfg.models]
    result = BenchmarkResult(cfg, outcomes, dict(split.test_accesses), environment_note(), split.sizes)
    if out_dir is not None:
        write_results(result, out_dir)
    return result


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def table1_csv(result: BenchmarkResult) -> str:
    lines = ["algorithm,mape,mpe,time_s,tune_s,status"]
    for o in result.outcomes:
        if o.family != "baseline":
            continue
        if o.ok:
            r = o.final().report
            lines.append(f"{o.name},{_num(r.mape)},{_num(r.mpe)},{_num(r.train_seconds)},{_num(o.tune_seconds)},ok")
        else:
            lines.append(f"{o.name},,,,,error")
    return "\n".join(lines) + "\n"


def table2_csv(result: BenchmarkResult) -> str:
    budgets = result.config.budgets
    head = ["algorithm"] + [f"{k}_{b}" for b in budgets for k in ("mape", "mpe", "time_s")] + ["status"]
    lines = [",".join(head)]
    for o in result.outcomes:
        if o.family != "neural":
            continue
        cells = [o.name]
        for b in budgets:
            e = o.evaluations.get(b)
            cells += [_num(e.report.mape), _num(e.report.mpe), _num(e.report.train_seconds)] if e else ["", "", ""]
        cells.append("ok" if o.ok else "error")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def table3_csv(result: BenchmarkResult) -> str:
    lines = [",".join(("algorithm",) + DAY_NAMES)]
    for o in result.outcomes:
        e = o.final()
        days = e.report.daily_mape if e else (None,) * 7
        lines.append(",".join([o.name] + [_num(v) for v in days]))
    return "\n".join(lines) + "\n"


TIME_COLUMNS = {"time_s", "tune_s"}


def strip_time_columns(table: str) -> str:
    """Drop wall-clock columns so tables from repeated runs compare byte-for-byte."""
    rows = [line.split(",") for line in table.splitlines()]
    keep = [i for i, h in enumerate(rows[0]) if h not in TIME_COLUMNS and not h.startswith("time_s_")]
    return "\n".join(",".join(r[i] for i in keep) for r in rows) + "\n"


def write_results(result: BenchmarkResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    (out / "predictions").mkdir(parents=True, exist_ok=True)
    for o in result.outcomes:
        for b, e in o.evaluations.items():
            fname = o.name if b == 0 else f"{o.name}_e{b}"
            atomic_write_text(out / "predictions" / f"{fname}.csv", e.predictions_csv())
    atomic_write_text(out / "table1.csv", table1_csv(result))
    atomic_write_text(out / "table2.csv", table2_csv(result))
    atomic_write_text(out / "table3.csv", table3_csv(result))
    atomic_write_text(out / "result.json", json.dumps(result.to_dict(), sort_keys=True, indent=2))
