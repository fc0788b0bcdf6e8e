"""Datasets and the loss-comparison protocol.

The protocol: split by time, standardise with training statistics, and for
every (loss, seed, class-0 keep ratio) cell train an MLP on the undersampled
training split.  For each (loss, seed) the ratio with the best validation IoU
is kept and its model is scored on the test split globally, on the extreme
subset, and per group.  Scores are then summarised as mean +- std over seeds.
"""

import csv
import math
import re
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import optimize, stats

from . import metrics
from .errors import (
    ConfigError, DataError, DegenerateDistributionError, DomainError, EmptyFileError,
    MissingColumnError, NonFiniteGradientError, ParseError,
)
from .extreme_dist import EgpdParams, egpd_sample
from .losses import LossConfig, make_objective, predict_class
from .mlp import MlpConfig, OptimConfig, mlp_init, mlp_predict, train_mlp
from .severity import SeverityScheme, classify, fit_egpd_scheme, fit_kmeans_scheme

N_CLASSES = 5


@dataclass
class Dataset:
    features: np.ndarray
    magnitudes: np.ndarray
    classes: Optional[np.ndarray]
    time_key: np.ndarray
    group_key: np.ndarray
    feature_names: List[str]
    row_id: Optional[np.ndarray] = None
    scheme: Optional[SeverityScheme] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.magnitudes = np.asarray(self.magnitudes, dtype=float)
        self.time_key = np.asarray(self.time_key, dtype=np.int64)
        self.group_key = np.asarray(self.group_key, dtype=str)
        if self.classes is not None:
            self.classes = np.asarray(self.classes, dtype=np.int64)
        n = len(self.magnitudes)
        if self.row_id is None:
            self.row_id = np.arange(n)
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DomainError("features must be an (N, D) matrix aligned with magnitudes")
        if self.features.shape[1] != len(self.feature_names):
            raise DomainError("one feature name per column required")
        for name, arr in (("time_key", self.time_key), ("group_key", self.group_key),
                          ("row_id", self.row_id)):
            if len(arr) != n:
                raise DomainError(f"{name} is not aligned with magnitudes")
        if self.classes is not None and len(self.classes) != n:
            raise DomainError("classes are not aligned with magnitudes")

    def __len__(self):
        return len(self.magnitudes)

    def take(self, idx):
        idx = np.asarray(idx, dtype=int)
        return replace(
            self, features=self.features[idx], magnitudes=self.magnitudes[idx],
            classes=None if self.classes is None else self.classes[idx],
            time_key=self.time_key[idx], group_key=self.group_key[idx],
            row_id=self.row_id[idx], meta=dict(self.meta),
        )

    def with_features(self, features, names):
        return replace(self, features=np.asarray(features, float), feature_names=list(names))

    def with_scheme(self, scheme: SeverityScheme):
        return replace(self, classes=classify(scheme, self.magnitudes), scheme=scheme)

    def class_histogram(self):
        if self.classes is None:
            return None
        return np.bincount(self.classes, minlength=N_CLASSES).tolist()


# -- synthetic data ---------------------------------------------------------

def _calibrate_offset(eta, gamma, target):
    """Offset ``a`` with mean(sigmoid(a - gamma * eta)) == target."""
    def gap(a):
        return np.mean(1.0 / (1.0 + np.exp(-(a - gamma * eta)))) - target
    return optimize.brentq(gap, -60.0, 60.0, xtol=1e-12)


def generate_synthetic(n=5000, d=8, params: Optional[EgpdParams] = None, zero_fraction=0.7,
                       seed=0, n_periods=7, n_groups=4, signal=1.5, scheme_method="egpd_risk",
                       transform="identity") -> Dataset:
    """Zero-inflated, eGPD-tailed magnitudes driven by a log-linear intensity.

    Covariates are standard normal.  Half of them (at least two) enter a
    latent score ``eta``; the intensity ``exp(eta)`` scales eGPD draws and a
    logistic in ``eta`` decides which rows are zero, with its offset solved so
    the expected share of zeros equals ``zero_fraction``.  Labels come from a
    severity scheme fitted on the generated magnitudes.

    If too few positives survive for the scheme to be fitted (4 distinct
    values for ``kmeans``, 10 values for ``egpd_risk``), the zero fraction is
    lowered and the zero mask redrawn; ``meta['regenerated']`` records this.
    """
    if n < 100:
        raise DomainError("n must be >= 100")
    if not 0.0 <= zero_fraction < 1.0:
        raise DomainError("zero_fraction must lie in [0, 1)")
    if d < 1:
        raise DomainError("d must be >= 1")
    if scheme_method not in ("egpd_risk", "kmeans"):
        raise DomainError(f"unknown scheme method {scheme_method!r}")
    params = params or EgpdParams(sigma=1.0, kappa=1.5, xi=0.2)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    n_signal = min(d, max(2, d // 2))
    beta = np.zeros(d)
    beta[:n_signal] = rng.normal(size=n_signal)
    beta /= np.linalg.norm(beta)
    groups = np.arange(n) % n_groups
    group_effect = np.linspace(-0.3, 0.3, n_groups)[groups]
    eta = signal * (x @ beta) + group_effect
    intensity = np.exp(eta)
    base = egpd_sample(n, params, rng)
    u = rng.uniform(size=n)

    effective, regenerated = zero_fraction, False
    while True:
        a = _calibrate_offset(eta, 2.0, effective) if effective > 0 else -np.inf
        p_zero = 1.0 / (1.0 + np.exp(-(a - 2.0 * eta)))
        magnitudes = np.where(u < p_zero, 0.0, intensity * base)
        positives = magnitudes[magnitudes > 0]
        if scheme_method == "kmeans":
            enough = len(np.unique(positives)) >= 4
        else:
            enough = len(positives) >= 10
        if enough:
            break
        effective *= 0.9
        regenerated = True

    time_key = 1 + (np.arange(n) * n_periods) // n
    names = [f"feature_{i}" for i in range(d)]
    if scheme_method == "egpd_risk":
        scheme = fit_egpd_scheme(magnitudes, transform=transform)
    else:
        scheme = fit_kmeans_scheme(magnitudes, transform=transform)
    meta = {"seed": seed, "zero_fraction": zero_fraction,
            "effective_zero_fraction": effective, "regenerated": regenerated}
    ds = Dataset(x, magnitudes, None, time_key, np.array([f"g{g}" for g in groups]),
                 names, meta=meta)
    return ds.with_scheme(scheme)


# -- CSV ingestion ----------------------------------------------------------

@dataclass(frozen=True)
class CsvSchema:
    feature_prefix: str = "feature_"
    magnitude: str = "magnitude"
    time_key: str = "time_key"
    group_key: str = "group_key"
    class_column: str = "class"


def _natural_key(name):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", name)]


def write_csv(data: Dataset, path, schema: CsvSchema = CsvSchema()):
    """Write ``data`` with shortest round-tripping float representations."""
    header = list(data.feature_names) + [schema.magnitude, schema.time_key, schema.group_key]
    if data.classes is not None:
        header.append(schema.class_column)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(data)):
            row = [repr(float(v)) for v in data.features[i]]
            row += [repr(float(data.magnitudes[i])), int(data.time_key[i]), str(data.group_key[i])]
            if data.classes is not None:
                row.append(int(data.classes[i]))
            writer.writerow(row)


def load_csv(path, schema: CsvSchema = CsvSchema()) -> Dataset:
    """Parse a dataset CSV keyed by header names.

    Feature columns are those starting with ``schema.feature_prefix``, ordered
    by natural sort of their names.  ``class`` is optional.

    Raises
    ------
    EmptyFileError, MissingColumnError, ParseError
        ``ParseError`` carries the 1-based data row and the column name.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise EmptyFileError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    if not body:
        raise EmptyFileError(f"{path}: no data rows")
    col = {name: i for i, name in enumerate(header)}
    for required in (schema.magnitude, schema.time_key, schema.group_key):
        if required not in col:
            raise MissingColumnError(f"{path}: missing column {required!r}", column=required)
    feature_names = sorted((h for h in header if h.startswith(schema.feature_prefix)), key=_natural_key)
    if not feature_names:
        raise MissingColumnError(f"{path}: no {schema.feature_prefix}* columns", column=schema.feature_prefix)
    has_class = schema.class_column in col

    def number(row_no, name, text, kind=float):
        try:
            value = kind(text)
        except ValueError:
            raise ParseError(f"{path}: row {row_no}, column {name!r}: cannot parse {text!r}",
                             row=row_no, column=name) from None
        if kind is float and not math.isfinite(value):
            raise ParseError(f"{path}: row {row_no}, column {name!r}: non-finite value {text!r}",
                             row=row_no, column=name)
        return value

    n = len(body)
    feats = np.empty((n, len(feature_names)))
    mags = np.empty(n)
    tkey = np.empty(n, dtype=np.int64)
    gkey = []
    classes = np.empty(n, dtype=np.int64) if has_class else None
    for r, row in enumerate(body):
        row_no = r + 1
        if len(row) != len(header):
            raise ParseError(f"{path}: row {row_no} has {len(row)} cells, expected {len(header)}",
                             row=row_no)
        for j, name in enumerate(feature_names):
            feats[r, j] = number(row_no, name, row[col[name]])
        mags[r] = number(row_no, schema.magnitude, row[col[schema.magnitude]])
        if mags[r] < 0:
            raise ParseError(f"{path}: row {row_no}: negative magnitude", row=row_no,
                             column=schema.magnitude)
        tkey[r] = number(row_no, schema.time_key, row[col[schema.time_key]], int)
        gkey.append(row[col[schema.group_key]])
        if has_class:
            c = number(row_no, schema.class_column, row[col[schema.class_column]], int)
            if not 0 <= c < N_CLASSES:
                raise ParseError(f"{path}: row {row_no}: class {c} out of range", row=row_no,
                                 column=schema.class_column)
            classes[r] = c
    return Dataset(feats, mags, classes, tkey, np.array(gkey, dtype=str), feature_names)


# -- feature pruning --------------------------------------------------------

@dataclass
class PruneLog:
    kept: List[str]
    removed: List[dict]


def fit_pruning(data: Dataset, var_floor=1e-10, corr_ceiling=0.9) -> PruneLog:
    """Decide which features to keep from ``data`` (the training split).

    Features below ``var_floor`` are dropped.  The rest are visited by
    decreasing variance (ties: lower column first); a feature is dropped when
    the largest of its |Pearson|, |Spearman| and |Kendall| correlations with
    an already-kept feature exceeds ``corr_ceiling``.
    """
    x = data.features
    names = data.feature_names
    var = x.var(axis=0) if len(x) else np.zeros(x.shape[1])
    removed, candidates = [], []
    for j in range(x.shape[1]):
        if var[j] < var_floor:
            removed.append({"feature": names[j], "reason": "low_variance", "variance": float(var[j])})
        else:
            candidates.append(j)
    candidates.sort(key=lambda j: (-var[j], j))
    kept = []
    for j in candidates:
        clash = None
        for k in kept:
            corr = _max_abs_corr(x[:, j], x[:, k])
            if corr > corr_ceiling:
                clash = (k, corr)
                break
        if clash is None:
            kept.append(j)
        else:
            removed.append({"feature": names[j], "reason": "correlated",
                            "with": names[clash[0]], "corr": float(clash[1])})
    if not kept:
        raise DataError("feature pruning removed every feature")
    kept.sort()
    return PruneLog([names[j] for j in kept], removed)


def _max_abs_corr(a, b):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        vals = [np.corrcoef(a, b)[0, 1], stats.spearmanr(a, b)[0], stats.kendalltau(a, b)[0]]
    vals = [abs(v) for v in vals if np.isfinite(v)]
    return max(vals) if vals else 0.0


def apply_pruning(data: Dataset, log: PruneLog) -> Dataset:
    idx = [data.feature_names.index(name) for name in log.kept]
    return data.with_features(data.features[:, idx], log.kept)


def prune_features(data: Dataset, var_floor=1e-10, corr_ceiling=0.9, fit_on: Optional[Dataset] = None):
    """Prune ``data`` with decisions made on ``fit_on`` (default ``data``).

    Returns ``(pruned, log)``.
    """
    log = fit_pruning(fit_on if fit_on is not None else data, var_floor, corr_ceiling)
    return apply_pruning(data, log), log


# -- splits -----------------------------------------------------------------

@dataclass
class Splits:
    train: Dataset
    val: Dataset
    test: Dataset
    excluded: int = 0
    warnings: List[str] = field(default_factory=list)


def _as_range(r):
    if isinstance(r, (int, np.integer)):
        return int(r), int(r)
    lo, hi = r
    if lo > hi:
        raise ConfigError(f"empty range {r!r}")
    return int(lo), int(hi)


def split_by_time(data: Dataset, train_range, val_range, test_range) -> Splits:
    """Partition rows by inclusive ``(lo, hi)`` ranges of ``time_key``."""
    ranges = [_as_range(r) for r in (train_range, val_range, test_range)]
    for i in range(3):
        for j in range(i + 1, 3):
            (a, b), (c, d) = ranges[i], ranges[j]
            if a <= d and c <= b:
                raise ConfigError(f"time ranges {ranges[i]} and {ranges[j]} overlap")
    masks = [(data.time_key >= lo) & (data.time_key <= hi) for lo, hi in ranges]
    excluded = int(np.sum(~(masks[0] | masks[1] | masks[2])))
    notes = []
    for label, m in zip(("train", "val", "test"), masks):
        if not m.any():
            msg = f"{label} split is empty"
            notes.append(msg)
            warnings.warn(msg, stacklevel=2)
    if excluded:
        notes.append(f"{excluded} rows outside every time range were excluded")
    parts = [data.take(np.flatnonzero(m)) for m in masks]
    return Splits(*parts, excluded=excluded, warnings=notes)


def standardize(splits: Splits) -> Splits:
    """Scale every split with the training mean and std (std 0 -> 1)."""
    mu = splits.train.features.mean(axis=0)
    sd = splits.train.features.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)

    def scale(ds):
        return ds.with_features((ds.features - mu) / sd, ds.feature_names)

    return replace(splits, train=scale(splits.train), val=scale(splits.val), test=scale(splits.test))


def prepare_splits(data: Dataset, train_range, val_range, test_range,
                   var_floor=1e-10, corr_ceiling=0.9):
    """Split, prune on the training split, then standardise."""
    splits = split_by_time(data, train_range, val_range, test_range)
    log = fit_pruning(splits.train, var_floor, corr_ceiling)
    splits = replace(splits, train=apply_pruning(splits.train, log),
                     val=apply_pruning(splits.val, log), test=apply_pruning(splits.test, log))
    return standardize(splits), log


# -- undersampling ----------------------------------------------------------

def undersample_grid(start=15, stop=100, step=5):
    """Keep ratios ``start%..stop%`` in ``step%`` increments."""
    return tuple(round(p / 100.0, 2) for p in range(start, stop + 1, step))


def undersample_class0(data: Dataset, keep_ratio, seed) -> Dataset:
    """Keep all positive rows and exactly ``round(keep_ratio * n0)`` class-0 rows."""
    if not 0.0 < keep_ratio <= 1.0:
        raise DomainError("keep_ratio must lie in (0, 1]")
    if data.classes is None:
        raise DomainError("dataset has no classes")
    zeros = np.flatnonzero(data.classes == 0)
    n_keep = int(round(keep_ratio * len(zeros)))
    if n_keep == len(zeros):
        return data.take(np.arange(len(data)))
    rng = np.random.default_rng(seed)
    kept_zero = rng.permutation(zeros)[:n_keep]
    mask = data.classes != 0
    mask[kept_zero] = True
    return data.take(np.flatnonzero(mask))


# -- benchmark --------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkConfig:
    ratios: tuple = field(default_factory=undersample_grid)
    hidden1: int = 128
    hidden2: int = 256
    embed: int = 64
    optim: OptimConfig = field(default_factory=OptimConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    n_bins: int = 10

    def to_dict(self):
        return {
            "ratios": list(self.ratios), "hidden1": self.hidden1, "hidden2": self.hidden2,
            "embed": self.embed, "optim": vars(self.optim).copy(), "loss": vars(self.loss).copy(),
            "n_bins": self.n_bins,
        }


@dataclass
class Cell:
    loss: str
    seed: int
    ratio: float
    n_train: int
    status: str
    val_iou: Optional[float]
    best_epoch: Optional[int]
    val_report: Optional[metrics.EvalReport]
    selected: bool = False


@dataclass
class Selection:
    loss: str
    seed: int
    ratio: float
    val_report: metrics.EvalReport
    test_report: metrics.EvalReport
    extreme_report: Optional[metrics.EvalReport]
    group_reports: Dict[str, metrics.EvalReport]
    area: Dict[str, Optional[float]]
    state: object = None


@dataclass
class SweepResult:
    cells: List[Cell]
    selections: List[Selection]
    config: BenchmarkConfig

    def selection(self, loss, seed):
        for s in self.selections:
            if s.loss == loss and s.seed == seed:
                return s
        raise KeyError((loss, seed))

    def summary(self):
        """Mean and (population) std over seeds of every flat metric, per loss."""
        out = {}
        for loss in dict.fromkeys(s.loss for s in self.selections):
            sel = [s for s in self.selections if s.loss == loss]
            sections = {
                "global": [s.test_report.flat() for s in sel],
                "extreme": [s.extreme_report.flat() if s.extreme_report else None for s in sel],
                "area": [s.area for s in sel],
            }
            loss_out = {}
            for name, rows in sections.items():
                rows = [r for r in rows if r is not None]
                keys = rows[0].keys() if rows else []
                stats_ = {}
                for k in keys:
                    vals = [r[k] for r in rows if r[k] is not None]
                    stats_[k] = ({"mean": float(np.mean(vals)), "std": float(np.std(vals))}
                                 if vals else None)
                loss_out[name] = stats_
            loss_out["selected_ratios"] = [s.ratio for s in sel]
            out[loss] = loss_out
        return out

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "cells": [
                {"loss": c.loss, "seed": c.seed, "ratio": c.ratio, "n_train": c.n_train,
                 "status": c.status, "val_iou": c.val_iou, "best_epoch": c.best_epoch,
                 "selected": c.selected}
                for c in self.cells
            ],
            "selected": [
                {"loss": s.loss, "seed": s.seed, "ratio": s.ratio,
                 "validation": s.val_report.to_dict(with_calibration=False),
                 "test_global": s.test_report.to_dict(),
                 "test_extreme": None if s.extreme_report is None else s.extreme_report.to_dict(),
                 "test_groups": {g: r.to_dict(with_calibration=False)
                                 for g, r in s.group_reports.items()},
                 "test_area": s.area}
                for s in self.selections
            ],
            "summary": self.summary(),
        }

    def csv_rows(self):
        """One flat row per cell; test columns are filled for selected cells."""
        keyed = {(s.loss, s.seed): s for s in self.selections}
        header = ["loss", "seed", "ratio", "n_train", "status", "selected", "best_epoch"]
        header += ["val_" + k for k in metrics.EvalReport.FLAT_KEYS]
        header += ["test_" + k for k in metrics.EvalReport.FLAT_KEYS]
        header += ["extreme_" + k for k in metrics.EvalReport.FLAT_KEYS]
        rows = [header]
        for c in self.cells:
            row = [c.loss, c.seed, c.ratio, c.n_train, c.status, int(c.selected), c.best_epoch]
            blank = [None] * len(metrics.EvalReport.FLAT_KEYS)
            row += list(c.val_report.flat().values()) if c.val_report else blank
            s = keyed.get((c.loss, c.seed)) if c.selected else None
            row += list(s.test_report.flat().values()) if s else blank
            row += list(s.extreme_report.flat().values()) if s and s.extreme_report else blank
            rows.append(row)
        return rows


# -- bundled benchmark ------------------------------------------------------

#: Generator arguments of the bundled synthetic benchmark.
BUNDLED_DATA = {"n": 4000, "d": 8, "zero_fraction": 0.7, "seed": 2024}
#: Inclusive time-key ranges: train periods 1-4, validation 5, test 6-7.
BUNDLED_RANGES = ((1, 4), (5, 5), (6, 7))
#: Five-point subset of the 18-ratio grid, keeping the sweep to minutes.
BUNDLED_RATIOS = (0.15, 0.3, 0.5, 0.75, 1.0)
BUNDLED_SEEDS = (1, 2, 3, 4, 5)


def bundled_benchmark():
    """``(splits, config)`` of the bundled synthetic benchmark."""
    data = generate_synthetic(**BUNDLED_DATA)
    splits, _ = prepare_splits(data, *BUNDLED_RANGES)
    return splits, BenchmarkConfig(ratios=BUNDLED_RATIOS)


def _predict(state, objective, x):
    probs = objective.probs(mlp_predict(state, x))
    return predict_class(probs), probs


def train_cell(train: Dataset, val: Dataset, loss: str, seed: int, cfg: BenchmarkConfig):
    """Train one model with early stopping on validation macro IoU."""
    objective = make_objective(loss, N_CLASSES, cfg.loss)
    mcfg = MlpConfig(train.features.shape[1], cfg.hidden1, cfg.hidden2, cfg.embed,
                     objective.out_dim, seed)
    state = mlp_init(mcfg)

    def score(st):
        pred, _ = _predict(st, objective, val.features)
        return metrics.iou(val.classes, pred, N_CLASSES)[1]

    result = train_mlp(state, train.features, train.classes, objective, cfg.optim, seed,
                       score_fn=score if len(val) else None)
    return result, objective


def _rank(cell):
    """Selection order: validation IoU, then the larger keep ratio."""
    return (cell.val_iou, cell.ratio)


def run_benchmark(splits: Splits, losses: Sequence[str], seeds: Sequence[int],
                  cfg: Optional[BenchmarkConfig] = None, keep_states=False) -> SweepResult:
    """Run the undersampling sweep for every loss and seed.

    A cell whose training fails numerically is recorded with a ``failed:``
    status and never selected.
    """
    cfg = cfg or BenchmarkConfig()
    for loss in losses:
        make_objective(loss, N_CLASSES, cfg.loss)
    if len(splits.train) == 0 or len(splits.val) == 0:
        raise ConfigError("training and validation splits must be nonempty")
    cells, selections = [], []
    for loss in losses:
        for seed in seeds:
            group, best = [], None
            for ratio in cfg.ratios:
                train = undersample_class0(splits.train, ratio, seed)
                try:
                    result, objective = train_cell(train, splits.val, loss, seed, cfg)
                except (NonFiniteGradientError, DegenerateDistributionError, FloatingPointError) as exc:
                    group.append(Cell(loss, seed, ratio, len(train), f"failed: {exc}", None, None, None))
                    continue
                pred, probs = _predict(result.state, objective, splits.val.features)
                report = metrics.evaluate(splits.val.classes, pred, probs, N_CLASSES, cfg.n_bins)
                cell = Cell(loss, seed, ratio, len(train), "ok", report.iou_macro,
                            result.best_epoch, report)
                group.append(cell)
                if best is None or _rank(cell) > _rank(best[0]):
                    best = (cell, result.state, objective)
            cells.extend(group)
            if best is None:
                continue
            cell, state, objective = best
            cell.selected = True
            selections.append(_score_selection(splits.test, cell, state, objective, cfg, keep_states))
    return SweepResult(cells, selections, cfg)


def _score_selection(test: Dataset, cell: Cell, state, objective, cfg, keep_state):
    pred, probs = _predict(state, objective, test.features)
    true = test.classes
    report = metrics.evaluate(true, pred, probs, N_CLASSES, cfg.n_bins)
    sub = metrics.extreme_subset(true, pred)
    extreme = (metrics.evaluate(true[sub], pred[sub], probs[sub], N_CLASSES, cfg.n_bins)
               if sub.size else None)
    groups = metrics.group_reports(true, pred, probs, test.group_key, N_CLASSES, cfg.n_bins)
    return Selection(cell.loss, cell.seed, cell.ratio, cell.val_report, report, extreme,
                     groups, metrics.group_mean(groups), state if keep_state else None)
