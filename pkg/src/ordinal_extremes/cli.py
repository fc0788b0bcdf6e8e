"""Command-line interface: ``ordinal-extremes <command> [flags]``.

Commands
--------
gen         generate a synthetic dataset CSV
fit-scheme  fit a severity scheme on a dataset's magnitudes
train       train one model (one loss, one seed, one keep ratio)
sweep       run the undersampling sweep over losses and seeds
gradcheck   finite-difference verification of every loss

Every flag may also be given in a JSON file passed with ``--config``; keys
mirror the flag names (``zero-fraction`` or ``zero_fraction``).  Flags
override the file, which overrides the defaults.  Output paths are relative
to ``$ORDINAL_EXTREMES_OUTPUT_DIR`` when it is set.

Exit codes: 0 success, 1 check failure, 2 usage or validation error,
3 insufficient data, 4 input/output error.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ConfigError, DataError, DomainError, EmptyFileError, InsufficientDataError,
    MissingColumnError, OrdinalExtremesError, ParseError, UndefinedScoreError,
)
from .experiment import (
    BUNDLED_RANGES, BUNDLED_RATIOS, BUNDLED_SEEDS, BenchmarkConfig, bundled_benchmark,
    generate_synthetic, load_csv, prepare_splits, run_benchmark, undersample_grid, write_csv,
)
from .extreme_dist import EgpdParams
from .gradcheck import TOLERANCE, run_gradcheck
from .losses import LOSS_NAMES, LossConfig
from .mlp import OptimConfig
from .severity import (
    SeverityScheme, apply_transform, classify, fit_egpd_scheme, fit_kmeans_scheme, silhouette_1d,
)

TOOL = "ordinal-extremes"
OUTPUT_ENV = "ORDINAL_EXTREMES_OUTPUT_DIR"

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_DATA, EXIT_IO = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


# -- flag parsing helpers ---------------------------------------------------

def _int_list(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _name_list(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _time_range(text):
    parts = str(text).split("-")
    if len(parts) == 1:
        return int(parts[0]), int(parts[0])
    if len(parts) == 2:
        return int(parts[0]), int(parts[1])
    raise ValueError(f"bad time range {text!r}; use LO-HI or a single period")


TRAINING_DEFAULTS = {
    "data": None, "scheme": None, "bundled": False,
    "train_range": "1-4", "val_range": "5", "test_range": "6-7",
    "optimizer": "adam", "lr": 1e-3, "batch_size": 64, "epochs": 300, "patience": 20,
    "hidden1": 128, "hidden2": 256, "embed": 64, "mcewk_c": 0.7, "penalty": "quadratic",
    "bins": 10, "var_floor": 1e-10, "corr_ceiling": 0.9,
}

DEFAULTS = {
    "gen": {"n": 5000, "d": 8, "seed": 0, "zero_fraction": 0.7, "sigma": 1.0, "kappa": 1.5,
            "xi": 0.2, "periods": 7, "groups": 4, "signal": 1.5, "method": "egpd",
            "sqrt": False, "out": "synthetic.csv"},
    "fit-scheme": {"data": None, "method": "egpd", "sqrt": False, "q": "0.3,0.6,0.9",
                   "out": "scheme.json"},
    "train": {**TRAINING_DEFAULTS, "loss": "ce", "seed": 0, "ratio": 1.0, "out": "train"},
    "sweep": {**TRAINING_DEFAULTS, "losses": ",".join(LOSS_NAMES), "seeds": None,
              "ratios": None, "out": "sweep"},
    "gradcheck": {"losses": ",".join(LOSS_NAMES), "batches": 100, "seed": 0,
                  "inject_fault": False},
}


def _add_training_flags(p):
    p.add_argument("--data", help="dataset CSV")
    p.add_argument("--scheme", help="scheme JSON used to (re)label magnitudes")
    p.add_argument("--bundled", action="store_true", default=None,
                   help="use the bundled synthetic benchmark instead of --data")
    p.add_argument("--train-range", help="inclusive time-key range, e.g. 1-4")
    p.add_argument("--val-range")
    p.add_argument("--test-range")
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--hidden1", type=int)
    p.add_argument("--hidden2", type=int)
    p.add_argument("--embed", type=int)
    p.add_argument("--mcewk-c", type=float)
    p.add_argument("--penalty", choices=["linear", "quadratic"])
    p.add_argument("--bins", type=int, help="calibration bins")
    p.add_argument("--var-floor", type=float)
    p.add_argument("--corr-ceiling", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog=TOOL, description="Ordinal severity modelling of rare extremes.")
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_):
        p = sub.add_parser(name, help=help_, argument_default=None)
        p.add_argument("--config", help="JSON file of flag values")
        return p

    p = command("gen", "generate a synthetic dataset")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--zero-fraction", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--xi", type=float)
    p.add_argument("--periods", type=int)
    p.add_argument("--groups", type=int)
    p.add_argument("--signal", type=float)
    p.add_argument("--method", choices=["egpd", "kmeans"], help="labelling scheme")
    p.add_argument("--sqrt", action="store_true", default=None)
    p.add_argument("--out")

    p = command("fit-scheme", "fit a severity scheme")
    p.add_argument("--data")
    p.add_argument("--method", choices=["egpd", "kmeans"])
    p.add_argument("--sqrt", action="store_true", default=None)
    p.add_argument("--q", help="three ascending quantiles, e.g. 0.3,0.6,0.9")
    p.add_argument("--out")

    p = command("train", "train a single model")
    _add_training_flags(p)
    p.add_argument("--loss")
    p.add_argument("--seed", type=int)
    p.add_argument("--ratio", type=float, help="class-0 keep ratio")
    p.add_argument("--out", help="output directory")

    p = command("sweep", "run the undersampling sweep")
    _add_training_flags(p)
    p.add_argument("--losses")
    p.add_argument("--seeds")
    p.add_argument("--ratios", help="keep ratios (default: 0.15..1.0 step 0.05)")
    p.add_argument("--out", help="output directory")

    p = command("gradcheck", "finite-difference gradient verification")
    p.add_argument("--losses")
    p.add_argument("--batches", type=int)
    p.add_argument("--seed", type=int)
    # negative control for the check itself: flips the analytic gradient
    p.add_argument("--inject-fault", action="store_true", default=None, help=argparse.SUPPRESS)
    return parser


def resolve(command, args):
    """Merge defaults, the ``--config`` file and explicit flags, in that order."""
    cfg = dict(DEFAULTS[command])
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {args.config}: invalid JSON ({exc})") from None
        if not isinstance(file_cfg, dict):
            raise UsageError(f"config file {args.config}: expected a JSON object")
        for key, value in file_cfg.items():
            k = key.replace("-", "_")
            if k not in cfg:
                raise UsageError(f"config file {args.config}: unknown key {key!r}")
            cfg[k] = value
    for key, value in vars(args).items():
        if key in cfg and value is not None:
            cfg[key] = value
    return cfg


# -- output helpers ---------------------------------------------------------

def output_path(path):
    base = os.environ.get(OUTPUT_ENV)
    p = Path(path)
    return p if p.is_absolute() or not base else Path(base) / p


def config_hash(cfg):
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def provenance(command, cfg, seeds):
    # the destination is not part of what was computed
    cfg = {k: v for k, v in cfg.items() if k != "out"}
    return {"tool": TOOL, "version": __version__, "command": command,
            "config": cfg, "config_hash": config_hash(cfg), "seeds": list(seeds)}


def write_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_rows(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def write_manifest(out_dir, meta, started, files):
    """Run record kept apart from the reports so they stay byte-identical."""
    manifest = {**meta, "duration_seconds": round(time.perf_counter() - started, 3),
                "outputs": sorted(str(f.relative_to(out_dir)) for f in files)}
    write_json(out_dir / "manifest.json", manifest)


# -- commands ---------------------------------------------------------------

def cmd_gen(cfg):
    if cfg["n"] < 100:
        raise DomainError("--n must be >= 100")
    if not 0.0 <= cfg["zero_fraction"] < 1.0:
        raise DomainError("--zero-fraction must lie in [0, 1)")
    params = EgpdParams(cfg["sigma"], cfg["kappa"], cfg["xi"])
    data = generate_synthetic(
        n=cfg["n"], d=cfg["d"], params=params, zero_fraction=cfg["zero_fraction"],
        seed=cfg["seed"], n_periods=cfg["periods"], n_groups=cfg["groups"], signal=cfg["signal"],
        scheme_method="egpd_risk" if cfg["method"] == "egpd" else "kmeans",
        transform="sqrt" if cfg["sqrt"] else "identity",
    )
    out = output_path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(data, out)
    print(f"wrote {len(data)} rows to {out}")
    if data.meta.get("regenerated"):
        print(f"note: zero fraction lowered to {data.meta['effective_zero_fraction']:.4f} "
              "to keep enough positives")
    print("class histogram: " + " ".join(f"{c}:{h}" for c, h in enumerate(data.class_histogram())))
    return EXIT_OK


def cmd_fit_scheme(cfg):
    if not cfg["data"]:
        raise UsageError("--data is required")
    q = _float_list(cfg["q"]) if isinstance(cfg["q"], str) else [float(v) for v in cfg["q"]]
    if len(q) != 3 or np.any(np.diff(q) <= 0) or q[0] <= 0 or q[-1] >= 1:
        raise DomainError("--q needs three strictly ascending quantiles inside (0, 1)")
    transform = "sqrt" if cfg["sqrt"] else "identity"
    started = time.perf_counter()
    data = load_csv(cfg["data"])
    if cfg["method"] == "egpd":
        scheme = fit_egpd_scheme(data.magnitudes, q, transform=transform)
    else:
        scheme = fit_kmeans_scheme(data.magnitudes, transform)
    pos = data.magnitudes > 0
    classes = classify(scheme, data.magnitudes[pos])
    try:
        sil = silhouette_1d(apply_transform(data.magnitudes[pos], transform), classes)
    except UndefinedScoreError:
        sil = None
    meta = provenance("fit-scheme", cfg, [])
    out = output_path(cfg["out"])
    write_json(out, {**scheme.to_dict(), "silhouette": sil, "meta": meta})
    write_json(out.with_name(out.stem + ".manifest.json"),
               {**meta, "duration_seconds": round(time.perf_counter() - started, 3)})
    print(f"scheme ({scheme.method}, {scheme.transform}) written to {out}")
    bounds = scheme.thresholds if scheme.method == "egpd_risk" else scheme.centers
    print(("thresholds: " if scheme.method == "egpd_risk" else "centers: ")
          + ", ".join(f"{b:.6g}" for b in bounds))
    print("silhouette: " + ("undefined" if sil is None else f"{sil:.4f}"))
    return EXIT_OK


def _benchmark_setup(cfg, loss_names, ratios):
    """Validate everything, then load data: ``(splits, BenchmarkConfig)``."""
    bad = [l for l in loss_names if l not in LOSS_NAMES]
    if bad:
        raise UsageError(f"unknown loss {bad[0]!r}; valid names: {', '.join(LOSS_NAMES)}")
    for r in ratios:
        if not 0.0 < r <= 1.0:
            raise DomainError(f"keep ratio {r} outside (0, 1]")
    ranges = [_time_range(cfg[k]) for k in ("train_range", "val_range", "test_range")]
    optim = OptimConfig(cfg["optimizer"], cfg["lr"], batch_size=cfg["batch_size"],
                        max_epochs=cfg["epochs"], patience=cfg["patience"])
    loss_cfg = LossConfig(mcewk_c=cfg["mcewk_c"], penalty_kind=cfg["penalty"])
    bench = BenchmarkConfig(tuple(ratios), cfg["hidden1"], cfg["hidden2"], cfg["embed"],
                            optim, loss_cfg, cfg["bins"])
    if min(cfg["hidden1"], cfg["hidden2"], cfg["embed"], cfg["bins"]) < 1:
        raise DomainError("layer sizes and bin count must be >= 1")
    if cfg["bundled"]:
        if tuple(ranges) != BUNDLED_RANGES and cfg["data"]:
            raise UsageError("--bundled and --data are mutually exclusive")
        splits, _ = bundled_benchmark()
        return splits, bench
    if not cfg["data"]:
        raise UsageError("--data (or --bundled) is required")
    data = load_csv(cfg["data"])
    if cfg["scheme"]:
        scheme = SeverityScheme.from_dict(json.loads(Path(cfg["scheme"]).read_text()))
        data = data.with_scheme(scheme)
    elif data.classes is None:
        raise UsageError("dataset has no class column; pass --scheme")
    splits, _ = prepare_splits(data, *ranges, var_floor=cfg["var_floor"],
                               corr_ceiling=cfg["corr_ceiling"])
    for name in ("train", "val"):
        if len(getattr(splits, name)) == 0:
            raise InsufficientDataError(f"{name} split is empty", count=0)
    return splits, bench


def _write_reports(out_dir, stem, meta, result):
    files = []
    doc = {"meta": meta, **result.to_dict()}
    files.append(out_dir / f"{stem}.json")
    write_json(files[-1], doc)
    files.append(out_dir / f"{stem}.csv")
    write_rows(files[-1], result.csv_rows())
    for s in result.selections:
        for c, bins in enumerate(s.test_report.calibration):
            path = out_dir / "calibration" / f"{s.loss}_seed{s.seed}_class{c}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(bins.to_csv())
            files.append(path)
    return files


def _print_summary(result):
    print(f"{'loss':8s} {'seed':>4s} {'ratio':>5s} {'iou':>6s} {'iou_ext':>7s} {'ord_err':>7s} {'f1_bin':>6s}")
    for s in result.selections:
        r = s.test_report

        def fmt(v, w):
            return f"{v:{w}.3f}" if v is not None else f"{'-':>{w}s}"

        print(f"{s.loss:8s} {s.seed:4d} {s.ratio:5.2f} {fmt(r.iou_macro, 6)} "
              f"{fmt(r.iou_extreme, 7)} {fmt(r.ordinal_error, 7)} {fmt(r.f1_bin, 6)}")
    failed = [c for c in result.cells if c.status != "ok"]
    for c in failed:
        print(f"cell {c.loss}/seed {c.seed}/ratio {c.ratio}: {c.status}")


def cmd_train(cfg):
    started = time.perf_counter()
    if not 0.0 < cfg["ratio"] <= 1.0:
        raise DomainError("--ratio must lie in (0, 1]")
    splits, bench = _benchmark_setup(cfg, [cfg["loss"]], [cfg["ratio"]])
    result = run_benchmark(splits, [cfg["loss"]], [cfg["seed"]], bench, keep_states=True)
    if not result.selections:
        print(f"training failed: {result.cells[0].status}", file=sys.stderr)
        return EXIT_CHECK
    meta = provenance("train", cfg, [cfg["seed"]])
    out_dir = output_path(cfg["out"])
    files = _write_reports(out_dir, "report", meta, result)
    ckpt = {**result.selections[0].state.to_dict(), "meta": meta}
    files.append(out_dir / "model.json")
    write_json(files[-1], ckpt)
    write_manifest(out_dir, meta, started, files)
    _print_summary(result)
    print(f"checkpoint and reports written to {out_dir}")
    return EXIT_OK


def cmd_sweep(cfg):
    started = time.perf_counter()
    losses = _name_list(cfg["losses"]) if isinstance(cfg["losses"], str) else list(cfg["losses"])
    if not losses:
        raise UsageError("--losses is empty")
    seeds, ratios = cfg["seeds"], cfg["ratios"]
    if seeds is None:
        seeds = list(BUNDLED_SEEDS) if cfg["bundled"] else [0]
    elif isinstance(seeds, str):
        seeds = _int_list(seeds)
    if ratios is None:
        ratios = list(BUNDLED_RATIOS) if cfg["bundled"] else list(undersample_grid())
    elif isinstance(ratios, str):
        ratios = _float_list(ratios)
    splits, bench = _benchmark_setup(cfg, losses, ratios)
    result = run_benchmark(splits, losses, seeds, bench)
    meta = provenance("sweep", cfg, seeds)
    out_dir = output_path(cfg["out"])
    files = _write_reports(out_dir, "sweep", meta, result)
    write_manifest(out_dir, meta, started, files)
    _print_summary(result)
    print(f"{len(result.selections)} selected cells; reports written to {out_dir}")
    return EXIT_OK


def cmd_gradcheck(cfg):
    losses = _name_list(cfg["losses"]) if isinstance(cfg["losses"], str) else list(cfg["losses"])
    bad = [l for l in losses if l not in LOSS_NAMES]
    if bad or not losses:
        raise UsageError(f"unknown loss {bad[0] if bad else ''!r}; valid names: {', '.join(LOSS_NAMES)}")
    if cfg["batches"] < 1:
        raise DomainError("--batches must be >= 1")
    hook = (lambda g: -g) if cfg["inject_fault"] else None
    rows = run_gradcheck(losses, cfg["batches"], cfg["seed"], hook=hook)
    print(f"{'loss':8s} {'max_rel_err':>12s}  result")
    for r in rows:
        print(f"{r.loss:8s} {r.max_error:12.3e}  {'pass' if r.passed else 'FAIL'}")
    failed = [r for r in rows if not r.passed]
    for r in failed:
        print(f"gradient check failed for {r.loss}: max relative error {r.max_error:.3e} "
              f">= {TOLERANCE:g}", file=sys.stderr)
    return EXIT_CHECK if failed else EXIT_OK


COMMANDS = {"gen": cmd_gen, "fit-scheme": cmd_fit_scheme, "train": cmd_train,
            "sweep": cmd_sweep, "gradcheck": cmd_gradcheck}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args.command, args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"{TOOL} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EmptyFileError, MissingColumnError, ParseError, OSError) as exc:
        print(f"{TOOL} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InsufficientDataError as exc:
        extra = f" (count={exc.count})" if exc.count is not None else ""
        print(f"{TOOL} {args.command}: insufficient data: {exc}{extra}", file=sys.stderr)
        return EXIT_DATA
    except DataError as exc:
        print(f"{TOOL} {args.command}: insufficient data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DomainError, ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"{TOOL} {args.command}: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OrdinalExtremesError as exc:
        print(f"{TOOL} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
