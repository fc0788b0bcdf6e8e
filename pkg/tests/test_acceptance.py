"""Acceptance suite: one test, and one PASS/FAIL line, per criterion.

The lines are repeated in the pytest terminal summary.  The bundled
benchmark sweep (criteria 8-10) runs twice through the CLI and takes several
minutes.
"""

import json
import time

import numpy as np
import pytest

from ordinal_extremes.cli import main
from ordinal_extremes.experiment import (
    BUNDLED_SEEDS, BenchmarkConfig, generate_synthetic, prepare_splits, run_benchmark, undersample_grid,
)
from ordinal_extremes.extreme_dist import (
    EgpdParams, egpd_cdf, egpd_sample, fit_egpd, tdegpd_pmf, tdegpd_pmf_batch,
)
from ordinal_extremes.gradcheck import run_gradcheck
from ordinal_extremes.losses import (
    LossConfig, PenaltyMatrix, mce_loss, mcewk_loss, softmax, wk_loss,
)
from ordinal_extremes.metrics import ece, iou, ordinal_error
from ordinal_extremes.mlp import OptimConfig
from ordinal_extremes.severity import SeverityScheme, classify, fit_egpd_scheme

ORDINAL_LOSSES = ("wkloss", "mcewk", "gwdl", "atbce")


def test_1_gradient_fidelity(record):
    start = time.perf_counter()
    rows = run_gradcheck(n_batches=100, seed=0)
    elapsed = time.perf_counter() - start
    worst = max(r.max_error for r in rows)
    ok = all(r.max_error < 1e-4 for r in rows) and len(rows) == 6 and elapsed < 60
    record(1, ok, f"max rel err {worst:.2e} (< 1e-4) over 6 losses x 100 batches, {elapsed:.1f}s (< 60s)")


def test_2_tdegpd_pmf(record):
    rng = np.random.default_rng(2)
    sigma = np.exp(rng.uniform(np.log(1e-2), np.log(1e3), 10_000))
    kappa = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), 10_000))
    xi = np.exp(rng.uniform(np.log(1e-3), np.log(10.0), 10_000))
    drift = np.max(np.abs(tdegpd_pmf_batch(sigma, kappa, xi).sum(axis=1) - 1.0))
    hand = np.max(np.abs(tdegpd_pmf(EgpdParams(1.0, 1.0, 1.0)).probs - [0.6, 0.2, 0.1, 0.06, 0.04]))
    record(2, drift < 1e-12 and hand < 1e-12,
           f"sum drift {drift:.1e} over 1e4 draws, hand example err {hand:.1e} (both < 1e-12)")


def test_3_wk_endpoints(record):
    rng = np.random.default_rng(3)
    perfect = 0.0
    for labels in ([0, 1, 2, 3, 4], [0, 0, 4], [1, 3, 3, 2]):
        perfect = max(perfect, wk_loss(np.eye(5)[labels], labels).value)
    labels = np.repeat(np.arange(5), 2000)
    probs = rng.dirichlet(np.ones(5), size=labels.size)
    random_value = wk_loss(probs, labels, PenaltyMatrix.quadratic(5)).value
    record(3, perfect < 1e-6 and abs(random_value - 1.0) <= 0.05,
           f"perfect {perfect:.1e} (< 1e-6), random {random_value:.4f} (1 +- 0.05)")


def test_4_mcewk_endpoints(record):
    rng = np.random.default_rng(4)
    ok = True
    for _ in range(50):
        n = int(rng.integers(2, 40))
        labels = rng.integers(0, 5, n)
        p = softmax(rng.normal(0, 1.5, (n, 5)))
        one, wk = mcewk_loss(p, labels, LossConfig(mcewk_c=1.0)), wk_loss(p, labels)
        zero, mce = mcewk_loss(p, labels, LossConfig(mcewk_c=0.0)), mce_loss(p, labels)
        ok &= one.value == wk.value and np.array_equal(one.grad, wk.grad)
        ok &= zero.value == mce.value and np.array_equal(zero.grad, mce.grad)
    record(4, ok, "C=1 == WKLoss and C=0 == MCE bitwise (value and gradient) on 50 batches")


def test_5_mle_recovery(record):
    true = EgpdParams(2.0, 1.5, 0.3)
    start = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        fit = fit_egpd(egpd_sample(50_000, true, np.random.default_rng(seed)))
        rel = np.abs(fit.params.as_array() / true.as_array() - 1.0)
        worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - start
    record(5, worst < 0.10 and elapsed < 120,
           f"worst relative parameter error {worst:.3f} (< 0.10) over 5 seeds, {elapsed:.1f}s (< 120s)")


def test_6_scheme_consistency(record):
    rng = np.random.default_rng(6)
    x = np.concatenate([np.zeros(3000), egpd_sample(20_000, EgpdParams(2.0, 1.5, 0.3), rng)])
    scheme = fit_egpd_scheme(x, (0.30, 0.60, 0.90))
    gap = np.max(np.abs(egpd_cdf(np.array(scheme.thresholds), scheme.egpd_params) - [0.3, 0.6, 0.9]))
    monotone = True
    m = np.sort(rng.exponential(10.0, 100_000) * (rng.random(100_000) < 0.7))
    for s in (scheme, SeverityScheme("kmeans", "sqrt", centers=(1.0, 2.0, 4.0, 8.0))):
        c = classify(s, m)
        monotone &= bool(np.all(np.diff(c) >= 0))
    record(6, gap < 1e-9 and monotone, f"|F(t)-q| {gap:.1e} (< 1e-9), classify monotone on 1e5 magnitudes")


def test_7_metric_golden_values(record):
    e = ece([0.8, 0.8, 0.6, 0.6], [1, 0, 1, 0], n_bins=2)[0]
    oe = float(ordinal_error(np.array([[0, 5], [5, 0]]), PenaltyMatrix.linear(2)))
    per = [float(v) for v in iou([0, 0, 1, 1], [0, 1, 1, 1], 2)[0]]
    ok = abs(e - 0.2) < 1e-12 and oe == 2.0 and per[0] == 0.5 and per[1] == 2 / 3
    record(7, ok, f"ECE {e!r} (0.2 within 1e-12), ordinal error {oe!r}, IoU ({per[0]!r}, {per[1]!r})")


@pytest.fixture(scope="module")
def bundled_sweeps(tmp_path_factory):
    root = tmp_path_factory.mktemp("bundled")
    start = time.perf_counter()
    assert main(["sweep", "--bundled", "--out", str(root / "a")]) == 0
    elapsed = time.perf_counter() - start
    assert main(["sweep", "--bundled", "--out", str(root / "b")]) == 0
    return root, elapsed


def test_8_directional_reproduction(record, bundled_sweeps):
    root, elapsed = bundled_sweeps
    doc = json.loads((root / "a" / "sweep.json").read_text())

    def collect(loss, key):
        vals = [s["test_global"][key] for s in doc["selected"] if s["loss"] == loss]
        assert len(vals) == len(BUNDLED_SEEDS)
        return vals

    med = {l: float(np.median(collect(l, "iou_extreme"))) for l in ("ce", "wkloss")}
    dist = {l: float(np.mean(collect(l, "extreme_distance"))) for l in ("ce",) + ORDINAL_LOSSES}
    worse = [l for l in ORDINAL_LOSSES if dist[l] > dist["ce"]]
    ok = med["wkloss"] >= med["ce"] and not worse and elapsed < 600
    detail = (f"median extreme IoU wkloss {med['wkloss']:.3f} vs ce {med['ce']:.3f}; "
              f"extreme distance ce {dist['ce']:.3f}, "
              + ", ".join(f"{l} {dist[l]:.3f}" for l in ORDINAL_LOSSES)
              + (f"; above ce: {', '.join(worse)}" if worse else "")
              + f"; {elapsed:.0f}s (< 600s)")
    record(8, ok, detail)


def test_9_determinism(record, bundled_sweeps):
    root, _ = bundled_sweeps
    files = sorted(p.relative_to(root / "a") for p in (root / "a").rglob("*")
                   if p.is_file() and p.name != "manifest.json")
    differ = [str(f) for f in files if (root / "a" / f).read_bytes() != (root / "b" / f).read_bytes()]
    ok = not differ and len(files) > 2
    record(9, ok, f"{len(files)} JSON/CSV reports byte-identical across reruns"
           + (f"; differing: {differ}" if differ else ""))


def _argmax_ok(cells, selections):
    for s in selections:
        group = [c for c in cells if c["loss"] == s["loss"] and c["seed"] == s["seed"] and c["val_iou"] is not None]
        best = max(group, key=lambda c: (c["val_iou"], c["ratio"]))
        if best["ratio"] != s["ratio"]:
            return False
    return True


def test_10_grid_and_selection(record, bundled_sweeps):
    grid = undersample_grid()
    expected = [round(0.15 + 0.05 * i, 2) for i in range(18)]
    grid_ok = len(grid) == 18 and np.allclose(grid, expected, rtol=0, atol=1e-12)
    # a full-grid sweep on a small generated dataset
    data = generate_synthetic(n=1500, seed=10)
    splits, _ = prepare_splits(data, (1, 4), (5, 5), (6, 7))
    cfg = BenchmarkConfig(ratios=tuple(grid), hidden1=8, hidden2=8, embed=4,
                          optim=OptimConfig(max_epochs=5, patience=3))
    full = run_benchmark(splits, ["ce"], [0], cfg).to_dict()
    full_ok = len(full["cells"]) == 18 and _argmax_ok(full["cells"], full["selected"])
    root, _ = bundled_sweeps
    doc = json.loads((root / "a" / "sweep.json").read_text())
    bundled_ok = _argmax_ok(doc["cells"], doc["selected"])
    record(10, grid_ok and full_ok and bundled_ok,
           f"grid {len(grid)} ratios 0.15..1.0; argmax selection holds on the 18-ratio sweep "
           f"and on all {len(doc['selected'])} bundled selections")
