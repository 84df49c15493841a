"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines
and timings.
"""

import json
import random
import time
from pathlib import Path

import numpy as np
import pytest

from ledsna.blackbox import builtin_quadratic_logit
from ledsna.cli import main as cli_main
from ledsna.core import Instance, all_ones_mask, image_space
from ledsna.metrics import approx_error, r_squared
from ledsna.sampling import PerturbationSet, sample_connected
from ledsna.segmentation import SegmentGraph, build_adjacency, grid_segment
from ledsna.surrogate import (
    ExplainConfig,
    KernelSpec,
    explain_set,
    kernel_matrix,
    sample_for_space,
    smo_solve,
)

from oracles import (
    active_set_connected,
    brute_force_adjacency,
    enumerate_connected_sets,
    grid_qp_oracle,
    r_squared_mse_var,
    random_connected_graph,
    svr_dual_objective,
)

DATA = Path(__file__).parent / "data"


def _report(criterion: int, ok: bool, elapsed: float, detail: str):
    status = "PASS" if ok else "FAIL"
    print(f"{status} criterion {criterion} [{elapsed:.2f}s] {detail}")


def test_criterion_1_metric_identities():
    start = time.monotonic()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 50))
        labels = rng.uniform(0, 1, n)
        preds = rng.uniform(0, 1, n)
        if np.all(labels == labels[0]):
            continue
        got = r_squared(labels, preds).r_squared
        ref = r_squared_mse_var(labels, preds)
        worst = max(worst, abs(got - ref))
    err = approx_error(0.6076, 0.8129)
    table_match = round(err, 4) == 0.2053 and abs(err - 0.2053) < 1e-12
    elapsed = time.monotonic() - start
    ok = worst <= 1e-12 and table_match and elapsed < 1.0
    _report(1, ok, elapsed, f"Eq8-vs-Eq9 worst gap {worst:.2e}, yawl Err {err:.6f}")
    assert worst <= 1e-12
    assert table_match
    assert elapsed < 1.0


def test_criterion_2_svr_oracle_equivalence():
    start = time.monotonic()
    rng = np.random.default_rng(202)
    tol = 1e-6
    worst_gap = worst_eq = worst_box = 0.0
    kkt_ok = True
    for trial in range(100):
        n = int(rng.integers(2, 9))
        d = int(rng.integers(1, 4))
        masks = rng.integers(0, 2, size=(n, d)).astype(float)
        labels = rng.uniform(0, 1, n)
        weights = rng.uniform(0.05, 1.0, n)
        c_const = float(rng.uniform(0.3, 2.0))
        eps = float(rng.choice([0.0, 0.01, 0.05]))
        spec = (
            KernelSpec("gaussian", float(rng.uniform(0.2, 2.0)))
            if trial % 2 == 0
            else KernelSpec("linear")
        )
        gram = kernel_matrix(spec, masks, masks)
        c_box = c_const * weights
        beta, bias, _ = smo_solve(gram, labels, c_box, eps, tol=tol, max_iter=500_000)

        smo_obj = svr_dual_objective(gram, labels, eps, beta)
        grid_obj, _ = grid_qp_oracle(gram, labels, c_box, eps)
        worst_gap = max(worst_gap, abs(smo_obj - grid_obj))
        worst_eq = max(worst_eq, abs(beta.sum()))
        worst_box = max(worst_box, float(np.max(np.abs(beta) - c_box)))

        residuals = np.abs(labels - (gram @ beta + bias))
        free = (np.abs(beta) > 1e-10) & (np.abs(beta) < c_box - 1e-10)
        if free.any() and np.max(np.abs(residuals[free] - eps)) > tol + 1e-8:
            kkt_ok = False
    elapsed = time.monotonic() - start
    ok = worst_gap <= 1e-4 and worst_eq <= 1e-8 and worst_box <= 1e-8 and kkt_ok and elapsed < 30
    _report(
        2, ok, elapsed,
        f"objective gap {worst_gap:.2e}, equality {worst_eq:.2e}, box excess {worst_box:.2e}",
    )
    assert worst_gap <= 1e-4
    assert worst_eq <= 1e-8
    assert worst_box <= 1e-8
    assert kkt_ok
    assert elapsed < 30


def test_criterion_3_connected_sampling():
    start = time.monotonic()
    pyr = random.Random(303)
    checked = 0
    all_connected = True
    graphs = []
    while checked < 92_000:
        n = pyr.randint(2, 12)
        edges = random_connected_graph(pyr, n, extra_edges=pyr.randint(0, n))
        graph = SegmentGraph(n_vertices=n, edges=frozenset(edges))
        masks = sample_connected(graph, 4000, seed=checked)
        for mask in masks:
            if not active_set_connected(mask, graph.edges):
                all_connected = False
        checked += len(masks)
        graphs.append(n)

    path3 = SegmentGraph(n_vertices=3, edges=frozenset({(0, 1), (1, 2)}))
    legal = enumerate_connected_sets(3, path3.edges)
    assert len(legal) == 6
    forbidden_seen = False
    path_masks = sample_connected(path3, 8000, seed=999)
    for mask in path_masks:
        active = frozenset(int(i) for i in np.nonzero(mask)[0])
        if active == frozenset({0, 2}) or active not in legal:
            forbidden_seen = True
    checked += len(path_masks)

    elapsed = time.monotonic() - start
    ok = all_connected and not forbidden_seen and checked >= 100_000 and elapsed < 10
    _report(3, ok, elapsed, f"{checked} masks over {len(graphs)} random graphs + 3-path")
    assert all_connected
    assert not forbidden_seen
    assert checked >= 100_000
    assert elapsed < 10


def test_criterion_4_adjacency_correctness():
    start = time.monotonic()
    rng = np.random.default_rng(404)
    oracle_ok = True
    for _ in range(100):
        h, w = int(rng.integers(1, 13)), int(rng.integers(1, 13))
        n = int(rng.integers(1, 8))
        labels = rng.integers(0, n, size=(h, w))
        got = set(build_adjacency(labels).edges)
        if got != brute_force_adjacency(labels):
            oracle_ok = False
    grid_ok = True
    for r, c in ((1, 1), (1, 5), (3, 4), (6, 2), (5, 5)):
        inst = Instance.from_image(np.zeros((r * 3, c * 3, 3), dtype=np.uint8))
        graph = build_adjacency(grid_segment(inst, r, c))
        if len(graph.edges) != 2 * r * c - r - c:
            grid_ok = False
    elapsed = time.monotonic() - start
    ok = oracle_ok and grid_ok and elapsed < 5
    _report(4, ok, elapsed, "100 random maps vs pixel-pair oracle, grid edge counts")
    assert oracle_ok
    assert grid_ok
    assert elapsed < 5


def test_criterion_5_directional_fidelity():
    # 50 seeded synthetic image instances, each its own seeded quadratic
    # black box (d'=16), N=1000 samples: the kernel SVR must beat the ridge
    # baseline on R^2 and Err for at least 80% of instances.
    start = time.monotonic()
    rng = np.random.default_rng(505)
    n_instances = 50
    r2_wins = err_wins = 0
    for idx in range(n_instances):
        pixels = rng.integers(0, 256, size=(32, 32, 3)).astype(np.uint8)
        inst = Instance.from_image(pixels, id=f"synth{idx:02d}")
        space = image_space(grid_segment(inst, 4, 4))
        adapter = builtin_quadratic_logit(16, seed=idx)
        config = ExplainConfig(seed=idx, n_samples=1000)
        data = sample_for_space(inst, space, adapter, config)
        svr = explain_set(data, config)
        ridge = explain_set(
            data, ExplainConfig(surrogate_kind="ridge", seed=idx, n_samples=1000)
        )
        r2_wins += svr.r_squared > ridge.r_squared
        err_wins += svr.err < ridge.err
    elapsed = time.monotonic() - start
    r2_rate = r2_wins / n_instances
    err_rate = err_wins / n_instances
    ok = r2_rate >= 0.8 and err_rate >= 0.8 and elapsed < 120
    _report(5, ok, elapsed, f"R^2 win rate {r2_rate:.0%}, Err win rate {err_rate:.0%}")
    assert r2_rate >= 0.8
    assert err_rate >= 0.8
    assert elapsed < 120


def test_criterion_6_linear_consistency():
    start = time.monotonic()
    worst = 0.0
    for trial in range(20):
        rng = np.random.default_rng(606 + trial)
        n, d = 40, int(rng.integers(3, 8))
        masks = rng.integers(0, 2, size=(n, d)).astype(np.uint8)
        theta = rng.uniform(-0.05, 0.05, d)
        labels = masks @ theta + 0.5
        data = PerturbationSet(
            masks=masks,
            labels=labels,
            weights=np.ones(n),
            instance_mask=all_ones_mask(d),
        )
        from ledsna.surrogate import attribute, fit_ridge, fit_svr

        svr = fit_svr(data, KernelSpec("linear"), C=10.0, epsilon=1e-6, tol=1e-6)
        ridge = fit_ridge(data, lam=1e-10)
        gap = float(np.max(np.abs(attribute(svr, all_ones_mask(d)) - ridge.coeffs)))
        worst = max(worst, gap)
    elapsed = time.monotonic() - start
    ok = worst <= 1e-3 and elapsed < 10
    _report(6, ok, elapsed, f"worst per-feature attribution gap {worst:.2e}")
    assert worst <= 1e-3
    assert elapsed < 10


def test_criterion_7_end_to_end_determinism(tmp_path):
    start = time.monotonic()
    image_runs = []
    text_runs = []
    for run in range(2):
        img_out = tmp_path / f"img{run}.json"
        code = cli_main([
            "explain-image", "--image", str(DATA / "fixture_8x8.ppm"),
            "--grid", "2x2", "--blackbox", "builtin:quadratic:7",
            "--n-samples", "200", "--seed", "11", "--k", "2",
            "--out", str(img_out),
        ])
        assert code == 0
        image_runs.append(img_out.read_bytes())

        txt_out = tmp_path / f"txt{run}.json"
        code = cli_main([
            "explain-text", "--text", str(DATA / "fixture_review.txt"),
            "--blackbox", "builtin:lexicon", "--n-samples", "128",
            "--seed", "5", "--k", "3", "--out", str(txt_out),
        ])
        assert code == 0
        text_runs.append(txt_out.read_bytes())

    golden_image = (DATA / "golden_explain_image.json").read_bytes()
    golden_text = (DATA / "golden_explain_text.json").read_bytes()
    elapsed = time.monotonic() - start
    ok = (
        image_runs[0] == image_runs[1] == golden_image
        and text_runs[0] == text_runs[1] == golden_text
        and elapsed < 30
    )
    _report(7, ok, elapsed, "image+text JSON byte-identical across runs and vs goldens")
    assert image_runs[0] == image_runs[1]
    assert text_runs[0] == text_runs[1]
    assert image_runs[0] == golden_image
    assert text_runs[0] == golden_text
    assert elapsed < 30
