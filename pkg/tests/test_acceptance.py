"""Acceptance suite: one test per release criterion, one printed line each.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion
PASS/FAIL lines as they complete.
"""

import json
import os
import resource
import time
from pathlib import Path

import numpy as np
from click.testing import CliRunner

from dshelpers import block_panoptic
from objsal import (
    BinaryFixationMap,
    EvalFrame,
    FixationSet,
    GtGenConfig,
    ObjectGraph,
    PanopticMap,
    SaliencyMap,
    SegmentInfo,
    aggregate_scene,
    combined_loss,
    embed_object,
    encode_scene,
    encoder_grad_check,
    evaluate_frame,
    fd_gradient,
    fuse_with_features,
    grad_combined_loss,
    init_encoder_params,
    normalize_unit_sum,
    osim,
    render_ground_truth,
    sim,
)
from objsal import metrics
from objsal.cli import main
from objsal.graphcontext import relu_kink_margin
from objsal.ingest import save_panoptic
from objsal.loss import LossWeights
from objsal.pfm import read_pfm, write_pfm
from objsal.selfcheck import (
    gradient_max_error,
    oracle_auc,
    oracle_cc,
    oracle_kld,
    oracle_nss,
    oracle_osim,
    oracle_sim,
    random_frame,
    random_graph,
    random_panoptic,
    random_saliency,
)

runner = CliRunner()


def report_line(number: int, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    print(f"[criterion {number:02d}] {status} {detail}")
    assert passed, f"criterion {number}: {detail}"


def test_criterion_01_perfect_alignment_anchor():
    rng = np.random.default_rng(101)
    started = time.perf_counter()
    worst_one = 0.0
    worst_kld = -np.inf
    for _ in range(100):
        side = int(rng.integers(8, 33))
        segments = int(rng.integers(1, 9))
        m = normalize_unit_sum(random_saliency(rng, side, side))
        pan = random_panoptic(rng, side, side, segments)
        frame = EvalFrame(
            predicted=m,
            ground_truth=m,
            fixations=BinaryFixationMap(m.values == m.values.max()),
            panoptic=pan,
        )
        report = evaluate_frame(frame)
        for name in ("sim", "osim", "cc"):
            worst_one = max(worst_one, abs(report.value(name) - 1.0))
        worst_kld = max(worst_kld, report.kld)
    elapsed = time.perf_counter() - started
    passed = worst_one <= 1e-9 and worst_kld <= 1e-6 and elapsed < 1.0
    report_line(
        1,
        passed,
        f"self-evaluation: max |metric-1| {worst_one:.2e}, max kld {worst_kld:.2e}, "
        f"{elapsed:.2f} s for 100 maps",
    )


def test_criterion_02_within_object_shift():
    config = GtGenConfig(pixels_per_degree=1.0)  # sigma 3 px, cutoff 12 px
    ground_truth = render_ground_truth(FixationSet(((10, 16),)), config, 64, 64)
    predicted = render_ground_truth(FixationSet(((10, 48),)), config, 64, 64)
    halves = PanopticMap(
        np.where(np.arange(64)[None, :] < 32, 0, 1) * np.ones((64, 1), dtype=int),
        {0: SegmentInfo("object", True), 1: SegmentInfo("rest", False)},
    )
    sim_value = sim(predicted, ground_truth)
    osim_value = osim(predicted, ground_truth, halves).value
    passed = sim_value < 0.05 and osim_value > 0.95
    report_line(
        2,
        passed,
        f"disjoint in-object shift: sim {sim_value:.4f} < 0.05, osim {osim_value:.4f} > 0.95",
    )


def test_criterion_03_dominance_refinement_coarsening():
    rng = np.random.default_rng(103)
    per_pixel_tables: dict[int, dict] = {}
    worst_dominance = -np.inf
    worst_refinement = 0.0
    for _ in range(1000):
        side = int(rng.integers(8, 65))
        segments = int(rng.integers(1, 17))
        frame = random_frame(rng, side, side, segments)
        sim_value = sim(frame.predicted, frame.ground_truth)
        osim_value = osim(frame.predicted, frame.ground_truth, frame.panoptic).value
        worst_dominance = max(worst_dominance, sim_value - osim_value)

        n = side * side
        if n not in per_pixel_tables:
            per_pixel_tables[n] = {i: SegmentInfo(f"px{i}", True) for i in range(n)}
        per_pixel = PanopticMap(np.arange(n).reshape(side, side), per_pixel_tables[n])
        refined = osim(frame.predicted, frame.ground_truth, per_pixel).value
        worst_refinement = max(worst_refinement, abs(refined - sim_value))

    worst_merge = -np.inf
    for _ in range(100):
        frame = random_frame(rng, 16, 16, 8)
        base = osim(frame.predicted, frame.ground_truth, frame.panoptic).value
        ids = frame.panoptic.segment_ids
        present = sorted(int(v) for v in np.unique(ids))
        if len(present) < 2:
            continue
        keep, drop = rng.choice(present, size=2, replace=False)
        merged = PanopticMap(
            np.where(ids == drop, keep, ids),
            {sid: info for sid, info in frame.panoptic.segments.items() if sid != drop},
        )
        after = osim(frame.predicted, frame.ground_truth, merged).value
        worst_merge = max(worst_merge, base - after)

    passed = (
        worst_dominance <= 1e-12 and worst_refinement <= 1e-12 and worst_merge <= 1e-12
    )
    report_line(
        3,
        passed,
        f"dominance gap {worst_dominance:.2e}, refinement gap {worst_refinement:.2e}, "
        f"coarsening drop {worst_merge:.2e} (1000 frames, 100 merges)",
    )


def test_criterion_04_oracle_equivalence():
    rng = np.random.default_rng(104)
    worst = 0.0
    for _ in range(200):
        frame = random_frame(rng)
        pred = frame.predicted.values.tolist()
        gt = frame.ground_truth.values.tolist()
        bits = frame.fixations.bits.astype(int).tolist()
        ids = frame.panoptic.segment_ids.tolist()
        report = evaluate_frame(frame)
        oracle = {
            "sim": oracle_sim(pred, gt),
            "cc": oracle_cc(pred, gt),
            "kld": oracle_kld(pred, gt, metrics.DEFAULT_KLD_EPSILON),
            "nss": oracle_nss(pred, bits),
            "auc": oracle_auc(pred, bits),  # exhaustive threshold enumeration
            "osim": oracle_osim(pred, gt, ids),
        }
        for name, want in oracle.items():
            worst = max(worst, abs(report.value(name) - want))
    passed = worst <= 1e-9
    report_line(4, passed, f"six kernels vs naive-loop oracles: max |diff| {worst:.2e} over 200 frames")


def test_criterion_05_loss_composition():
    rng = np.random.default_rng(105)
    weights = LossWeights()  # (10, -2, -1, -1, 1, -1)
    worst = 0.0
    for _ in range(100):
        frame = random_frame(rng)
        breakdown = combined_loss(
            frame.predicted, frame.ground_truth, frame.fixations, frame.panoptic, weights
        )
        phat = frame.predicted.values / frame.predicted.total
        ghat = frame.ground_truth.values / frame.ground_truth.total
        by_hand = (
            weights.lambda_kld * metrics.kld(frame.predicted, frame.ground_truth)
            + weights.lambda_cc * metrics.cc(frame.predicted, frame.ground_truth)
            + weights.lambda_sim * metrics.sim(frame.predicted, frame.ground_truth)
            + weights.lambda_nss * metrics.nss(frame.predicted, frame.fixations)
            + weights.lambda_mse * float(((phat - ghat) ** 2).mean())
            + weights.lambda_osim
            * metrics.osim(frame.predicted, frame.ground_truth, frame.panoptic).value
        )
        worst = max(worst, abs(breakdown.total - by_hand))
    passed = worst <= 1e-12
    report_line(5, passed, f"combined vs hand-composed weighted sum: max |diff| {worst:.2e} over 100 frames")


def test_criterion_06_gradient_correctness():
    rng = np.random.default_rng(0)
    weights = LossWeights()
    worst_loss = 0.0
    for _ in range(20):
        frame = random_frame(rng)
        analytic = grad_combined_loss(
            frame.predicted, frame.ground_truth, frame.fixations, frame.panoptic, weights
        )
        fd = fd_gradient(
            lambda arr: combined_loss(
                SaliencyMap(arr), frame.ground_truth, frame.fixations, frame.panoptic, weights
            ).total,
            frame.predicted.values,
            step=1e-6,
        )
        worst_loss = max(worst_loss, gradient_max_error(analytic, fd))

    enc_rng = np.random.default_rng(106)
    worst_encoder = 0.0
    for _ in range(5):
        while True:  # resample away from relu kinks
            params = init_encoder_params(enc_rng, feature_dim=5, hidden_dim=6)
            graphs = [random_graph(enc_rng, feature_dim=5, max_nodes=6) for _ in range(2)]
            if relu_kink_margin(params, graphs) > 1e-4:
                break
        image = enc_rng.normal(size=(3, 4, 6))
        worst_encoder = max(worst_encoder, encoder_grad_check(params, graphs, image, step=1e-6))

    passed = worst_loss <= 1e-5 and worst_encoder <= 1e-5
    report_line(
        6,
        passed,
        f"loss grad vs FD max rel err {worst_loss:.2e} (20 frames); "
        f"encoder grad max rel err {worst_encoder:.2e} (5 instances)",
    )


def test_criterion_07_graph_encoder_invariants():
    rng = np.random.default_rng(107)
    worst_node = 0.0
    worst_object = 0.0
    for _ in range(100):
        graph = random_graph(rng, feature_dim=5, max_nodes=24)
        params = init_encoder_params(rng, feature_dim=5, hidden_dim=8)
        base = embed_object(graph, params)
        perm = rng.permutation(graph.num_nodes)
        inverse = np.argsort(perm)
        permuted = ObjectGraph(
            graph.node_features[perm],
            tuple((int(inverse[i]), int(inverse[j])) for i, j in graph.edges),
            graph.global_attributes,
        )
        worst_node = max(worst_node, float(np.abs(embed_object(permuted, params) - base).max()))

        objects = [rng.normal(size=8) for _ in range(int(rng.integers(1, 6)))]
        shuffled = [objects[k] for k in rng.permutation(len(objects))]
        delta = aggregate_scene(objects, params).vector - aggregate_scene(shuffled, params).vector
        worst_object = max(worst_object, float(np.abs(delta).max()))

    params = init_encoder_params(rng, feature_dim=5, hidden_dim=8)
    features = rng.normal(size=(4, 5, 8))
    fused = fuse_with_features(features, encode_scene([], params))
    passthrough_exact = fused is features and np.array_equal(fused, features)

    passed = worst_node <= 1e-12 and worst_object <= 1e-12 and passthrough_exact
    report_line(
        7,
        passed,
        f"node-permutation drift {worst_node:.2e}, object-permutation drift {worst_object:.2e} "
        f"(100 graphs); empty-scene passthrough bit-exact: {passthrough_exact}",
    )


def test_criterion_08_ground_truth_synthesis(tmp_path):
    rng = np.random.default_rng(108)
    points = [(float(rng.uniform(10, 54)), float(rng.uniform(10, 54))) for _ in range(5)]
    five = tmp_path / "five.csv"
    five.write_text("frame_id,x,y\n" + "".join(f"t,{x},{y}\n" for x, y in points))
    last3 = tmp_path / "last3.csv"
    last3.write_text("frame_id,x,y\n" + "".join(f"t,{x},{y}\n" for x, y in points[-3:]))

    args = ["--width", "64", "--height", "64", "--pixels-per-degree", "2.0", "--fixation-window", "3"]
    for csv, out in ((five, tmp_path / "five_out"), (last3, tmp_path / "last3_out")):
        result = runner.invoke(main, ["gt-gen", str(csv), "--out-dir", str(out), *args])
        assert result.exit_code == 0, result.output
    map_five = read_pfm(tmp_path / "five_out" / "t.pfm")
    map_last3 = read_pfm(tmp_path / "last3_out" / "t.pfm")
    pixel_gap = float(np.abs(map_five - map_last3).max())
    sum_gap = max(abs(map_five.sum() - 1.0), abs(map_last3.sum() - 1.0))
    passed = pixel_gap <= 1e-12 and sum_gap <= 1e-9
    report_line(
        8,
        passed,
        f"window-3 five-fixation render vs last-3 render: pixel gap {pixel_gap:.2e}, "
        f"|sum-1| {sum_gap:.2e}",
    )


def test_criterion_09_cli_round_trip(tmp_path):
    rng = np.random.default_rng(109)
    lines = ["frame_id,x,y"]
    for i in range(6):
        fid = f"frame{i:02d}"
        for _ in range(4):
            lines.append(f"{fid},{rng.uniform(6, 26):.2f},{rng.uniform(6, 26):.2f}")
    csv = tmp_path / "fixations.csv"
    csv.write_text("\n".join(lines) + "\n")
    maps_dir = tmp_path / "maps"
    result = runner.invoke(
        main,
        ["gt-gen", str(csv), "--out-dir", str(maps_dir), "--width", "32", "--height", "32",
         "--pixels-per-degree", "1.5"],
    )
    assert result.exit_code == 0, result.output

    root = tmp_path / "ds"
    pan = block_panoptic(32, 32, 2, 2)
    for sub in ("predicted", "gt", "panoptic"):
        (root / sub).mkdir(parents=True)
    for pfm in sorted(maps_dir.glob("*.pfm")):
        (root / "predicted" / pfm.name).write_bytes(pfm.read_bytes())
        (root / "gt" / pfm.name).write_bytes(pfm.read_bytes())
        save_panoptic(pan, root / "panoptic" / f"{pfm.stem}.png", root / "panoptic" / f"{pfm.stem}.json")
    (root / "fixations.csv").write_text(csv.read_text())

    payloads = []
    for name, jobs in (("a", 1), ("b", 1), ("c", 8)):
        out = tmp_path / f"{name}.json"
        result = runner.invoke(
            main, ["eval", str(root), "-o", str(out), "--jobs", str(jobs), "--format", "json"]
        )
        assert result.exit_code == 0, result.output
        payloads.append(out.read_bytes())
    byte_identical = payloads[0] == payloads[1] == payloads[2]

    doc = json.loads(payloads[0])
    aggregates = doc["aggregates"]
    worst_one = max(abs(aggregates[m]["mean"] - 1.0) for m in ("sim", "cc", "osim"))
    kld_mean = aggregates["kld"]["mean"]
    passed = byte_identical and worst_one <= 1e-9 and kld_mean <= 1e-6
    report_line(
        9,
        passed,
        f"gt-gen -> eval self-consistency: max |mean-1| {worst_one:.2e}, mean kld {kld_mean:.2e}, "
        f"byte-identical across runs and jobs 1 vs 8: {byte_identical}",
    )


def test_criterion_10_performance_budget(tmp_path):
    shm = Path("/dev/shm")
    base = shm / f"objsal_perf_{os.getpid()}" if os.access(shm, os.W_OK) else tmp_path
    root = base / "ds"
    try:
        rng = np.random.default_rng(110)
        for sub in ("predicted", "gt", "panoptic"):
            (root / sub).mkdir(parents=True)
        pan = block_panoptic(256, 256, 4, 4)  # 16 segments
        save_panoptic(pan, root / "panoptic" / "_ref.png", root / "panoptic" / "_ref.json")
        png_bytes = (root / "panoptic" / "_ref.png").read_bytes()
        json_bytes = (root / "panoptic" / "_ref.json").read_bytes()
        (root / "panoptic" / "_ref.png").unlink()
        (root / "panoptic" / "_ref.json").unlink()
        lines = ["frame_id,x,y"]
        for i in range(1000):
            fid = f"frame{i:05d}"
            write_pfm(root / "predicted" / f"{fid}.pfm", rng.random((256, 256)))
            write_pfm(root / "gt" / f"{fid}.pfm", rng.random((256, 256)))
            (root / "panoptic" / f"{fid}.png").write_bytes(png_bytes)
            (root / "panoptic" / f"{fid}.json").write_bytes(json_bytes)
            for _ in range(3):
                lines.append(f"{fid},{rng.integers(0, 256)},{rng.integers(0, 256)}")
        (root / "fixations.csv").write_text("\n".join(lines) + "\n")

        jobs = min(4, os.cpu_count() or 1)
        out = base / "report.json"
        started = time.perf_counter()
        result = runner.invoke(
            main, ["eval", str(root), "-o", str(out), "--jobs", str(jobs), "--format", "json"]
        )
        wall = time.perf_counter() - started
        assert result.exit_code == 0, result.output

        doc = json.loads(out.read_text())
        assert doc["frame_count"] == 1000
        peak_self = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024
        peak_children = resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss / 1024
        peak_mb = max(peak_self, peak_children)
        passed = wall <= 10.0 and peak_mb <= 1024.0
        report_line(
            10,
            passed,
            f"1000 frames 256x256, 16 segments: {wall:.2f} s (budget 10 s, jobs={jobs}), "
            f"peak rss {peak_mb:.0f} MB (budget 1024 MB)",
        )
    finally:
        if base != tmp_path:
            import shutil

            shutil.rmtree(base, ignore_errors=True)
