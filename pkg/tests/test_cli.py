import json
import shutil

import numpy as np
import pytest
from click.testing import CliRunner

from dshelpers import block_panoptic, write_dataset
from objsal.cli import main
from objsal.pfm import read_pfm

runner = CliRunner()


def make_dataset(root, count=4, height=16, width=16, predicted_equals_gt=True, seed=0):
    rng = np.random.default_rng(seed)
    frames = {}
    fixations = {}
    for i in range(count):
        fid = f"frame{i:03d}"
        gt = rng.uniform(0.1, 1.0, (height, width))
        pred = gt if predicted_equals_gt else rng.uniform(0.1, 1.0, (height, width))
        frames[fid] = (pred, gt)
        fixations[fid] = [(int(c), int(r)) for r, c in
                          zip(rng.integers(0, height, 3), rng.integers(0, width, 3))]
    return write_dataset(root, frames, block_panoptic(height, width, 2, 2), fixations)


class TestEval:
    def test_self_evaluation_aggregates(self, tmp_path):
        root = make_dataset(tmp_path / "ds")
        out = tmp_path / "report.json"
        result = runner.invoke(main, ["eval", str(root), "-o", str(out)])
        assert result.exit_code == 0, result.output
        doc = json.loads(out.read_text())
        assert doc["schema_version"] == 1
        assert doc["frame_count"] == 4
        for name in ("sim", "cc", "osim"):
            assert doc["aggregates"][name]["mean"] == pytest.approx(1.0, abs=1e-9)
        assert doc["aggregates"]["kld"]["mean"] <= 1e-6
        assert (tmp_path / "report.md").exists()

    def test_empty_root_exit_2(self, tmp_path):
        (tmp_path / "empty").mkdir()
        result = runner.invoke(main, ["eval", str(tmp_path / "empty"), "-o", str(tmp_path / "r.json")])
        assert result.exit_code == 2

    def test_corrupt_file_exit_1(self, tmp_path):
        root = make_dataset(tmp_path / "ds", count=2)
        (root / "predicted" / "frame000.pfm").write_bytes(b"Pf\n4 4")
        result = runner.invoke(main, ["eval", str(root), "-o", str(tmp_path / "r.json")])
        assert result.exit_code == 1
        assert not (tmp_path / "r.json").exists()

    def test_byte_identical_across_runs_and_jobs(self, tmp_path):
        root = make_dataset(tmp_path / "ds")
        outs = []
        for name, jobs in (("a", 1), ("b", 1), ("c", 8)):
            out = tmp_path / f"{name}.json"
            result = runner.invoke(
                main, ["eval", str(root), "-o", str(out), "--jobs", str(jobs), "--format", "json"]
            )
            assert result.exit_code == 0, result.output
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_aggregates_recomputable_from_frames(self, tmp_path):
        root = make_dataset(tmp_path / "ds", predicted_equals_gt=False)
        out = tmp_path / "report.json"
        result = runner.invoke(main, ["eval", str(root), "-o", str(out), "--format", "json"])
        assert result.exit_code == 0
        doc = json.loads(out.read_text())
        for name, agg in doc["aggregates"].items():
            values = [f[name] for f in doc["frames"] if f[name] is not None]
            assert len(values) == agg["count"]
            if values:
                assert agg["mean"] == pytest.approx(sum(values) / len(values), abs=1e-9)

    def test_figures_flag_writes_pngs(self, tmp_path):
        root = make_dataset(tmp_path / "ds")
        out = tmp_path / "report.json"
        result = runner.invoke(main, ["eval", str(root), "-o", str(out), "--figures"])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "report_metric_histograms.png").exists()
        assert (tmp_path / "report_metric_means.png").exists()

    def test_format_json_only(self, tmp_path):
        root = make_dataset(tmp_path / "ds")
        result = runner.invoke(
            main, ["eval", str(root), "-o", str(tmp_path / "r.json"), "--format", "json"]
        )
        assert result.exit_code == 0
        assert (tmp_path / "r.json").exists()
        assert not (tmp_path / "r.md").exists()

    def test_config_file_applied(self, tmp_path):
        root = make_dataset(tmp_path / "ds")
        config = tmp_path / "run.toml"
        config.write_text("things_only = true\nkld_epsilon = 1e-6\n")
        out = tmp_path / "r.json"
        result = runner.invoke(
            main, ["eval", str(root), "-o", str(out), "--config", str(config), "--format", "json"]
        )
        assert result.exit_code == 0, result.output
        doc = json.loads(out.read_text())
        assert doc["config"]["things_only"] is True
        assert doc["config"]["kld_epsilon"] == pytest.approx(1e-6)


class TestGtGen:
    def test_renders_one_pfm_per_frame(self, tmp_path):
        csv = tmp_path / "fix.csv"
        csv.write_text("frame_id,x,y\nf1,8,8\nf2,4,4\nf2,10,10\n")
        out = tmp_path / "maps"
        result = runner.invoke(
            main,
            ["gt-gen", str(csv), "--out-dir", str(out), "--width", "32", "--height", "32",
             "--pixels-per-degree", "2.0"],
        )
        assert result.exit_code == 0, result.output
        f1 = read_pfm(out / "f1.pfm")
        assert abs(f1.sum() - 1.0) <= 1e-9
        assert np.unravel_index(np.argmax(f1), f1.shape) == (8, 8)
        assert (out / "f2.pfm").exists()

    def test_missing_pixels_per_degree_exit_1(self, tmp_path):
        csv = tmp_path / "fix.csv"
        csv.write_text("frame_id,x,y\nf1,1,1\n")
        result = runner.invoke(
            main, ["gt-gen", str(csv), "--out-dir", str(tmp_path / "o"), "--width", "8", "--height", "8"]
        )
        assert result.exit_code == 1
        assert "pixels_per_degree" in result.output

    def test_window_override_changes_output(self, tmp_path):
        csv = tmp_path / "fix.csv"
        csv.write_text("frame_id,x,y\nf1,4,4\nf1,20,20\n")
        base_args = [str(csv), "--width", "32", "--height", "32", "--pixels-per-degree", "1.0"]
        runner.invoke(main, ["gt-gen", *base_args, "--out-dir", str(tmp_path / "w2")])
        runner.invoke(
            main, ["gt-gen", *base_args, "--out-dir", str(tmp_path / "w1"), "--fixation-window", "1"]
        )
        two = read_pfm(tmp_path / "w2" / "f1.pfm")
        one = read_pfm(tmp_path / "w1" / "f1.pfm")
        assert np.unravel_index(np.argmax(one), one.shape) == (20, 20)
        assert one[4, 4] == 0.0
        assert two[4, 4] > 0.0

    def test_frames_without_fixations_skipped(self, tmp_path):
        csv = tmp_path / "fix.csv"
        csv.write_text("frame_id,x,y\nf1,8,8\n")
        result = runner.invoke(
            main,
            ["gt-gen", str(csv), "--out-dir", str(tmp_path / "o"), "--width", "16", "--height", "16",
             "--pixels-per-degree", "1.0"],
        )
        assert result.exit_code == 0
        assert "skipped 0" in result.output


class TestCompare:
    def test_identical_roots_zero_deltas(self, tmp_path):
        root = make_dataset(tmp_path / "ds")
        out = tmp_path / "cmp.json"
        result = runner.invoke(main, ["compare", str(root), str(root), "-o", str(out)])
        assert result.exit_code == 0, result.output
        doc = json.loads(out.read_text())
        for agg in doc["aggregates"].values():
            assert agg["mean_delta"] == 0.0

    def test_direction_of_improvement(self, tmp_path):
        good = make_dataset(tmp_path / "good", predicted_equals_gt=True, seed=1)
        bad = make_dataset(tmp_path / "bad", predicted_equals_gt=False, seed=1)
        out = tmp_path / "cmp.json"
        result = runner.invoke(main, ["compare", str(bad), str(good), "-o", str(out)])
        assert result.exit_code == 0, result.output
        doc = json.loads(out.read_text())
        aggregates = doc["aggregates"]
        for name in ("sim", "cc", "osim"):
            assert aggregates[name]["mean_delta"] > 0.0
        assert aggregates["kld"]["mean_delta"] < 0.0

    def test_partial_overlap_counts_unmatched(self, tmp_path):
        root_a = make_dataset(tmp_path / "a", count=3, seed=2)
        root_b = make_dataset(tmp_path / "b", count=3, seed=2)
        (root_b / "predicted" / "frame002.pfm").unlink()
        out = tmp_path / "cmp.json"
        result = runner.invoke(main, ["compare", str(root_a), str(root_b), "-o", str(out)])
        assert result.exit_code == 0
        doc = json.loads(out.read_text())
        assert doc["frame_count"] == 2
        assert doc["unmatched"]["only_in_a"] == ["frame002"]

    def test_disjoint_roots_exit_2(self, tmp_path):
        root_a = make_dataset(tmp_path / "a", count=1, seed=3)
        root_b = make_dataset(tmp_path / "b", count=1, seed=3)
        (root_b / "predicted" / "frame000.pfm").rename(root_b / "predicted" / "other.pfm")
        shutil.copy(root_b / "gt" / "frame000.pfm", root_b / "gt" / "other.pfm")
        shutil.copy(root_b / "panoptic" / "frame000.png", root_b / "panoptic" / "other.png")
        shutil.copy(root_b / "panoptic" / "frame000.json", root_b / "panoptic" / "other.json")
        result = runner.invoke(
            main, ["compare", str(root_a), str(root_b), "-o", str(tmp_path / "c.json")]
        )
        assert result.exit_code == 2

    def test_compare_figures(self, tmp_path):
        root = make_dataset(tmp_path / "ds")
        out = tmp_path / "cmp.json"
        result = runner.invoke(
            main, ["compare", str(root), str(root), "-o", str(out), "--figures"]
        )
        assert result.exit_code == 0
        assert (tmp_path / "cmp_delta_histograms.png").exists()
        assert (tmp_path / "cmp_delta_means.png").exists()


class TestSelfcheck:
    def test_default_run_passes(self):
        result = runner.invoke(main, ["selfcheck", "--seed", "7"])
        assert result.exit_code == 0, result.output
        assert result.output.count("PASS") == 7
        assert "FAIL" not in result.output

    def test_injected_fault_exits_1_with_seed(self):
        result = runner.invoke(main, ["selfcheck", "--seed", "7", "--inject-fault"])
        assert result.exit_code == 1
        assert "FAIL" in result.output
        assert "seed=7" in result.output

    def test_seed_determinism(self):
        first = runner.invoke(main, ["selfcheck", "--seed", "11"])
        second = runner.invoke(main, ["selfcheck", "--seed", "11"])
        assert first.output == second.output
