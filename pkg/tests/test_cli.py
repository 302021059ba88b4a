"""CLI tests: flag handling, outputs, determinism, the bundled eval fixture."""

import json
from pathlib import Path

import numpy as np
import pytest

from cseg.cli import main
from cseg.raster import (
    ImagePlane,
    load_index_plane,
    load_truth,
    save_field,
    save_image,
    save_index_png,
    save_truth,
)

from synth import island_fixture, voronoi_scene

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture()
def scene_files(tmp_path):
    scene = voronoi_scene(
        np.random.default_rng(3), size=20, n_regions=4, k_classes=2,
        noise=0.08, scribbled_fraction=1.0, superpixel_target=25, aligned=True,
    )
    paths = {
        "features": tmp_path / "features.cseg",
        "superpixels": tmp_path / "sp.png",
        "truth": tmp_path / "truth.cseg",
        "scribbles": tmp_path / "scribbles.json",
        "out": tmp_path / "out",
    }
    save_field(paths["features"], scene["features"].values, dtype="f32")
    save_index_png(scene["sp"].ids, paths["superpixels"])
    save_truth(scene["truth"], paths["truth"])
    scene["scribbles"].save(paths["scribbles"])
    return scene, paths


class TestSegment:
    def test_happy_path_populates_out(self, scene_files):
        scene, paths = scene_files
        code = main([
            "segment",
            "--features", str(paths["features"]),
            "--superpixels", str(paths["superpixels"]),
            "--scribbles", str(paths["scribbles"]),
            "--truth", str(paths["truth"]),
            "--algo", "l0h", "--eta", "0.3",
            "--out", str(paths["out"]),
        ])
        assert code == 0
        assert (paths["out"] / "class.png").exists()
        assert (paths["out"] / "instance.png").exists()
        report = json.loads((paths["out"] / "report.json").read_text())
        assert report["algo"] == "l0h"
        assert report["params"]["eta"] == 0.3
        assert set(report["timings"]) == {
            "build_seconds", "solve_seconds", "total_seconds",
        }
        assert "metrics" in report

    def test_missing_scribbles_exits_2(self, scene_files, capsys):
        scene, paths = scene_files
        with pytest.raises(SystemExit) as exc:
            main(["segment", "--features", str(paths["features"]),
                  "--out", str(paths["out"])])
        assert exc.value.code == 2

    def test_bad_input_exits_3(self, scene_files):
        scene, paths = scene_files
        code = main([
            "segment",
            "--features", str(paths["features"].with_name("missing.cseg")),
            "--scribbles", str(paths["scribbles"]),
            "--out", str(paths["out"]),
        ])
        assert code == 3

    def test_time_limited_ilp_records_status(self, tmp_path):
        fixture = island_fixture()
        probmap = tmp_path / "prob.cseg"
        save_field(probmap, fixture["probmap"].values, dtype="f32", probability=True)
        sp = tmp_path / "sp.png"
        save_index_png(fixture["sp"].ids, sp)
        scribbles = tmp_path / "s.json"
        fixture["scribbles"].save(scribbles)
        out = tmp_path / "out"
        code = main([
            "segment", "--probmap", str(probmap), "--superpixels", str(sp),
            "--scribbles", str(scribbles), "--algo", "ilp-p",
            "--lambda", str(fixture["lam"]), "--time-limit", "10",
            "--out", str(out),
        ])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["status"] in ("optimal", "feasible_budget_hit")
        assert report["params"]["time_limit"] == 10.0
        assert "objective" in report

    def test_config_file_flags_win(self, scene_files, tmp_path):
        scene, paths = scene_files
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({
            "features": str(paths["features"]),
            "superpixels": str(paths["superpixels"]),
            "scribbles": str(paths["scribbles"]),
            "algo": "l0h",
            "eta": 99.0,
        }))
        code = main([
            "segment", "--config", str(config), "--eta", "0.3",
            "--scribbles", str(paths["scribbles"]),
            "--out", str(paths["out"]),
        ])
        assert code == 0
        report = json.loads((paths["out"] / "report.json").read_text())
        assert report["params"]["eta"] == 0.3  # the flag beat the config file

    def test_deterministic_outputs_under_node_limit(self, scene_files, tmp_path):
        scene, paths = scene_files
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            code = main([
                "segment",
                "--features", str(paths["features"]),
                "--superpixels", str(paths["superpixels"]),
                "--scribbles", str(paths["scribbles"]),
                "--algo", "ilp-u", "--lambda", "1.0", "--node-limit", "500",
                "--out", str(out),
            ])
            assert code == 0
            outs.append(out)
        a, b = outs
        assert (a / "class.png").read_bytes() == (b / "class.png").read_bytes()
        assert (a / "instance.png").read_bytes() == (b / "instance.png").read_bytes()
        ra = json.loads((a / "report.json").read_text())
        rb = json.loads((b / "report.json").read_text())
        ra.pop("timings"), rb.pop("timings")  # wall time is the one nondeterminism
        assert ra == rb


class TestBatchMode:
    @pytest.mark.parametrize("jobs", [1, 2])
    def test_directory_batch(self, tmp_path, jobs):
        images = tmp_path / "images"
        scribbles = tmp_path / "scribbles"
        images.mkdir(), scribbles.mkdir()
        for stem in ("one", "two"):
            scene = voronoi_scene(
                np.random.default_rng(hash(stem) % 100), size=16, n_regions=3,
                k_classes=2, scribbled_fraction=1.0, superpixel_target=16,
                aligned=True,
            )
            rgb = ImagePlane(16, 16, 3, scene["features"].values)
            save_image(rgb, images / f"{stem}.png")
            scene["scribbles"].save(scribbles / f"{stem}.json")
        out = tmp_path / "batch"
        code = main([
            "segment", "--image", str(images), "--scribbles", str(scribbles),
            "--algo", "l0h", "--eta", "0.1", "--jobs", str(jobs),
            "--out", str(out),
        ])
        assert code == 0
        for stem in ("one", "two"):
            assert (out / stem / "class.png").exists()
            assert (out / stem / "report.json").exists()


class TestInteractiveSim:
    def test_three_rounds_csv(self, tmp_path):
        scene = voronoi_scene(
            np.random.default_rng(4), size=24, n_regions=5, k_classes=3,
            noise=0.1, scribbled_fraction=0.6, superpixel_target=36, aligned=True,
        )
        paths = {
            "features": tmp_path / "f.cseg",
            "superpixels": tmp_path / "sp.png",
            "truth": tmp_path / "t.cseg",
            "scribbles": tmp_path / "s.json",
        }
        save_field(paths["features"], scene["features"].values, dtype="f32")
        save_index_png(scene["sp"].ids, paths["superpixels"])
        save_truth(scene["truth"], paths["truth"])
        scene["scribbles"].save(paths["scribbles"])
        out = tmp_path / "sim"
        code = main([
            "interactive-sim",
            "--features", str(paths["features"]),
            "--superpixels", str(paths["superpixels"]),
            "--truth", str(paths["truth"]),
            "--scribbles", str(paths["scribbles"]),
            "--algo", "l0h", "--eta", "0.2", "--rounds", "3",
            "--out", str(out),
        ])
        assert code == 0
        lines = (out / "metrics.csv").read_text().strip().splitlines()
        assert lines[0] == "round,miou,pq,sq,rq"
        assert len(lines) == 5  # header + rounds 0..3
        mious = [float(line.split(",")[1]) for line in lines[1:]]
        assert all(b >= a for a, b in zip(mious, mious[1:]))

    def test_zero_rounds_single_evaluation(self, tmp_path, scene_files):
        scene, paths = scene_files
        out = tmp_path / "sim0"
        code = main([
            "interactive-sim",
            "--features", str(paths["features"]),
            "--superpixels", str(paths["superpixels"]),
            "--truth", str(paths["truth"]),
            "--scribbles", str(paths["scribbles"]),
            "--algo", "l0h", "--eta", "0.3", "--rounds", "0",
            "--out", str(out),
        ])
        assert code == 0
        lines = (out / "metrics.csv").read_text().strip().splitlines()
        assert len(lines) == 2

    def test_perfect_prediction_repeats_rows(self, tmp_path):
        # truth with one class everywhere; a single scribble solves it
        from cseg.raster import PanopticTruth
        from cseg.scribble import STUFF, Scribble, ScribbleSet

        size = 8
        truth = PanopticTruth(
            size, size,
            np.zeros((size, size), dtype=np.int32),
            np.zeros((size, size), dtype=np.int32),
        )
        features = np.full((size, size, 1), 0.5)
        paths = {
            "features": tmp_path / "f.cseg",
            "truth": tmp_path / "t.cseg",
            "scribbles": tmp_path / "s.json",
        }
        save_field(paths["features"], features, dtype="f32")
        save_truth(truth, paths["truth"])
        ScribbleSet([Scribble([(1, 1), (6, 1)], 0, 0)], {0: STUFF}).save(paths["scribbles"])
        out = tmp_path / "sim"
        code = main([
            "interactive-sim",
            "--features", str(paths["features"]),
            "--truth", str(paths["truth"]),
            "--scribbles", str(paths["scribbles"]),
            "--algo", "l0h", "--eta", "1.0", "--rounds", "2",
            "--config", _write_cfg(tmp_path, {"superpixel_target": 16}),
            "--out", str(out),
        ])
        assert code == 0
        lines = (out / "metrics.csv").read_text().strip().splitlines()
        assert len(lines) == 4
        assert lines[1].split(",")[1] == lines[2].split(",")[1] == lines[3].split(",")[1]


def _write_cfg(tmp_path, doc):
    path = tmp_path / "extra_cfg.json"
    path.write_text(json.dumps(doc))
    return str(path)


class TestEval:
    def test_identical_maps(self, tmp_path, capsys):
        cls = np.array([[1, 2], [2, 2]], dtype=np.int32)
        pred = tmp_path / "pred.png"
        save_index_png(cls, pred)
        truth_path = tmp_path / "t.cseg"
        from cseg.raster import PanopticTruth

        save_truth(PanopticTruth(2, 2, cls, np.zeros_like(cls)), truth_path)
        code = main(["eval", "--pred-class", str(pred), "--truth", str(truth_path)])
        assert code == 0
        assert "mIoU 1.0000" in capsys.readouterr().out

    def test_bundled_fixture_byte_identical(self, tmp_path):
        fx = FIXTURES / "eval16"
        out = tmp_path / "report.json"
        code = main([
            "eval",
            "--pred-class", str(fx / "pred_class.png"),
            "--pred-instance", str(fx / "pred_instance.png"),
            "--truth", str(fx / "truth.cseg"),
            "--out", str(out),
        ])
        assert code == 0
        assert out.read_bytes() == (fx / "expected_report.json").read_bytes()

    def test_bundled_fixture_matches_oracle(self):
        from oracles import naive_miou, naive_pq

        fx = FIXTURES / "eval16"
        pred_cls = load_index_plane(fx / "pred_class.png")
        pred_inst = load_index_plane(fx / "pred_instance.png")
        truth = load_truth(fx / "truth.cseg")
        expected = json.loads((fx / "expected_report.json").read_text())
        oracle = naive_pq(pred_cls, pred_inst, truth.class_ids, truth.instance_ids)
        assert expected["pq"] == oracle["pq"]
        assert expected["counts"]["tp"] == oracle["tp"]
        _, mean = naive_miou(pred_cls, truth.class_ids)
        assert expected["miou"] == mean

    def test_size_mismatch_exits_3(self, tmp_path):
        pred = tmp_path / "pred.png"
        save_index_png(np.zeros((2, 2), dtype=np.int32), pred)
        truth_path = tmp_path / "t.cseg"
        from cseg.raster import PanopticTruth

        save_truth(
            PanopticTruth(3, 3, np.zeros((3, 3), dtype=np.int32),
                          np.zeros((3, 3), dtype=np.int32)),
            truth_path,
        )
        code = main(["eval", "--pred-class", str(pred), "--truth", str(truth_path)])
        assert code == 3
