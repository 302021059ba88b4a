"""Regenerate the checked-in test fixtures (deterministic).

Run from the repository root:  python3 tools/gen_fixtures.py
"""

import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from cseg.metrics import panoptic_quality
from cseg.raster import PanopticTruth, save_index_png, save_truth


def eval16_fixture(out_dir: Path) -> None:
    """16x16 panoptic prediction/truth pair plus its expected report."""
    rng = np.random.default_rng(1612)
    truth_cls = rng.integers(0, 4, (16, 16)).astype(np.int32)
    truth_inst = rng.integers(0, 3, (16, 16)).astype(np.int32)
    truth_cls[rng.random((16, 16)) < 0.06] = 255
    pred_cls = truth_cls.copy()
    pred_cls[truth_cls == 255] = 0
    flip = rng.random((16, 16)) < 0.15
    pred_cls[flip] = rng.integers(0, 4, (16, 16))[flip].astype(np.int32)
    pred_inst = truth_inst.copy()
    pred_inst[flip] = rng.integers(0, 3, (16, 16))[flip].astype(np.int32)

    out_dir.mkdir(parents=True, exist_ok=True)
    truth = PanopticTruth(16, 16, truth_cls, truth_inst)
    save_truth(truth, out_dir / "truth.cseg")
    save_index_png(pred_cls, out_dir / "pred_class.png")
    save_index_png(pred_inst, out_dir / "pred_instance.png")
    report = panoptic_quality(pred_cls, pred_inst, truth)
    (out_dir / "expected_report.json").write_text(report.to_json())
    print(f"eval16: mIoU {report.miou:.4f} PQ {report.pq:.4f} -> {out_dir}")


def frontend_png_fixtures(out_dir: Path) -> None:
    """Server-written PNGs plus their expected pixel values, for the browser
    client's decoder tests."""
    from PIL import Image

    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(7)
    gray = rng.integers(0, 65536, (9, 7)).astype(np.uint16)
    gray[0, 0] = 0
    gray[-1, -1] = 65535
    save_index_png(gray, out_dir / "gray16.png")
    (out_dir / "gray16.json").write_text(
        json.dumps({"width": 7, "height": 9, "values": gray.ravel().tolist()})
    )
    rgb = rng.integers(0, 256, (6, 5, 3)).astype(np.uint8)
    Image.fromarray(rgb, mode="RGB").save(out_dir / "rgb8.png")
    (out_dir / "rgb8.json").write_text(
        json.dumps({"width": 5, "height": 6, "values": rgb.ravel().tolist()})
    )
    print(f"frontend png fixtures -> {out_dir}")


if __name__ == "__main__":
    eval16_fixture(ROOT / "tests" / "fixtures" / "eval16")
    frontend_png_fixtures(ROOT / "frontend" / "tests" / "fixtures")
