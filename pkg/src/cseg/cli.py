"""Command line entry points: batch segmentation, simulated interactive
rounds, and metric evaluation."""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CsegError, NothingToCorrectError
from .metrics import EvalReport, miou, panoptic_quality
from .milp import INFEASIBLE
from .raster import (
    grid_superpixels,
    load_field,
    load_image,
    load_superpixels,
    load_truth,
    save_index_png,
)
from .scribble import ScribbleSet, simulate_correction
from .session import Session, SessionConfig, render

log = logging.getLogger("cseg")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_INFEASIBLE = 4

ALGO_CHOICES = ("l0h", "ilp-u", "ilp-p")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cseg",
        description="Scribble-driven segmentation over superpixel graphs",
    )
    parser.add_argument("--version", action="version", version=f"cseg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--image", help="input image (PNG or PPM), or a directory in batch mode")
        p.add_argument("--superpixels", help="superpixel map (16-bit PNG or raw tensor)")
        p.add_argument("--features", help="feature field (raw tensor)")
        p.add_argument("--probmap", help="probability map (raw tensor)")
        p.add_argument("--truth", help="panoptic truth (raw tensor or 16-bit PNG)")
        p.add_argument("--scribbles", required=True, help="scribble JSON file")
        p.add_argument("--algo", choices=ALGO_CHOICES, default=None)
        p.add_argument("--lambda", dest="lam", type=float, default=None)
        p.add_argument("--eta", type=float, default=None)
        p.add_argument("--time-limit", type=float, default=None)
        p.add_argument("--node-limit", type=int, default=None)
        p.add_argument("--cut-k", type=int, default=None)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--config", help="JSON config file; flags win on conflict")
        p.add_argument("--seed", type=int, default=None, help="recorded in the report")

    seg = sub.add_parser("segment", help="run one segmentation")
    add_common(seg)

    sim = sub.add_parser("interactive-sim", help="simulate correction rounds")
    add_common(sim)
    sim.add_argument("--rounds", type=int, default=3)

    ev = sub.add_parser("eval", help="score a prediction against truth")
    ev.add_argument("--pred-class", required=True)
    ev.add_argument("--pred-instance")
    ev.add_argument("--truth", required=True)
    ev.add_argument("--out", help="write report.json here (prints otherwise)")

    srv = sub.add_parser("serve", help="run the HTTP annotation service")
    srv.add_argument("--bind", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8571)
    srv.add_argument("--max-upload-mb", type=int, default=32)
    srv.add_argument("--idle-timeout", type=float, default=1800.0)
    srv.add_argument("--async", dest="async_solve", action="store_true")
    return parser


def _merge_config(args) -> dict:
    """Config file values fill in flags left at None; flags win."""
    merged = {}
    if getattr(args, "config", None):
        merged.update(json.loads(Path(args.config).read_text()))
    for key in (
        "image", "superpixels", "features", "probmap", "truth", "scribbles",
        "algo", "lam", "eta", "time_limit", "node_limit", "cut_k", "jobs",
        "seed", "superpixel_target", "rounds", "out",
    ):
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    merged.setdefault("algo", "l0h")
    merged.setdefault("lam", 100.0)
    merged.setdefault("cut_k", 3)
    merged.setdefault("jobs", 1)
    merged.setdefault("superpixel_target", 600)
    return merged


def _load_inputs(cfg: dict):
    image = load_image(cfg["image"]) if cfg.get("image") else None
    probmap = load_field(cfg["probmap"], expect_probability=True) if cfg.get("probmap") else None
    features = load_field(cfg["features"]) if cfg.get("features") else None
    if features is None:
        features = probmap if image is None else image
    if features is None:
        raise CsegError("one of --image, --features or --probmap is required")
    if cfg.get("superpixels"):
        sp = load_superpixels(cfg["superpixels"])
    else:
        h = features.height
        w = features.width
        sp = grid_superpixels(w, h, int(cfg["superpixel_target"]))
    truth = load_truth(cfg["truth"]) if cfg.get("truth") else None
    return image, features, probmap, sp, truth


def _session_config(cfg: dict) -> SessionConfig:
    return SessionConfig(
        algorithm=cfg["algo"],
        lam=float(cfg["lam"]),
        eta=cfg.get("eta"),
        time_limit=cfg.get("time_limit"),
        node_limit=cfg.get("node_limit"),
        cut_k=int(cfg["cut_k"]),
        superpixel_target=int(cfg["superpixel_target"]),
    )


def _report_doc(cfg: dict, record, session) -> dict:
    doc = {
        "algo": cfg["algo"],
        "params": {
            "lambda": float(cfg["lam"]),
            "eta": session.eta,
            "time_limit": cfg.get("time_limit"),
            "node_limit": cfg.get("node_limit"),
            "cut_k": int(cfg["cut_k"]),
            "seed": cfg.get("seed"),
        },
        "status": record.status,
        "timings": {
            "build_seconds": record.timings["build_seconds"],
            "solve_seconds": record.timings["solve_seconds"],
            "total_seconds": record.timings["total_seconds"],
        },
        "policy_violations": record.policy_violations,
    }
    if record.objective is not None:
        doc["objective"] = record.objective
    if record.report is not None:
        doc["metrics"] = record.report.to_dict()
    return doc


def _write_round(out_dir: Path, record, cfg, session) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    class_map, instance_map = render(record.labels, record.sp, record.scribbles)
    save_index_png(class_map, out_dir / "class.png")
    save_index_png(instance_map, out_dir / "instance.png")
    (out_dir / "report.json").write_text(
        json.dumps(_report_doc(cfg, record, session), sort_keys=True, indent=2) + "\n"
    )


def _run_one_segment(cfg: dict) -> int:
    image, features, probmap, sp, truth = _load_inputs(cfg)
    scribbles = ScribbleSet.load(cfg["scribbles"])
    session = Session(
        features, sp, image=image, probmap=probmap, truth=truth,
        config=_session_config(cfg),
    )
    record = session.run_round(scribble_set=scribbles)
    if record.status == INFEASIBLE:
        return EXIT_INFEASIBLE
    _write_round(Path(cfg["out"]), record, cfg, session)
    return EXIT_OK


def cmd_segment(args) -> int:
    cfg = _merge_config(args)
    image_path = Path(cfg["image"]) if cfg.get("image") else None
    if image_path is not None and image_path.is_dir():
        return _run_batch(cfg, image_path)
    return _run_one_segment(cfg)


def _batch_stems(cfg: dict, image_dir: Path):
    for path in sorted(image_dir.iterdir()):
        if path.suffix.lower() not in (".png", ".ppm"):
            continue
        sub = dict(cfg)
        sub["image"] = str(path)
        for key in ("superpixels", "features", "probmap", "truth", "scribbles"):
            base = cfg.get(key)
            if base and Path(base).is_dir():
                matches = sorted(Path(base).glob(path.stem + ".*"))
                if not matches:
                    raise CsegError(f"no {key} file for {path.stem} in {base}")
                sub[key] = str(matches[0])
        sub["out"] = str(Path(cfg["out"]) / path.stem)
        yield sub


def _run_batch(cfg: dict, image_dir: Path) -> int:
    jobs = max(int(cfg.get("jobs", 1)), 1)
    subs = list(_batch_stems(cfg, image_dir))
    codes = []
    if jobs == 1:
        codes = [_run_one_segment(sub) for sub in subs]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            codes = list(pool.map(_run_one_segment, subs))
    return max(codes, default=EXIT_OK)


def cmd_interactive_sim(args) -> int:
    cfg = _merge_config(args)
    rounds = int(cfg.get("rounds", 3))
    if not cfg.get("truth"):
        print("interactive-sim requires --truth", file=sys.stderr)
        return EXIT_USAGE
    image, features, probmap, sp, truth = _load_inputs(cfg)
    scribbles = ScribbleSet.load(cfg["scribbles"])
    session = Session(
        features, sp, image=image, probmap=probmap, truth=truth,
        config=_session_config(cfg),
    )
    record = session.run_round(scribble_set=scribbles)
    rows = [_metric_row(0, record)]
    for round_no in range(1, rounds + 1):
        class_map, _ = render(record.labels, record.sp, record.scribbles)
        try:
            correction = simulate_correction(class_map, truth, record.scribbles)
        except NothingToCorrectError:
            rows.append(rows[-1] | {"round": round_no})
            continue
        record = session.run_round(new_scribble=correction)
        rows.append(_metric_row(round_no, record))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    header = "round,miou,pq,sq,rq"
    lines = [header] + [
        f"{r['round']},{r['miou']},{r['pq']},{r['sq']},{r['rq']}" for r in rows
    ]
    (out / "metrics.csv").write_text("\n".join(lines) + "\n")
    session.save_snapshot(out / "session")
    _write_round(out, record, cfg, session)
    return EXIT_OK


def _metric_row(round_no: int, record) -> dict:
    report = record.report
    return {
        "round": round_no,
        "miou": report.miou,
        "pq": report.pq if report.counts else "",
        "sq": report.sq if report.counts else "",
        "rq": report.rq if report.counts else "",
    }


def cmd_eval(args) -> int:
    from .raster import load_index_plane

    pred_class = load_index_plane(Path(args.pred_class))
    truth = load_truth(args.truth)
    if pred_class.shape != (truth.height, truth.width):
        print(
            f"size mismatch: prediction {pred_class.shape}, truth "
            f"{(truth.height, truth.width)}",
            file=sys.stderr,
        )
        return EXIT_INPUT
    if args.pred_instance:
        pred_instance = load_index_plane(Path(args.pred_instance))
        if pred_instance.shape != pred_class.shape:
            print("size mismatch: instance map", file=sys.stderr)
            return EXIT_INPUT
        report = panoptic_quality(pred_class, pred_instance, truth)
    else:
        per_class, mean = miou(pred_class, truth)
        report = EvalReport(per_class_iou=per_class, miou=mean)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text)
    print(f"mIoU {report.miou:.4f}" + (f"  PQ {report.pq:.4f}" if report.counts else ""))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(
        max_upload_bytes=args.max_upload_mb * 1024 * 1024,
        idle_timeout_seconds=args.idle_timeout,
        async_solve=args.async_solve,
    )
    uvicorn.run(app, host=args.bind, port=args.port, log_level="warning")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CSEG_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "segment": cmd_segment,
        "interactive-sim": cmd_interactive_sim,
        "eval": cmd_eval,
        "serve": cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except CsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
