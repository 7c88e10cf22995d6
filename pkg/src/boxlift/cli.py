"""Command-line entry point: lift, eval, roundtrip and synth subcommands.

Exit codes: 0 success, 1 tolerance or assertion failure, 2 input error.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from boxlift import io as bio
from boxlift.boxes import footprint
from boxlift.config import RunConfig, load_config
from boxlift.errors import BoxliftError
from boxlift.geometry import wrap_angle
from boxlift.lifting import Box3D, LiftParams, encode, lift
from boxlift.metrics import (
    ClassAccumulator,
    DifficultyEval,
    EvalReport,
    difficulty_filter,
    match_center_distance,
    match_footprints,
    orientation_similarity,
    pr_curve,
)
from boxlift.report import format_table, render_pr_figures, write_pr_csv, write_report_json
from boxlift.synth import SceneSpec, generate

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_INPUT = 2

GIMBAL_MARGIN = math.pi / 2 - 1e-3


class InputError(Exception):
    pass


def _load_config(args) -> RunConfig:
    try:
        return load_config(args.config)
    except (OSError, ValueError) as exc:
        raise InputError(f"config: {exc}") from exc


def _camera_for_scene(scene, calib_path):
    if calib_path:
        try:
            return bio.parse_kitti_calib(Path(calib_path).read_text())
        except (OSError, BoxliftError) as exc:
            raise InputError(f"calibration: {exc}") from exc
    if scene.camera is None:
        raise InputError("scene has no camera and no --calib was given")
    return scene.camera


def cmd_lift(args) -> int:
    config = _load_config(args)
    try:
        scene = bio.load_scene(args.params_file)
    except (OSError, BoxliftError) as exc:
        raise InputError(f"{args.params_file}: {exc}") from exc
    cam = _camera_for_scene(scene, args.calib)

    records = []
    failures = []
    for i, det in enumerate(scene.detections):
        try:
            if isinstance(det, LiftParams):
                box, _ = lift(det, cam, config.priors)
            else:
                box = det
            records.append(bio.box_to_record(box, cam))
        except BoxliftError as exc:
            failures.append((i, str(exc)))
    Path(args.out).write_text(bio.serialize_kitti_label_file(records))
    print(f"lifted {len(records)} of {len(scene.detections)} detections -> {args.out}")
    if failures:
        print("failed records:", file=sys.stderr)
        for i, reason in failures:
            print(f"  detection[{i}]: {reason}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def _frame_stems(gt_dir: Path) -> list[str]:
    return sorted(p.stem for p in gt_dir.glob("*.txt"))


def _eval_frame(task) -> dict:
    """Per-frame worker: parse, match per class/difficulty, return plain rows."""
    stem, pred_path, gt_path, config = task
    gt_records = bio.parse_kitti_label_file(Path(gt_path).read_text())
    pred_records = []
    if pred_path is not None:
        pred_records = bio.parse_kitti_label_file(Path(pred_path).read_text())

    gts_by_class: dict[str, list] = {}
    for rec in gt_records:
        gts_by_class.setdefault(rec.type, []).append(bio.record_to_ground_truth(rec))
    dets_by_class: dict[str, list[Box3D]] = {}
    for rec in pred_records:
        dets_by_class.setdefault(rec.type, []).append(bio.record_to_box(rec))

    out: dict = {}
    for cls in set(gts_by_class) | set(dets_by_class):
        gts = gts_by_class.get(cls, [])
        dets = dets_by_class.get(cls, [])
        iou_min = config.iou_threshold(cls)
        scores = [d.score if d.score is not None else 0.0 for d in dets]
        order = sorted(range(len(dets)), key=lambda i: (-scores[i], i))
        det_fp = [footprint(d) for d in dets]
        gt_fp = [footprint(g.box) for g in gts]
        cls_out = {}
        for diff in config.difficulties:
            include = difficulty_filter(gts, diff, config.difficulty_profiles)
            m = match_footprints(det_fp, order, gt_fp, iou_min, include)
            rows = []
            for i in range(len(dets)):
                if m.det_ignored[i]:
                    continue
                sim = 0.0
                if m.det_tp[i]:
                    sim = orientation_similarity(dets[i], gts[m.det_gt_index[i]].box)
                rows.append((scores[i], bool(m.det_tp[i]), sim))
            cd = {}
            for t in config.cd_thresholds:
                mc = match_center_distance(dets, [g.box for g in gts], t, include)
                cd[f"{t:g}"] = [(scores[i], bool(mc.det_tp[i]))
                                for i in range(len(dets)) if not mc.det_ignored[i]]
            cls_out[diff] = {
                "rows": rows,
                "num_gt": int(include.sum()),
                "num_fn": m.num_fn,
                "cd": cd,
            }
        out[cls] = cls_out
    return {"stem": stem, "classes": out}


def cmd_eval(args) -> int:
    config = _load_config(args)
    gt_dir = Path(args.gt_dir)
    pred_dir = Path(args.pred_dir)
    if not gt_dir.is_dir():
        raise InputError(f"ground-truth directory {gt_dir} does not exist")
    if not pred_dir.is_dir():
        raise InputError(f"prediction directory {pred_dir} does not exist")
    stems = _frame_stems(gt_dir)
    if not stems:
        raise InputError(f"no label files in {gt_dir}")
    if args.calib_dir:
        calib_dir = Path(args.calib_dir)
        missing = [s for s in stems if not (calib_dir / f"{s}.txt").exists()]
        if missing:
            raise InputError(f"missing calibration for frames: {missing[:5]}")

    tasks = []
    for stem in stems:
        pred_path = pred_dir / f"{stem}.txt"
        tasks.append((stem, str(pred_path) if pred_path.exists() else None,
                      str(gt_dir / f"{stem}.txt"), config))

    jobs = args.jobs if args.jobs is not None else config.jobs
    try:
        if jobs is not None and jobs <= 1:
            frame_results = [_eval_frame(t) for t in tasks]
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                frame_results = list(pool.map(_eval_frame, tasks, chunksize=16))
    except BoxliftError as exc:
        raise InputError(str(exc)) from exc

    # Deterministic reduction in stem order regardless of completion order.
    frame_results.sort(key=lambda r: r["stem"])
    accs: dict[tuple[str, str], ClassAccumulator] = {}
    cd_rows: dict[tuple[str, str, str], list] = {}
    cd_gt: dict[tuple[str, str], int] = {}
    for result in frame_results:
        stem = result["stem"]
        for cls, by_diff in result["classes"].items():
            for diff, data in by_diff.items():
                acc = accs.setdefault((cls, diff), ClassAccumulator())
                acc.add_rows(stem, data["rows"], data["num_gt"], data["num_fn"])
                cd_gt[(cls, diff)] = cd_gt.get((cls, diff), 0) + data["num_gt"]
                for t, rows in data["cd"].items():
                    cd_rows.setdefault((cls, diff, t), []).extend(
                        (-score, stem, i, tp) for i, (score, tp) in enumerate(rows))

    entries: dict[str, dict[str, DifficultyEval]] = {}
    for (cls, diff), acc in sorted(accs.items()):
        curve = acc.curve(config.ap_variant)
        cd_ap: dict[str, float | None] = {}
        aps = []
        for t in config.cd_thresholds:
            rows = sorted(cd_rows.get((cls, diff, f"{t:g}"), []))
            c = pr_curve([r[3] for r in rows], cd_gt.get((cls, diff), 0),
                         variant=config.ap_variant)
            cd_ap[f"{t:g}"] = None if c is None else c.ap
            if c is not None:
                aps.append(c.ap)
        cd_ap["mean"] = float(np.mean(aps)) if aps else None
        entries.setdefault(cls, {})[diff] = DifficultyEval(
            ap=None if curve is None else curve.ap,
            aos=None if curve is None else curve.aos,
            counts=acc.counts(), curve=curve, cd_ap=cd_ap)

    report = EvalReport(entries, dict(config.iou_thresholds), config.ap_variant,
                        config.cd_thresholds)
    table = format_table(report)
    print(table, end="")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report_json(report, out_dir / "report.json")
    write_pr_csv(report, out_dir / "pr_curves.csv")
    (out_dir / "table.txt").write_text(table)
    figures = render_pr_figures(report, out_dir)
    print(f"wrote report.json, pr_curves.csv, table.txt and "
          f"{len(figures)} figure(s) to {out_dir}")
    return EXIT_OK


def _spec_from_args(args) -> SceneSpec:
    return SceneSpec(
        seed=args.seed,
        num_frames=args.frames,
        boxes_per_frame=(args.min_boxes, args.max_boxes),
        depth_range=(args.min_depth, args.max_depth),
        pitch_roll_jitter=math.radians(args.pitch_roll_jitter_deg),
        depth_noise_std=args.depth_noise,
        side_ratio_noise_std=args.side_ratio_noise,
        angle_noise_std=args.angle_noise,
    )


def cmd_synth(args) -> int:
    config = _load_config(args)
    spec = _spec_from_args(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenes = generate(spec, priors=config.priors)
    for i, scene in enumerate(scenes):
        bio.save_scene(scene, out_dir / f"scene_{i:06d}.json")
    print(f"wrote {len(scenes)} scene(s) to {out_dir}")
    return EXIT_OK


def cmd_roundtrip(args) -> int:
    config = _load_config(args)
    if args.scene:
        try:
            scenes = [bio.load_scene(args.scene)]
        except (OSError, BoxliftError) as exc:
            raise InputError(f"{args.scene}: {exc}") from exc
    elif args.synth:
        scenes = generate(_spec_from_args(args), priors=config.priors)
    else:
        raise InputError("either a scene file or --synth is required")

    worst = {"origin": 0.0, "dims": 0.0, "angles": 0.0}
    checked = 0
    skipped = 0
    for si, scene in enumerate(scenes):
        cam = scene.camera
        if cam is None:
            raise InputError(f"scene {si} has no camera")
        # Detections pair with the ground truth 1:1 in synthetic scenes; when
        # they do, verify that lifting them reproduces the paired box too.
        paired = (len(scene.detections) == len(scene.ground_truth)
                  and all(isinstance(d, LiftParams) for d in scene.detections))
        for bi, gt in enumerate(scene.ground_truth):
            box = gt.box
            if abs(box.angles.pitch) > GIMBAL_MARGIN:
                print(f"warning: scene {si}: skipping near-gimbal box "
                      f"(pitch {box.angles.pitch:.3f} rad)", file=sys.stderr)
                skipped += 1
                continue
            try:
                rebuilt = [lift(encode(box, cam, config.priors), cam, config.priors)[0]]
                if paired:
                    rebuilt.append(lift(scene.detections[bi], cam, config.priors)[0])
            except BoxliftError as exc:
                raise InputError(f"scene {si}: {exc}") from exc
            for candidate in rebuilt:
                worst["origin"] = max(worst["origin"], float(
                    np.linalg.norm(candidate.origin - box.origin)))
                worst["dims"] = max(worst["dims"], max(
                    abs(a - b) for a, b in zip(candidate.dims, box.dims)))
                worst["angles"] = max(worst["angles"], max(
                    abs(wrap_angle(a - b)) for a, b in
                    zip(candidate.angles.as_tuple(), box.angles.as_tuple())))
            checked += 1

    print(f"round-trip residuals over {checked} box(es) ({skipped} skipped):")
    print(f"  origin : {worst['origin']:.3e} m   (tolerance {args.tol_origin:g})")
    print(f"  dims   : {worst['dims']:.3e} m   (tolerance {args.tol_dims:g})")
    print(f"  angles : {worst['angles']:.3e} rad (tolerance {args.tol_angles:g})")
    if (worst["origin"] > args.tol_origin or worst["dims"] > args.tol_dims
            or worst["angles"] > args.tol_angles):
        print("FAIL: residuals exceed tolerance", file=sys.stderr)
        return EXIT_TOLERANCE
    print("OK")
    return EXIT_OK


def _add_synth_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--frames", type=int, default=10)
    parser.add_argument("--min-boxes", type=int, default=1)
    parser.add_argument("--max-boxes", type=int, default=8)
    parser.add_argument("--min-depth", type=float, default=12.0)
    parser.add_argument("--max-depth", type=float, default=60.0)
    parser.add_argument("--pitch-roll-jitter-deg", type=float, default=3.0)
    parser.add_argument("--depth-noise", type=float, default=0.0,
                        help="relative std-dev of depth noise")
    parser.add_argument("--side-ratio-noise", type=float, default=0.0)
    parser.add_argument("--angle-noise", type=float, default=0.0,
                        help="std-dev of yaw-offset noise, radians")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boxlift",
        description="Lift 2D vehicle detections to 3D boxes and evaluate them.")
    parser.add_argument("--config", default=None,
                        help=f"config JSON (default: ${'{'}BOXLIFT_CONFIG{'}'} or built-ins)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_lift = sub.add_parser("lift", help="lift a scene's parameter detections "
                                         "to KITTI-format 3D predictions")
    p_lift.add_argument("params_file", help="scene JSON with parameter detections")
    p_lift.add_argument("--calib", default=None, help="KITTI calibration file")
    p_lift.add_argument("--out", required=True, help="output KITTI label file")
    p_lift.set_defaults(func=cmd_lift)

    p_eval = sub.add_parser("eval", help="evaluate KITTI-format predictions")
    p_eval.add_argument("--pred-dir", required=True)
    p_eval.add_argument("--gt-dir", required=True)
    p_eval.add_argument("--calib-dir", default=None,
                        help="optional; only checked for frame alignment")
    p_eval.add_argument("--out-dir", required=True)
    p_eval.add_argument("--jobs", type=int, default=None,
                        help="parallel frames (default: config / all cores); 1 = serial")
    p_eval.set_defaults(func=cmd_eval)

    p_round = sub.add_parser("roundtrip", help="encode/lift residual diagnostics")
    p_round.add_argument("--scene", default=None, help="scene JSON to check")
    p_round.add_argument("--synth", action="store_true",
                         help="check synthetic scenes instead of a file")
    p_round.add_argument("--tol-origin", type=float, default=1e-6)
    p_round.add_argument("--tol-dims", type=float, default=1e-9)
    p_round.add_argument("--tol-angles", type=float, default=1e-9)
    _add_synth_flags(p_round)
    p_round.set_defaults(func=cmd_roundtrip)

    p_synth = sub.add_parser("synth", help="generate synthetic scene files")
    p_synth.add_argument("--out-dir", required=True)
    _add_synth_flags(p_synth)
    p_synth.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BoxliftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
