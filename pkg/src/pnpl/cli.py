"""Command-line front door: solve poses from files, run benchmarks, compute CRBs.

Correspondence files are JSON with pixel-coordinate observations::

    {
      "intrinsics": [[fx, 0, cx], [0, fy, cy], [0, 0, 1]],
      "points": [{"X": [x, y, z], "x_px": [u, v]}, ...],
      "lines":  [{"P": [...], "Q": [...], "p_px": [u, v], "q_px": [u, v]}, ...],
      "true_pose": {"rotation": [[...], ...], "translation": [...]}   // optional
    }

Exit codes: 0 success, 2 parse/config error, 3 underdetermined input,
4 numerical failure. Failures print a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bench
from .camera import LineCorrespondences, PointCorrespondences, normalize_pixel
from .crb import pose_crb
from .errors import PnplError, Underdetermined
from .so3 import Pose, normalize_line_endpoints
from .solver import SolverConfig, estimate_pose

EXIT_PARSE = 2
EXIT_UNDERDETERMINED = 3
EXIT_NUMERICAL = 4


class ParseFailure(Exception):
    """Invalid input file or configuration (maps to exit code 2)."""


def _require(cond, message):
    if not cond:
        raise ParseFailure(message)


def _as_array(value, shape, name):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseFailure(f"{name} is not numeric") from exc
    _require(arr.shape == shape, f"{name} must have shape {shape}, got {arr.shape}")
    _require(bool(np.all(np.isfinite(arr))), f"{name} has non-finite entries")
    return arr


def load_correspondence_file(path):
    """Parse a correspondence file into normalized-coordinate containers.

    Applies the preprocessing steps: pixel coordinates are converted with the
    intrinsics and 3D line endpoints are slid to sqrt(3) separation.
    Returns (points, lines, intrinsics, true_pose_or_None).
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"invalid JSON in {path}: {exc}") from exc
    _require(isinstance(doc, dict), "top-level JSON value must be an object")
    _require("intrinsics" in doc, "missing 'intrinsics'")
    k = _as_array(doc["intrinsics"], (3, 3), "intrinsics")

    raw_points = doc.get("points", [])
    raw_lines = doc.get("lines", [])
    _require(isinstance(raw_points, list), "'points' must be a list")
    _require(isinstance(raw_lines, list), "'lines' must be a list")
    _require(len(raw_points) + len(raw_lines) >= 1, "no correspondences in file")

    points = PointCorrespondences.empty()
    if raw_points:
        world = np.array([_as_array(p.get("X"), (3,), "points[].X") for p in raw_points])
        px = np.array([_as_array(p.get("x_px"), (2,), "points[].x_px") for p in raw_points])
        points = PointCorrespondences(world=world, image=normalize_pixel(k, px))

    lines = LineCorrespondences.empty()
    if raw_lines:
        p3 = np.array([_as_array(l.get("P"), (3,), "lines[].P") for l in raw_lines])
        q3 = np.array([_as_array(l.get("Q"), (3,), "lines[].Q") for l in raw_lines])
        p_px = np.array([_as_array(l.get("p_px"), (2,), "lines[].p_px") for l in raw_lines])
        q_px = np.array([_as_array(l.get("q_px"), (2,), "lines[].q_px") for l in raw_lines])
        p3, q3 = normalize_line_endpoints(p3, q3)
        lines = LineCorrespondences.from_endpoints(
            p3, q3, normalize_pixel(k, p_px), normalize_pixel(k, q_px)
        )

    true_pose = None
    if "true_pose" in doc:
        true_pose = _parse_pose_obj(doc["true_pose"])
    return points, lines, k, true_pose


def _parse_pose_obj(obj) -> Pose:
    _require(isinstance(obj, dict), "pose must be an object")
    rot = _as_array(obj.get("rotation"), (3, 3), "pose.rotation")
    trans = _as_array(obj.get("translation"), (3,), "pose.translation")
    return Pose(rot, trans)


def _pose_json(pose: Pose) -> dict:
    return {
        "rotation": pose.rotation.tolist(),  # row-major 3x3
        "translation": pose.translation.tolist(),
    }


def cmd_solve(args) -> int:
    points, lines, _, _ = load_correspondence_file(args.file)
    config = SolverConfig(
        sigma2_override=args.sigma2,
        gn_iterations=0 if args.no_refine else 1,
    )
    report = estimate_pose(
        points if len(points) else None,
        lines if len(lines) else None,
        config,
    )
    out = {
        "rotation": report.pose.rotation.tolist(),
        "translation": report.pose.translation.tolist(),
        "sigma2_hat": report.sigma2_hat,
        "mode": report.mode.value,
        "first_step_pose": _pose_json(report.first_step),
        "diagnostics": {
            "n_points": len(points),
            "n_lines": len(lines),
            "bias_eliminated": report.bias_eliminated,
            "refined": report.refined is not None,
            "scale_s": report.recovery.scale_s,
            "sign_d": report.recovery.sign_d,
            "smallest_eig": report.recovery.smallest_eig,
            "eig_gap": report.recovery.eig_gap,
            "variance_clamped": bool(report.variance.clamped)
            if report.variance is not None
            else False,
        },
    }
    text = json.dumps(out, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_bench(args) -> int:
    sizes = _parse_grid(args.grid) if args.grid else None
    sigmas = (args.sigma_px,) if args.sigma_px is not None else bench.DEFAULT_SIGMAS_PX
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)

    if args.experiment == "variance":
        rows = bench.variance_experiment(
            sizes or bench.DEFAULT_GRID, sigmas, args.k, args.seed
        )
    elif args.experiment == "bias":
        rows = bench.bias_experiment(
            sizes or bench.DEFAULT_GRID, sigmas, args.k, args.seed
        )
    elif args.experiment == "mse":
        rows = bench.mse_experiment(
            sizes or bench.DEFAULT_GRID, sigmas, args.k, args.seed
        )
    elif args.experiment == "runtime":
        rows = bench.runtime_experiment(
            sizes or bench.DEFAULT_RUNTIME_SIZES, sigmas[0], args.seed
        )
    else:  # argparse choices prevent this
        raise ParseFailure(f"unknown experiment {args.experiment!r}")

    meta = {
        "experiment": args.experiment,
        "grid": list(sizes or ()),
        "sigmas_px": list(sigmas),
        "k": args.k,
        "seed": args.seed,
    }
    csv_path = os.path.join(out_dir, f"{args.experiment}.csv")
    json_path = os.path.join(out_dir, f"{args.experiment}.json")
    bench.write_rows_csv(rows, csv_path)
    bench.write_rows_json(rows, meta, json_path)
    print(csv_path)
    print(json_path)
    return 0


def cmd_crb(args) -> int:
    points, lines, k, file_pose = load_correspondence_file(args.file)
    if args.pose:
        if os.path.exists(args.pose):
            with open(args.pose) as fh:
                pose_doc = json.load(fh)
        else:
            try:
                pose_doc = json.loads(args.pose)
            except json.JSONDecodeError as exc:
                raise ParseFailure(f"--pose is neither a file nor JSON: {exc}") from exc
        pose = _parse_pose_obj(pose_doc)
    elif file_pose is not None:
        pose = file_pose
    else:
        raise ParseFailure("no pose: pass --pose or embed 'true_pose' in the file")

    sigma2 = (args.sigma_px / float(k[0, 0])) ** 2
    _require(sigma2 > 0, "--sigma-px must be positive")
    result = pose_crb(
        pose,
        points if len(points) else None,
        lines if len(lines) else None,
        sigma2,
    )
    print(
        json.dumps(
            {
                "trace": result.trace_bound,
                "rotation_block_trace": result.rotation_block_trace,
                "translation_block_trace": result.translation_block_trace,
            },
            indent=2,
        )
    )
    return 0


def _parse_grid(text):
    try:
        sizes = tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise ParseFailure(f"bad --grid value {text!r}") from exc
    _require(len(sizes) >= 1 and all(s > 0 for s in sizes), "--grid needs positive sizes")
    return sizes


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pnpl",
        description="Camera pose estimation from point and line correspondences",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="estimate a pose from a correspondence file")
    p_solve.add_argument("file")
    p_solve.add_argument("--no-refine", action="store_true",
                         help="stop after the consistent first step")
    p_solve.add_argument("--sigma2", type=float, default=None,
                         help="override the noise variance (normalized units squared)")
    p_solve.add_argument("--out", default=None, help="write the result JSON here")
    p_solve.set_defaults(func=cmd_solve)

    p_bench = sub.add_parser("bench", help="run a synthetic Monte Carlo experiment")
    p_bench.add_argument("--experiment", choices=["variance", "bias", "mse", "runtime"],
                         default="mse")
    p_bench.add_argument("--grid", default=None,
                         help="comma-separated problem sizes (default per experiment)")
    p_bench.add_argument("--k", type=int, default=200,
                         help="Monte Carlo trials per grid cell (1000 = full protocol)")
    p_bench.add_argument("--sigma-px", type=float, default=None,
                         help="pixel noise std (default: 5 and 10)")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", default=None, help="output directory")
    p_bench.set_defaults(func=cmd_bench)

    p_crb = sub.add_parser("crb", help="theoretical pose error bound for a scene")
    p_crb.add_argument("file")
    p_crb.add_argument("--pose", default=None,
                       help="pose JSON file or inline JSON (default: file's true_pose)")
    p_crb.add_argument("--sigma-px", type=float, default=1.0)
    p_crb.set_defaults(func=cmd_crb)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage, which matches EXIT_PARSE.
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ParseFailure as exc:
        _emit_error("ParseError", exc)
        return EXIT_PARSE
    except Underdetermined as exc:
        _emit_error("Underdetermined", exc)
        return EXIT_UNDERDETERMINED
    except PnplError as exc:
        _emit_error(type(exc).__name__, exc)
        return EXIT_NUMERICAL


def _emit_error(kind, exc) -> None:
    print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
