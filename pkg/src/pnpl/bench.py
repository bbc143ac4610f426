"""Synthetic scene generation and the Monte Carlo benchmark engine.

Scenes follow a fixed protocol: 2D features are drawn uniformly on the image
rectangle, lifted to the camera frame with uniform random depths, and
transformed into the world frame with the inverse of the ground-truth pose.
Line segments are then slid to the canonical sqrt(3) endpoint separation.
Observation noise is i.i.d. Gaussian per 2D point and per line endpoint,
specified in pixels and applied in normalized coordinates (sigma_px / fx).

Each Monte Carlo trial draws an independent scene and noise realization from
a child RNG stream derived from (seed, trial index), so runs are reproducible
and trials can execute concurrently (cap workers with AOPNPL_THREADS).
"""

from __future__ import annotations

import gc
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .camera import (
    CameraIntrinsics,
    LineCorrespondences,
    PointCorrespondences,
    normalize_pixel,
)
from .crb import pose_crb
from .errors import PnplError
from .refine import gn_refine
from .so3 import Pose, normalize_line_endpoints
from .solver import SolverConfig, consistent_estimate, estimate_pose_pixels
from .variance import estimate_sigma2

VARIANT_NO_BE = "first-step-no-BE"
VARIANT_BE = "first-step-BE"
VARIANT_TWO_STEP = "two-step"
VARIANT_ORACLE = "oracle-sigma"
ALL_VARIANTS = (VARIANT_NO_BE, VARIANT_BE, VARIANT_TWO_STEP, VARIANT_ORACLE)

CSV_COLUMNS = [
    "size_n",
    "size_m",
    "sigma_px",
    "variant",
    "mse_r",
    "mse_t",
    "bias_r",
    "bias_t",
    "sigma2_mse",
    "crb_trace",
    "time_s",
    "failures",
]


def default_intrinsics() -> np.ndarray:
    """Benchmark camera: 800 px focal length, 640x480 image."""
    return np.array([[800.0, 0.0, 320.0], [0.0, 800.0, 240.0], [0.0, 0.0, 1.0]])


def euler_to_rotation(angles) -> np.ndarray:
    """ZYX convention: R = Rz(c) @ Ry(b) @ Rx(a) for angles (a, b, c)."""
    a, b, c = angles
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cc, sc = np.cos(c), np.sin(c)
    rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    return rz @ ry @ rx


@dataclass(frozen=True)
class SceneConfig:
    """Parameters of one synthetic benchmark scene family."""

    n_points: int
    n_lines: int
    sigma_px: float
    euler_angles: tuple = (np.pi / 3, np.pi / 3, np.pi / 3)
    translation: tuple = (2.0, 2.0, 2.0)
    intrinsics: np.ndarray = field(default_factory=default_intrinsics)
    depth_range: tuple = (2.0, 10.0)
    image_size: tuple = (640, 480)
    seed: int = 0
    # Minimum pixel distance between the two generated endpoints of a line.
    min_endpoint_separation_px: float = 20.0

    def true_pose(self) -> Pose:
        return Pose(
            euler_to_rotation(self.euler_angles), np.asarray(self.translation, float)
        )

    @property
    def sigma_norm(self) -> float:
        return self.sigma_px / self.intrinsics[0, 0]


@dataclass(frozen=True)
class BenchRow:
    """Aggregated metrics for one (scene config, estimator variant) pair."""

    size_n: int
    size_m: int
    sigma_px: float
    variant: str
    mse_r: float
    mse_t: float
    bias_r: float
    bias_t: float
    sigma2_mse: float
    crb_trace: float
    time_s: float
    failures: int


def _lift_pixels(px, cfg: SceneConfig, pose: Pose, rng) -> np.ndarray:
    """Assign uniform depths to image points and move them to the world frame."""
    k = px.shape[0]
    norm = normalize_pixel(cfg.intrinsics, px)
    depth = rng.uniform(cfg.depth_range[0], cfg.depth_range[1], k)
    cam = np.column_stack([norm, np.ones(k)]) * depth[:, None]
    return (cam - pose.translation) @ pose.rotation


def generate_scene(cfg: SceneConfig, rng: np.random.Generator):
    """Draw one exact (pre-noise) scene.

    Returns (points, lines, true_pose); observations are stored in normalized
    image coordinates and all generated depths lie in cfg.depth_range.
    """
    pose = cfg.true_pose()
    w, h = cfg.image_size
    n, m = cfg.n_points, cfg.n_lines

    pt_px = rng.uniform([0.0, 0.0], [float(w), float(h)], (n, 2))
    points = PointCorrespondences(
        world=_lift_pixels(pt_px, cfg, pose, rng),
        image=normalize_pixel(cfg.intrinsics, pt_px),
    )

    p_px = rng.uniform([0.0, 0.0], [float(w), float(h)], (m, 2))
    q_px = rng.uniform([0.0, 0.0], [float(w), float(h)], (m, 2))
    while True:
        close = np.linalg.norm(p_px - q_px, axis=1) < cfg.min_endpoint_separation_px
        if not np.any(close):
            break
        q_px[close] = rng.uniform(
            [0.0, 0.0], [float(w), float(h)], (int(np.sum(close)), 2)
        )

    p_world = _lift_pixels(p_px, cfg, pose, rng)
    q_world = _lift_pixels(q_px, cfg, pose, rng)
    if m:
        p_world, q_world = normalize_line_endpoints(p_world, q_world)
    lines = LineCorrespondences.from_endpoints(
        p_world,
        q_world,
        normalize_pixel(cfg.intrinsics, p_px),
        normalize_pixel(cfg.intrinsics, q_px),
    )
    return points, lines, pose


def add_noise(observations, sigma_px: float, intrinsics, rng: np.random.Generator):
    """Perturb every 2D observation with N(0, (sigma_px/fx)^2 I_2).

    Accepts either correspondence container and returns a new one; line
    endpoints are perturbed independently of each other.
    """
    fx = (
        intrinsics.fx
        if isinstance(intrinsics, CameraIntrinsics)
        else float(np.asarray(intrinsics)[0, 0])
    )
    sigma = sigma_px / fx
    if isinstance(observations, PointCorrespondences):
        noise = sigma * rng.standard_normal(observations.image.shape)
        return observations.with_image(observations.image + noise)
    if isinstance(observations, LineCorrespondences):
        noise_p = sigma * rng.standard_normal(observations.image_p.shape)
        noise_q = sigma * rng.standard_normal(observations.image_q.shape)
        return observations.with_images(
            observations.image_p + noise_p, observations.image_q + noise_q
        )
    raise TypeError(f"unsupported observation container: {type(observations)!r}")


def _trial(cfg: SceneConfig, trial_idx: int, variants, sigma2_true: float):
    """Run one Monte Carlo trial; returns per-variant results and side data."""
    rng = np.random.default_rng((cfg.seed, trial_idx))
    points0, lines0, pose0 = generate_scene(cfg, rng)
    points = add_noise(points0, cfg.sigma_px, cfg.intrinsics, rng)
    lines = add_noise(lines0, cfg.sigma_px, cfg.intrinsics, rng)

    crb_trace = float("nan")
    if sigma2_true > 0:
        crb_trace = pose_crb(
            pose0,
            points0 if len(points0) else None,
            lines0 if len(lines0) else None,
            sigma2_true,
        ).trace_bound

    pts_arg = points if len(points) else None
    lns_arg = lines if len(lines) else None
    out = {}
    sigma2_err = None

    def record(variant, pose, elapsed):
        out[variant] = (pose, elapsed)

    if VARIANT_NO_BE in variants:
        t0 = time.perf_counter()
        try:
            rep = consistent_estimate(
                pts_arg, lns_arg, SolverConfig(bias_elimination=False)
            )
            record(VARIANT_NO_BE, rep.first_step, time.perf_counter() - t0)
            if sigma2_err is None:
                sigma2_err = rep.sigma2_hat - sigma2_true
        except PnplError:
            out[VARIANT_NO_BE] = None

    need_be = VARIANT_BE in variants or VARIANT_TWO_STEP in variants
    if need_be:
        t0 = time.perf_counter()
        try:
            rep = consistent_estimate(pts_arg, lns_arg)
            t_be = time.perf_counter() - t0
            sigma2_err = rep.sigma2_hat - sigma2_true
            if VARIANT_BE in variants:
                record(VARIANT_BE, rep.first_step, t_be)
            if VARIANT_TWO_STEP in variants:
                t1 = time.perf_counter()
                refined = gn_refine(
                    rep.first_step, rep.sigma2_hat, points, lines, iterations=1
                )
                record(VARIANT_TWO_STEP, refined, t_be + time.perf_counter() - t1)
        except PnplError:
            for v in (VARIANT_BE, VARIANT_TWO_STEP):
                if v in variants:
                    out[v] = None

    if VARIANT_ORACLE in variants:
        t0 = time.perf_counter()
        try:
            rep = consistent_estimate(
                pts_arg, lns_arg, SolverConfig(sigma2_override=sigma2_true)
            )
            refined = gn_refine(
                rep.first_step, max(sigma2_true, 0.0), points, lines, iterations=1
            )
            record(VARIANT_ORACLE, refined, time.perf_counter() - t0)
        except PnplError:
            out[VARIANT_ORACLE] = None

    return out, sigma2_err, crb_trace


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("AOPNPL_THREADS", "1")))
    except ValueError:
        return 1


def run_monte_carlo(
    cfg: SceneConfig, k_trials: int, variants=(VARIANT_BE, VARIANT_TWO_STEP)
) -> list[BenchRow]:
    """Run K independent trials of ``cfg`` and aggregate per-variant metrics.

    MSE and bias follow the benchmark's definitions: MSE(R) averages the
    squared Frobenius error, the scalar bias sums the absolute entries of
    the mean estimate minus truth. Trials where an estimator raises are
    counted in ``failures`` and excluded from the averages.
    """
    if k_trials < 1:
        raise ValueError("k_trials must be at least 1")
    sigma2_true = cfg.sigma_norm**2
    pose0 = cfg.true_pose()

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trials = list(
                pool.map(
                    lambda k: _trial(cfg, k, variants, sigma2_true), range(k_trials)
                )
            )
    else:
        trials = [_trial(cfg, k, variants, sigma2_true) for k in range(k_trials)]

    sigma2_sq = [err**2 for _, err, _ in trials if err is not None]
    sigma2_mse = float(np.mean(sigma2_sq)) if sigma2_sq else float("nan")
    crb_vals = [c for _, _, c in trials if np.isfinite(c)]
    crb_trace = float(np.mean(crb_vals)) if crb_vals else float("nan")

    rows = []
    for variant in variants:
        err_r, err_t, times = [], [], []
        sum_r, sum_t = np.zeros((3, 3)), np.zeros(3)
        failures = 0
        for out, _, _ in trials:
            res = out.get(variant)
            if res is None:
                failures += 1
                continue
            pose, elapsed = res
            err_r.append(np.sum((pose.rotation - pose0.rotation) ** 2))
            err_t.append(np.sum((pose.translation - pose0.translation) ** 2))
            sum_r += pose.rotation
            sum_t += pose.translation
            times.append(elapsed)
        k_ok = len(err_r)
        if k_ok:
            mse_r = float(np.mean(err_r))
            mse_t = float(np.mean(err_t))
            bias_r = float(np.sum(np.abs(sum_r / k_ok - pose0.rotation)))
            bias_t = float(np.sum(np.abs(sum_t / k_ok - pose0.translation)))
            time_s = float(np.mean(times))
        else:
            mse_r = mse_t = bias_r = bias_t = time_s = float("nan")
        rows.append(
            BenchRow(
                size_n=cfg.n_points,
                size_m=cfg.n_lines,
                sigma_px=cfg.sigma_px,
                variant=variant,
                mse_r=mse_r,
                mse_t=mse_t,
                bias_r=bias_r,
                bias_t=bias_t,
                sigma2_mse=sigma2_mse,
                crb_trace=crb_trace,
                time_s=time_s,
                failures=failures,
            )
        )
    return rows


def estimate_sigma2_all_modes(cfg: SceneConfig, k_trials: int):
    """Per-trial variance estimates for each applicable mode (test helper).

    Returns a dict mode-name -> array of sigma2_hat over trials, using the
    same per-trial streams as :func:`run_monte_carlo`.
    """
    from .dlt import build_combined_system, build_line_system, build_point_system

    out = {"point": [], "line": [], "combined": []}
    for k in range(k_trials):
        rng = np.random.default_rng((cfg.seed, k))
        points0, lines0, _ = generate_scene(cfg, rng)
        points = add_noise(points0, cfg.sigma_px, cfg.intrinsics, rng)
        lines = add_noise(lines0, cfg.sigma_px, cfg.intrinsics, rng)
        if len(points) >= 6:
            out["point"].append(estimate_sigma2(build_point_system(points)).sigma2_hat)
        if len(lines) >= 9:
            out["line"].append(estimate_sigma2(build_line_system(lines)).sigma2_hat)
        if len(points) >= 2 and len(lines) >= 5 and len(points) + len(lines) >= 11:
            out["combined"].append(
                estimate_sigma2(build_combined_system(points, lines)).sigma2_hat
            )
    return {k: np.array(v) for k, v in out.items() if v}


@dataclass(frozen=True)
class RuntimeRow:
    size: int
    median_seconds: float


def _to_pixels(k, xy_norm: np.ndarray) -> np.ndarray:
    """Inverse of pixel normalization (intrinsics have [0, 0, 1] last row)."""
    k = np.asarray(k, dtype=float)
    return xy_norm @ k[:2, :2].T + k[:2, 2]


def runtime_scaling(base_cfg: SceneConfig, sizes, runs: int = 5):
    """Median full-solve time per problem size and the log-log slope.

    Times the complete pipeline from pixel observations (preprocessing,
    variance estimation, consistent estimate, single GN); scene generation
    and noise are excluded, and a discarded warm-up run precedes each size.
    ``sizes`` must be ascending. Feature kinds present in ``base_cfg`` scale
    together: a combined base gives n = m = size.
    """
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    k = np.asarray(base_cfg.intrinsics, dtype=float)

    def make_inputs(size_idx, size, run):
        cfg = replace(
            base_cfg,
            n_points=size if base_cfg.n_points else 0,
            n_lines=size if base_cfg.n_lines else 0,
        )
        rng = np.random.default_rng((cfg.seed, size_idx, run))
        points0, lines0, _ = generate_scene(cfg, rng)
        points = add_noise(points0, cfg.sigma_px, cfg.intrinsics, rng)
        lines = add_noise(lines0, cfg.sigma_px, cfg.intrinsics, rng)
        return dict(
            points_world=points.world if len(points) else None,
            points_px=_to_pixels(k, points.image) if len(points) else None,
            lines_p_world=lines.p_world if len(lines) else None,
            lines_q_world=lines.q_world if len(lines) else None,
            lines_p_px=_to_pixels(k, lines.image_p) if len(lines) else None,
            lines_q_px=_to_pixels(k, lines.image_q) if len(lines) else None,
        )

    # Interleave sizes round-robin so slow system drift hits each size
    # equally; round 0 warms the solve path and is discarded. Each timed
    # solve runs on a fresh scene, as in actual use.
    samples = {size: [] for size in sizes}
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for run in range(runs + 1):
            for size_idx, size in enumerate(sizes):
                inputs = make_inputs(size_idx, size, run)
                t0 = time.perf_counter()
                estimate_pose_pixels(k, **inputs)
                elapsed = time.perf_counter() - t0
                if run > 0:
                    samples[size].append(elapsed)
    finally:
        if gc_was_enabled:
            gc.enable()

    rows = [
        RuntimeRow(size=size, median_seconds=float(np.median(samples[size])))
        for size in sizes
    ]
    slope = float(
        np.polyfit(
            np.log([r.size for r in rows]),
            np.log([r.median_seconds for r in rows]),
            1,
        )[0]
    )
    return rows, slope


def config_echo(cfg: SceneConfig) -> dict:
    """JSON-friendly dict of a scene config."""
    d = asdict(cfg)
    d["intrinsics"] = np.asarray(cfg.intrinsics).tolist()
    d["euler_angles"] = list(cfg.euler_angles)
    d["translation"] = list(cfg.translation)
    d["depth_range"] = list(cfg.depth_range)
    d["image_size"] = list(cfg.image_size)
    return d


# ---------------------------------------------------------------------------
# Experiment drivers. Each returns BenchRow records in the shared CSV schema;
# grid cells get distinct deterministic seeds derived from the base seed.
# ---------------------------------------------------------------------------

DEFAULT_GRID = (10, 30, 100, 300, 1000)
DEFAULT_SIGMAS_PX = (5.0, 10.0)
DEFAULT_RUNTIME_SIZES = (250, 1000, 4000)

_MODE_SHAPES = {
    "point": lambda s: (s, 0),
    "line": lambda s: (0, s),
    "combined": lambda s: (s, s),
}


def _cell_seed(base_seed: int, cell_index: int) -> int:
    return base_seed * 1_000_003 + cell_index


def _grid_configs(sizes, sigmas_px, seed, modes):
    cell = 0
    for mode in modes:
        shape = _MODE_SHAPES[mode]
        for sigma_px in sigmas_px:
            for size in sizes:
                n, m = shape(size)
                yield SceneConfig(
                    n_points=n,
                    n_lines=m,
                    sigma_px=sigma_px,
                    seed=_cell_seed(seed, cell),
                )
                cell += 1


def variance_experiment(
    sizes=DEFAULT_GRID, sigmas_px=DEFAULT_SIGMAS_PX, k_trials=200, seed=0,
    modes=("point", "line", "combined"),
) -> list[BenchRow]:
    """Noise-variance consistency sweep; the sigma2_mse column is the payload."""
    rows = []
    for cfg in _grid_configs(sizes, sigmas_px, seed, modes):
        rows.extend(run_monte_carlo(cfg, k_trials, variants=(VARIANT_BE,)))
    return rows


def bias_experiment(
    sizes=DEFAULT_GRID, sigmas_px=DEFAULT_SIGMAS_PX, k_trials=200, seed=0,
    modes=("point", "line", "combined"),
) -> list[BenchRow]:
    """Scalar-bias comparison of the first step with and without elimination."""
    rows = []
    for cfg in _grid_configs(sizes, sigmas_px, seed, modes):
        rows.extend(
            run_monte_carlo(cfg, k_trials, variants=(VARIANT_NO_BE, VARIANT_BE))
        )
    return rows


def mse_experiment(
    sizes=DEFAULT_GRID, sigmas_px=DEFAULT_SIGMAS_PX, k_trials=200, seed=0,
    modes=("point", "line", "combined"),
) -> list[BenchRow]:
    """MSE-versus-CRB sweep for the first step and the two-step estimator."""
    rows = []
    for cfg in _grid_configs(sizes, sigmas_px, seed, modes):
        rows.extend(
            run_monte_carlo(
                cfg, k_trials, variants=(VARIANT_NO_BE, VARIANT_BE, VARIANT_TWO_STEP)
            )
        )
    return rows


def runtime_experiment(
    sizes=DEFAULT_RUNTIME_SIZES, sigma_px=5.0, seed=0, runs=5
) -> list[BenchRow]:
    """Solve-time scaling on combined scenes (n = m = size)."""
    base = SceneConfig(n_points=1, n_lines=1, sigma_px=sigma_px, seed=seed)
    runtime_rows, _ = runtime_scaling(base, sizes, runs=runs)
    nan = float("nan")
    return [
        BenchRow(
            size_n=r.size,
            size_m=r.size,
            sigma_px=sigma_px,
            variant=VARIANT_TWO_STEP,
            mse_r=nan,
            mse_t=nan,
            bias_r=nan,
            bias_t=nan,
            sigma2_mse=nan,
            crb_trace=nan,
            time_s=r.median_seconds,
            failures=0,
        )
        for r in runtime_rows
    ]


def write_rows_csv(rows, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([getattr(row, col) for col in CSV_COLUMNS])


def write_rows_json(rows, meta: dict, path) -> None:
    import json

    payload = {
        "config": meta,
        "rows": [{col: getattr(row, col) for col in CSV_COLUMNS} for row in rows],
    }

    def _default(obj):
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        raise TypeError(f"not JSON serializable: {type(obj)!r}")

    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=_default)
