"""Shared test configuration.

Single-threaded BLAS keeps the small/medium factorizations deterministic in
ordering and makes the runtime-scaling measurements meaningful on few-core
machines; it must be set before numpy loads.
"""

import os

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np
import pytest

from pnpl.bench import SceneConfig, add_noise, generate_scene


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_scene(n_points, n_lines, sigma_px, seed=0, scene_rng=None, **kwargs):
    """Generate one noisy scene; returns (points, lines, true_pose, cfg)."""
    cfg = SceneConfig(
        n_points=n_points, n_lines=n_lines, sigma_px=sigma_px, seed=seed, **kwargs
    )
    gen = scene_rng if scene_rng is not None else np.random.default_rng((seed, 0))
    points, lines, pose = generate_scene(cfg, gen)
    if sigma_px > 0:
        points = add_noise(points, sigma_px, cfg.intrinsics, gen)
        lines = add_noise(lines, sigma_px, cfg.intrinsics, gen)
    return points, lines, pose, cfg


def random_rotation(gen):
    """Uniform-ish random rotation from QR of a Gaussian matrix."""
    q, r = np.linalg.qr(gen.standard_normal((3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
