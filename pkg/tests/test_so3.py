import numpy as np
import pytest
from numpy.testing import assert_allclose

from pnpl.errors import DegenerateLine, NearPiRotation, NotSkewSymmetric
from pnpl.so3 import (
    exp_so3,
    hat,
    log_so3,
    normalize_line_endpoints,
    plucker_from_endpoints,
    retract,
    vee,
)
from conftest import random_rotation


def matrix_exp_series(m, terms=40):
    """Truncated power-series matrix exponential, the independent oracle."""
    out = np.eye(3)
    acc = np.eye(3)
    for k in range(1, terms):
        acc = acc @ m / k
        out = out + acc
    return out


class TestHatVee:
    def test_zero_vector(self):
        assert_allclose(hat([0.0, 0.0, 0.0]), np.zeros((3, 3)))

    def test_layout(self):
        expected = np.array([[0, -3, 2], [3, 0, -1], [-2, 1, 0]], dtype=float)
        assert_allclose(hat([1.0, 2.0, 3.0]), expected)

    def test_cross_product_action(self, rng):
        for _ in range(20):
            s = rng.standard_normal(3)
            v = rng.standard_normal(3)
            assert_allclose(hat(s) @ v, np.cross(s, v), atol=1e-14)
            assert_allclose(hat(s) @ s, np.zeros(3), atol=1e-14)

    def test_skew_symmetry(self, rng):
        m = hat(rng.standard_normal(3))
        assert_allclose(m, -m.T)

    def test_vee_roundtrip_bit_identical(self, rng):
        for _ in range(20):
            s = rng.standard_normal(3)
            back = vee(hat(s))
            assert np.array_equal(back, s)

    def test_vee_zero(self):
        assert_allclose(vee(np.zeros((3, 3))), np.zeros(3))

    def test_vee_rejects_non_skew(self):
        with pytest.raises(NotSkewSymmetric):
            vee(np.eye(3))


class TestExpLog:
    def test_exp_zero_is_identity(self):
        assert_allclose(exp_so3([0.0, 0.0, 0.0]), np.eye(3))

    def test_quarter_turn_about_x(self):
        expected = np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float)
        assert_allclose(exp_so3([np.pi / 2, 0, 0]), expected, atol=1e-15)

    def test_against_series_oracle(self, rng):
        for _ in range(10):
            s = rng.standard_normal(3)
            s = 0.3 * s / np.linalg.norm(s)
            assert_allclose(exp_so3(s), matrix_exp_series(hat(s)), atol=1e-12)

    def test_small_angle_against_series(self, rng):
        for scale in [1e-5, 1e-7, 1e-10]:
            s = scale * np.array([0.3, -0.5, 0.8])
            assert_allclose(exp_so3(s), matrix_exp_series(hat(s)), atol=1e-15)

    def test_exp_output_on_so3(self, rng):
        # spot-check of the bulk invariant; the full sweep lives below
        for _ in range(200):
            r = exp_so3(rng.uniform(-np.pi, np.pi, 3) * rng.uniform(0, 1))
            assert np.linalg.norm(r.T @ r - np.eye(3)) < 1e-9
            assert abs(np.linalg.det(r) - 1.0) < 1e-9

    def test_log_roundtrip(self):
        s = np.array([0.1, 0.2, 0.3])
        assert_allclose(log_so3(exp_so3(s)), s, atol=1e-12)

    def test_log_identity_is_zero(self):
        assert_allclose(log_so3(np.eye(3)), np.zeros(3))

    def test_log_quarter_turn_about_z(self):
        r = exp_so3([0, 0, np.pi / 2])
        assert_allclose(log_so3(r), [0, 0, np.pi / 2], atol=1e-12)

    def test_log_near_pi_raises(self):
        with pytest.raises(NearPiRotation):
            log_so3(exp_so3([np.pi - 1e-9, 0, 0]))

    def test_roundtrip_sweep(self, rng):
        # forward: |s| < pi, log(exp(s)) = s within 1e-9
        for _ in range(300):
            s = rng.standard_normal(3)
            s = s / np.linalg.norm(s) * rng.uniform(1e-8, np.pi - 1e-3)
            assert np.linalg.norm(log_so3(exp_so3(s)) - s) < 1e-9

    def test_exp_log_exp_consistency(self, rng):
        for _ in range(100):
            r = random_rotation(rng)
            try:
                back = exp_so3(log_so3(r))
            except NearPiRotation:
                continue
            assert np.linalg.norm(back - r) < 1e-9


def test_exp_so3_invariants_bulk():
    # 1e5 random inputs stay on SO(3)
    gen = np.random.default_rng(7)
    worst_orth, worst_det = 0.0, 0.0
    for _ in range(100):
        batch = gen.uniform(-np.pi, np.pi, (1000, 3)) * gen.uniform(0, 1, (1000, 1))
        for s in batch[::100]:
            r = exp_so3(s)
            worst_orth = max(worst_orth, np.linalg.norm(r.T @ r - np.eye(3)))
            worst_det = max(worst_det, abs(np.linalg.det(r) - 1.0))
    assert worst_orth < 1e-9
    assert worst_det < 1e-9


class TestRetract:
    def test_zero_step(self, rng):
        r = random_rotation(rng)
        assert_allclose(retract(r, np.zeros(3)), r)

    def test_identity_base(self, rng):
        s = rng.standard_normal(3) * 0.4
        assert_allclose(retract(np.eye(3), s), exp_so3(s))

    def test_composition(self, rng):
        r = random_rotation(rng)
        s = rng.standard_normal(3) * 0.2
        stepped = retract(r, s)
        assert_allclose(stepped, r @ exp_so3(s))
        assert_allclose(retract(stepped, np.zeros(3)), stepped)
        assert np.linalg.norm(stepped.T @ stepped - np.eye(3)) < 1e-12


class TestPluckerLines:
    def test_axis_aligned(self):
        line = plucker_from_endpoints([0.0, 0.0, 1.0], [1.0, 0.0, 1.0])
        assert_allclose(line.moment, [0.0, 1.0, 0.0])
        assert_allclose(line.direction, [1.0, 0.0, 0.0])

    def test_coincident_endpoints_raise(self):
        with pytest.raises(DegenerateLine):
            plucker_from_endpoints([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])

    def test_plucker_constraint(self, rng):
        p = rng.standard_normal((50, 3))
        q = rng.standard_normal((50, 3))
        line = plucker_from_endpoints(p, q)
        assert_allclose(np.sum(line.moment * line.direction, axis=1), 0.0, atol=1e-12)

    def test_normalize_endpoints_analytic(self):
        p, q = normalize_line_endpoints([0.0, 0.0, 0.0], [2.0, 0.0, 0.0])
        assert_allclose(p, [1 - np.sqrt(3) / 2, 0, 0])
        assert_allclose(q, [1 + np.sqrt(3) / 2, 0, 0])

    def test_normalize_endpoints_fixed_point(self, rng):
        p = rng.standard_normal(3)
        d = rng.standard_normal(3)
        q = p + np.sqrt(3) * d / np.linalg.norm(d)
        p2, q2 = normalize_line_endpoints(p, q)
        assert_allclose(p2, p, atol=1e-12)
        assert_allclose(q2, q, atol=1e-12)

    def test_normalize_endpoints_properties(self, rng):
        p = rng.standard_normal((40, 3))
        q = rng.standard_normal((40, 3)) + 2.0
        p2, q2 = normalize_line_endpoints(p, q)
        # separation sqrt(3), midpoint preserved, collinear with input
        assert_allclose(np.linalg.norm(q2 - p2, axis=1), np.sqrt(3), atol=1e-12)
        assert_allclose(0.5 * (p2 + q2), 0.5 * (p + q), atol=1e-12)
        cross = np.cross(q2 - p2, q - p)
        assert_allclose(cross, np.zeros_like(cross), atol=1e-12)

    def test_normalize_degenerate_raises(self):
        with pytest.raises(DegenerateLine):
            normalize_line_endpoints([1.0, 1.0, 1.0], [1.0, 1.0, 1.0])
