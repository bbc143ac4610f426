import numpy as np
import pytest
from numpy.testing import assert_allclose

from pnpl.camera import (
    PointCorrespondences,
    line_residual,
    point_residual,
    project_line,
)
from pnpl.errors import InsufficientCorrespondences, SingularNormalEquations
from pnpl.refine import (
    _assemble,
    gn_refine,
    gn_step,
    line_jacobian_blocks,
    point_jacobian_blocks,
    psi_at_zero,
)
from pnpl.so3 import Pose, exp_so3, hat, is_rotation
from conftest import make_scene, random_rotation

FD_STEP = 1e-6


def lifted_pose(pose0, s, t):
    return Pose(pose0.rotation @ exp_so3(s), t)


def fd_jacobian(func, dim=6, h=FD_STEP):
    """Central finite differences of func(s, t) stacked over the 6 params."""
    cols = []
    for k in range(dim):
        step = np.zeros(dim)
        step[k] = h
        plus = func(step[:3], step[3:])
        minus = func(-step[:3], -step[3:])
        cols.append((plus - minus) / (2 * h))
    return np.stack(cols, axis=-1)


def rel_error(analytic, numeric):
    scale = max(np.linalg.norm(numeric), 1e-12)
    return np.linalg.norm(analytic - numeric) / scale


class TestPsi:
    def test_columns_are_hat_basis(self):
        psi = psi_at_zero()
        for k, e in enumerate(np.eye(3)):
            assert_allclose(psi[:, k], hat(e).flatten(order="F"))
        assert set(np.unique(psi)) <= {-1.0, 0.0, 1.0}

    def test_linearity_of_hat(self, rng):
        psi = psi_at_zero()
        for _ in range(10):
            s = rng.standard_normal(3)
            assert_allclose(psi @ s, hat(s).flatten(order="F"))

    def test_finite_difference(self):
        psi = psi_at_zero()
        h = FD_STEP
        for k in range(3):
            step = np.zeros(3)
            step[k] = h
            col = (exp_so3(step) - exp_so3(-step)).flatten(order="F") / (2 * h)
            assert np.max(np.abs(psi[:, k] - col)) < 1e-7


class TestPointJacobian:
    def test_matches_finite_differences(self, rng):
        points, _, true_pose, _ = make_scene(8, 0, sigma_px=2.0, seed=1)
        for trial in range(25):
            pose = Pose(
                true_pose.rotation @ exp_so3(0.05 * rng.standard_normal(3)),
                true_pose.translation + 0.05 * rng.standard_normal(3),
            )
            blocks = point_jacobian_blocks(pose, points)

            def residual(s, t_step):
                return point_residual(
                    lifted_pose(pose, s, pose.translation + t_step), points
                )

            numeric = fd_jacobian(residual)
            assert rel_error(blocks, numeric.reshape(blocks.shape)) < 1e-5

    def test_on_axis_translation_block(self):
        z = 4.0
        points = PointCorrespondences(
            world=np.array([[0.0, 0.0, z]]), image=np.zeros((1, 2))
        )
        pose = Pose(np.eye(3), np.zeros(3))
        block = point_jacobian_blocks(pose, points)[0]
        expected_t = np.array([[-1 / z, 0, 0], [0, -1 / z, 0]])
        assert_allclose(block[:, 3:], expected_t, atol=1e-12)

    def test_depth_scaling(self):
        pose = Pose(np.eye(3), np.zeros(3))
        shallow = PointCorrespondences(np.array([[0.0, 0.0, 2.0]]), np.zeros((1, 2)))
        deep = PointCorrespondences(np.array([[0.0, 0.0, 4.0]]), np.zeros((1, 2)))
        b1 = point_jacobian_blocks(pose, shallow)[0][:, 3:]
        b2 = point_jacobian_blocks(pose, deep)[0][:, 3:]
        assert_allclose(b2, b1 / 2.0, atol=1e-12)


class TestLineJacobian:
    def whitened(self, pose0, lines, sigma2):
        def fn(s, t_step):
            pose = lifted_pose(pose0, s, pose0.translation + t_step)
            l_bar = project_line(pose, lines.world)
            sigma_j = np.sqrt(sigma2) * np.linalg.norm(l_bar[:, :2], axis=1)
            return line_residual(pose, lines) / sigma_j[:, None]

        return fn

    def test_matches_finite_differences(self, rng):
        _, lines, true_pose, _ = make_scene(0, 9, sigma_px=2.0, seed=2)
        sigma2 = 1.1e-4
        for trial in range(25):
            pose = Pose(
                true_pose.rotation @ exp_so3(0.05 * rng.standard_normal(3)),
                true_pose.translation + 0.05 * rng.standard_normal(3),
            )
            blocks = line_jacobian_blocks(pose, lines, sigma2)
            numeric = fd_jacobian(self.whitened(pose, lines, sigma2))
            assert rel_error(blocks, numeric.reshape(blocks.shape)) < 1e-5

    def test_weight_term_vanishes_at_truth(self):
        # noise-free residual is zero, so the diag(r) term drops out and the
        # block is just the whitened residual derivative
        _, lines, pose, _ = make_scene(0, 7, sigma_px=0.0, seed=3)
        sigma2 = 4e-5
        blocks = line_jacobian_blocks(pose, lines, sigma2)
        numeric = fd_jacobian(self.whitened(pose, lines, sigma2))
        assert rel_error(blocks, numeric.reshape(blocks.shape)) < 1e-6

    def test_dropping_weight_term_breaks_fd(self, rng):
        # regression guard: without the d(1/sigma_j) term the Jacobian is
        # measurably wrong away from the optimum
        _, lines, true_pose, _ = make_scene(0, 9, sigma_px=4.0, seed=4)
        sigma2 = 2e-4
        pose = Pose(
            true_pose.rotation @ exp_so3([0.03, -0.02, 0.04]),
            true_pose.translation + np.array([0.05, 0.02, -0.04]),
        )
        full = line_jacobian_blocks(pose, lines, sigma2)
        l_bar = project_line(pose, lines.world)
        sigma_j = np.sqrt(sigma2) * np.linalg.norm(l_bar[:, :2], axis=1)
        numeric = fd_jacobian(self.whitened(pose, lines, sigma2))
        numeric = numeric.reshape(full.shape)
        assert rel_error(full, numeric) < 1e-5

        # ablated: recompute as (1/sigma_j) * d(r)/d(s,t) only
        def raw_residual(s, t_step):
            return line_residual(
                lifted_pose(pose, s, pose.translation + t_step), lines
            )

        raw_jac = fd_jacobian(raw_residual).reshape(full.shape)
        ablated = raw_jac / sigma_j[:, None, None]
        assert rel_error(ablated, numeric) > 1e-3


class TestGnStep:
    def test_fixed_point_on_noise_free_data(self):
        points, lines, pose, _ = make_scene(40, 40, sigma_px=0.0, seed=5)
        stepped = gn_step(pose, 1e-6, points, lines)
        assert np.linalg.norm(stepped.rotation - pose.rotation) < 1e-10
        assert np.linalg.norm(stepped.translation - pose.translation) < 1e-10

    def test_local_contraction(self):
        points, lines, pose, _ = make_scene(60, 60, sigma_px=0.0, seed=6)
        for k in range(5):
            gen = np.random.default_rng(60 + k)
            ds = gen.standard_normal(3)
            ds *= 1e-3 / np.linalg.norm(ds)
            start = Pose(pose.rotation @ exp_so3(ds), pose.translation)
            stepped = gn_step(start, 1e-6, points, lines)
            err0 = np.linalg.norm(start.rotation - pose.rotation) + np.linalg.norm(
                start.translation - pose.translation
            )
            err1 = np.linalg.norm(stepped.rotation - pose.rotation) + np.linalg.norm(
                stepped.translation - pose.translation
            )
            assert err1 <= err0 / 10.0

    def test_output_on_so3(self):
        points, lines, _, _ = make_scene(30, 30, sigma_px=8.0, seed=7)
        from pnpl.solver import consistent_estimate

        rep = consistent_estimate(points, lines)
        stepped = gn_step(rep.first_step, rep.sigma2_hat, points, lines)
        assert is_rotation(stepped.rotation, tol=1e-9)

    def test_residual_orthogonality(self):
        # the step is the exact solution of the linearized problem
        points, lines, _, _ = make_scene(50, 50, sigma_px=5.0, seed=8)
        from pnpl.solver import consistent_estimate

        rep = consistent_estimate(points, lines)
        aug = _assemble(rep.first_step, rep.sigma2_hat, points, lines, None)
        jac, res = aug[:, :6], aug[:, 6]
        delta = np.linalg.lstsq(jac, -res, rcond=None)[0]
        grad_after = jac.T @ (res + jac @ delta)
        assert np.linalg.norm(grad_after) <= 1e-8 * np.linalg.norm(jac.T @ res)

    def test_one_step_close_to_converged(self):
        points, _, _, _ = make_scene(1000, 0, sigma_px=5.0, seed=9)
        from pnpl.camera import LineCorrespondences
        from pnpl.solver import consistent_estimate

        rep = consistent_estimate(points, None)
        lines = LineCorrespondences.empty()
        one = gn_refine(rep.first_step, rep.sigma2_hat, points, lines, iterations=1)
        full = gn_refine(
            rep.first_step, rep.sigma2_hat, points, lines, iterations=50, tol=1e-14
        )
        assert np.linalg.norm(one.rotation - full.rotation) < 1e-3
        assert np.linalg.norm(one.translation - full.translation) < 1e-3

    def test_too_few_correspondences(self):
        points, _, pose, _ = make_scene(2, 0, sigma_px=0.0, seed=10)
        from pnpl.camera import LineCorrespondences

        with pytest.raises(InsufficientCorrespondences):
            gn_step(pose, 1e-6, points, LineCorrespondences.empty())

    def test_degenerate_geometry_raises(self):
        # three copies of the same point leave the 6-parameter problem
        # underdetermined
        from pnpl.camera import LineCorrespondences

        world = np.tile([[0.1, -0.2, 5.0]], (4, 1))
        image = np.tile([[0.02, -0.04]], (4, 1))
        points = PointCorrespondences(world=world, image=image)
        pose = Pose(np.eye(3), np.zeros(3))
        with pytest.raises(SingularNormalEquations):
            gn_step(pose, 1e-6, points, LineCorrespondences.empty())

    def test_zero_sigma_falls_back_to_unit_scale(self):
        points, lines, pose, _ = make_scene(20, 20, sigma_px=0.0, seed=11)
        stepped = gn_step(pose, 0.0, points, lines)
        assert np.linalg.norm(stepped.translation - pose.translation) < 1e-10

    def test_step_invariant_to_global_sigma(self):
        # the shared noise scale cancels; only point/line relative weights
        # matter
        points, lines, _, _ = make_scene(25, 25, sigma_px=6.0, seed=12)
        from pnpl.solver import consistent_estimate

        rep = consistent_estimate(points, lines)
        a = gn_step(rep.first_step, 1e-4, points, lines)
        b = gn_step(rep.first_step, 9e-4, points, lines)
        assert_allclose(a.rotation, b.rotation, atol=1e-12)
        assert_allclose(a.translation, b.translation, atol=1e-12)
