import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from conftest import random_chain, random_joints
from deskhockey.kinematics import (
    CartesianDisplacement,
    JointState,
    KinematicChain,
    Transform,
    chain_from_dict,
    default_chain,
    forward_kinematics,
    jacobian,
    load_chain,
    planar_chain,
    pseudo_inverse,
    resolve_action,
    tip_and_jacobian,
)
from deskhockey.errors import ConfigError


def fk_transform_product_oracle(chain: KinematicChain, positions) -> np.ndarray:
    """Independent FK oracle: explicit 4x4 homogeneous transform chain product."""
    tf = np.eye(4)
    for i in range(chain.joint_count):
        origin = np.eye(4)
        origin[:3, :3] = chain.origins[i].rotation
        origin[:3, 3] = chain.origins[i].translation
        joint = np.eye(4)
        joint[:3, :3] = Rotation.from_rotvec(chain.axes[i] * positions[i]).as_matrix()
        tf = tf @ origin @ joint
    mallet = np.eye(4)
    mallet[:3, :3] = chain.mallet_offset.rotation
    mallet[:3, 3] = chain.mallet_offset.translation
    return (tf @ mallet)[:3, 3]


def jacobian_fd_oracle(chain: KinematicChain, positions, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of forward kinematics."""
    n = chain.joint_count
    jac = np.empty((3, n))
    for i in range(n):
        plus = np.array(positions, dtype=float)
        minus = plus.copy()
        plus[i] += h
        minus[i] -= h
        fp = forward_kinematics(chain, JointState(plus, np.zeros(n)))
        fm = forward_kinematics(chain, JointState(minus, np.zeros(n)))
        jac[:, i] = (fp - fm) / (2.0 * h)
    return jac


def damped_svd_oracle(jac: np.ndarray, floor: float) -> np.ndarray:
    """Explicit SVD damping formula the implementation must match."""
    u, s, vt = np.linalg.svd(jac, full_matrices=False)
    inv_s = np.where(s >= floor, 1.0 / np.maximum(s, floor), s / floor**2)
    return (vt.T * inv_s) @ u.T


class TestForwardKinematics:
    def test_straight_planar_chain(self):
        chain = planar_chain([1.0, 1.0])
        tip = forward_kinematics(chain, JointState.zeros(2))
        np.testing.assert_allclose(tip, [2.0, 0.0, 0.0], atol=1e-15)

    def test_quarter_turn(self):
        chain = planar_chain([1.0])
        tip = forward_kinematics(chain, JointState(np.array([math.pi / 2]), np.zeros(1)))
        np.testing.assert_allclose(tip, [0.0, 1.0, 0.0], atol=1e-12)

    def test_matches_transform_product_oracle_on_default_chain(self, rng):
        chain = default_chain()
        for _ in range(50):
            q = random_joints(rng, chain)
            tip = forward_kinematics(chain, JointState(q, np.zeros(7)))
            np.testing.assert_allclose(tip, fk_transform_product_oracle(chain, q), atol=1e-9)

    def test_matches_transform_product_oracle_on_random_chains(self, rng):
        for _ in range(40):
            chain = random_chain(rng)
            q = random_joints(rng, chain)
            tip = forward_kinematics(chain, JointState(q, np.zeros(chain.joint_count)))
            np.testing.assert_allclose(tip, fk_transform_product_oracle(chain, q), atol=1e-9)

    def test_dimension_mismatch_rejected(self):
        chain = planar_chain([1.0, 1.0])
        with pytest.raises(ValueError, match="joint state"):
            forward_kinematics(chain, JointState.zeros(3))


class TestJacobian:
    def test_single_revolute_tangential_column(self):
        chain = planar_chain([1.0])
        jac = jacobian(chain, JointState.zeros(1))
        np.testing.assert_allclose(jac[:, 0], [0.0, 1.0, 0.0], atol=1e-15)

    def test_axis_through_mallet_gives_zero_column(self):
        # Mallet sits on the last joint's axis: zero moment arm.
        chain = KinematicChain(
            axes=np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]),
            origins=(
                Transform.from_xyz_rpy([0, 0, 0], [0, 0, 0]),
                Transform.from_xyz_rpy([1.0, 0, 0], [0, 0, 0]),
            ),
            joint_pos_limits=np.tile([-3.0, 3.0], (2, 1)),
            joint_vel_limits=np.array([1.0, 1.0]),
            mallet_offset=Transform.from_xyz_rpy([0.0, 0.0, 0.5], [0, 0, 0]),
        )
        jac = jacobian(chain, JointState(np.array([0.3, -0.7]), np.zeros(2)))
        np.testing.assert_allclose(jac[:, 1], 0.0, atol=1e-12)

    def test_matches_finite_differences(self, rng):
        for _ in range(60):
            chain = random_chain(rng)
            q = random_joints(rng, chain)
            jac = jacobian(chain, JointState(q, np.zeros(chain.joint_count)))
            fd = jacobian_fd_oracle(chain, q)
            assert np.max(np.abs(jac - fd)) <= 1e-5

    def test_tip_and_jacobian_consistent(self, rng):
        chain = default_chain()
        q = random_joints(rng, chain)
        js = JointState(q, np.zeros(7))
        tip, jac = tip_and_jacobian(chain, js)
        np.testing.assert_array_equal(tip, forward_kinematics(chain, js))
        np.testing.assert_array_equal(jac, jacobian(chain, js))


class TestPseudoInverse:
    def test_identity_block(self):
        jac = np.hstack([np.eye(3), np.zeros((3, 4))])
        pinv = pseudo_inverse(jac)
        np.testing.assert_allclose(pinv, jac.T, atol=1e-12)

    def test_moore_penrose_conditions_full_rank(self, rng):
        for _ in range(50):
            jac = rng.normal(size=(3, 7))
            pinv = pseudo_inverse(jac)
            assert np.max(np.abs(jac @ pinv @ jac - jac)) <= 1e-8
            assert np.max(np.abs(pinv @ jac @ pinv - pinv)) <= 1e-8
            np.testing.assert_allclose((jac @ pinv).T, jac @ pinv, atol=1e-8)
            np.testing.assert_allclose((pinv @ jac).T, pinv @ jac, atol=1e-8)

    def test_rank_deficient_bounded_by_damping_floor(self, rng):
        floor = 1e-4
        col = rng.normal(size=3)
        jac = np.zeros((3, 7))
        jac[:, 0] = col
        jac[:, 1] = col  # duplicated columns, rest zero
        pinv = pseudo_inverse(jac, sv_floor=floor)
        assert np.all(np.isfinite(pinv))
        assert np.linalg.norm(pinv, 2) <= 1.0 / floor + 1e-9
        np.testing.assert_allclose(pinv, damped_svd_oracle(jac, floor), atol=1e-10)

    def test_matches_svd_damping_oracle_near_singular(self, rng):
        floor = 1e-4
        for scale in (1.0, 1e-3, 1e-5, 0.0):
            base = rng.normal(size=(3, 7))
            u, s, vt = np.linalg.svd(base, full_matrices=False)
            s[2] = scale  # force the smallest singular value
            jac = (u * s) @ vt
            pinv = pseudo_inverse(jac, sv_floor=floor)
            np.testing.assert_allclose(pinv, damped_svd_oracle(jac, floor), atol=1e-9)

    def test_tall_matrix(self, rng):
        jac = rng.normal(size=(3, 2))
        pinv = pseudo_inverse(jac)
        assert pinv.shape == (2, 3)
        assert np.max(np.abs(jac @ pinv @ jac - jac)) <= 1e-8

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            pseudo_inverse(np.array([[np.nan, 0.0, 0.0]]))


class TestResolveAction:
    def test_zero_displacement(self):
        chain = default_chain()
        js = JointState(chain.home_joints.copy(), np.zeros(7))
        cmd = resolve_action(chain, js, CartesianDisplacement(0.0, 0.0, 0.0), 0.02)
        np.testing.assert_array_equal(cmd.velocities, np.zeros(7))
        np.testing.assert_array_equal(cmd.positions, js.positions)

    def test_clipping_forces_velocity_to_limit(self):
        # Single joint, vel limit 1 rad/s, cycle 0.02 s: an unclipped demand of
        # 0.05 rad must clip to 0.02 rad, i.e. a velocity of exactly 1 rad/s.
        chain = planar_chain([1.0], vel_limit=1.0)
        js = JointState.zeros(1)
        # J = (0, 1, 0): demand dy giving delta = 0.05 / weight.
        cmd = resolve_action(chain, js, CartesianDisplacement(0.0, 0.2, 0.0), 0.02)
        assert cmd.velocities[0] == pytest.approx(1.0, abs=1e-12)
        assert cmd.positions[0] == pytest.approx(0.02, abs=1e-12)

    def test_velocity_limits_never_exceeded(self, rng):
        for _ in range(200):
            chain = random_chain(rng)
            q = random_joints(rng, chain)
            js = JointState(q, np.zeros(chain.joint_count))
            disp = CartesianDisplacement(*rng.uniform(-2.0, 2.0, size=3))
            cmd = resolve_action(chain, js, disp, 0.02)
            assert np.all(np.abs(cmd.velocities) <= chain.joint_vel_limits + 1e-12)
            assert np.all(cmd.positions >= chain.joint_pos_limits[:, 0])
            assert np.all(cmd.positions <= chain.joint_pos_limits[:, 1])

    def test_direction_preserving_clip_option(self, rng):
        chain = random_chain(rng)
        js = JointState(random_joints(rng, chain), np.zeros(chain.joint_count))
        disp = CartesianDisplacement(1.5, -1.0, 0.5)
        cmd = resolve_action(chain, js, disp, 0.02, direction_preserving_clip=True)
        assert np.all(np.abs(cmd.velocities) <= chain.joint_vel_limits + 1e-12)
        raw = resolve_action(chain, js, disp, 1e9).velocities  # effectively unclipped
        norm_raw = np.linalg.norm(raw)
        if norm_raw > 1e-9:
            cos = np.dot(cmd.velocities, raw) / (np.linalg.norm(cmd.velocities) * norm_raw + 1e-300)
            assert cos >= 1.0 - 1e-9 or np.linalg.norm(cmd.velocities) < 1e-12

    def test_mallet_moves_along_weighted_direction(self):
        chain = planar_chain([0.8, 0.6])
        js = JointState(np.array([0.4, 0.5]), np.zeros(2))
        before = forward_kinematics(chain, js)
        disp = CartesianDisplacement(0.004, 0.003, 0.0)
        cmd = resolve_action(chain, js, disp, 0.02)
        after = forward_kinematics(chain, JointState(cmd.positions, np.zeros(2)))
        moved = (after - before)[:2]
        requested = np.array([disp.dx, disp.dy])
        angle = math.degrees(
            math.acos(
                np.clip(
                    np.dot(moved, requested) / (np.linalg.norm(moved) * np.linalg.norm(requested)),
                    -1.0,
                    1.0,
                )
            )
        )
        assert angle <= 2.0

    def test_iterative_convergence_to_reachable_target(self):
        chain = default_chain()
        js = JointState(chain.home_joints.copy(), np.zeros(7))
        start = forward_kinematics(chain, js)
        target = start + np.array([0.07, 0.05, 0.0])  # in-plane, within 0.1 m
        errors = [np.linalg.norm(target - start)]
        for _ in range(10):
            tip = forward_kinematics(chain, js)
            disp = CartesianDisplacement(*(target - tip))
            cmd = resolve_action(chain, js, disp, 0.02)
            js = JointState(cmd.positions, np.zeros(7))
            errors.append(np.linalg.norm(target - forward_kinematics(chain, js)))
        assert all(b < a for a, b in zip(errors, errors[1:]))

    def test_non_finite_displacement_rejected(self):
        chain = planar_chain([1.0])
        with pytest.raises(ValueError):
            resolve_action(chain, JointState.zeros(1), CartesianDisplacement(np.inf, 0, 0), 0.02)

    def test_non_positive_cycle_rejected(self):
        chain = planar_chain([1.0])
        with pytest.raises(ValueError):
            resolve_action(chain, JointState.zeros(1), CartesianDisplacement(0, 0, 0), 0.0)


class TestChainConfig:
    def test_default_chain_loads(self):
        chain = default_chain()
        assert chain.joint_count == 7
        assert chain.home_joints is not None
        tip = forward_kinematics(chain, JointState(chain.home_joints.copy(), np.zeros(7)))
        assert tip[2] == pytest.approx(0.10, abs=1e-6)

    def test_unsupported_version_rejected(self):
        with pytest.raises(ConfigError, match="format_version"):
            chain_from_dict({"format_version": 99, "joints": []})

    def test_missing_keys_rejected(self):
        with pytest.raises(ConfigError):
            chain_from_dict(
                {"format_version": 1, "joints": [{"axis": [0, 0, 1]}], "mallet_offset": None}
            )

    def test_invalid_limits_rejected(self):
        with pytest.raises(ConfigError, match="min < max"):
            KinematicChain(
                axes=np.array([[0.0, 0.0, 1.0]]),
                origins=(Transform.identity(),),
                joint_pos_limits=np.array([[1.0, -1.0]]),
                joint_vel_limits=np.array([1.0]),
                mallet_offset=Transform.identity(),
            )

    def test_roundtrip_through_file(self, tmp_path):
        import yaml

        from importlib import resources

        text = resources.files("deskhockey").joinpath("configs/chain_iiwa_like.yaml").read_text()
        path = tmp_path / "chain.yaml"
        path.write_text(text)
        chain = load_chain(path)
        ref = default_chain()
        np.testing.assert_array_equal(chain.axes, ref.axes)
        np.testing.assert_array_equal(chain.joint_vel_limits, ref.joint_vel_limits)
