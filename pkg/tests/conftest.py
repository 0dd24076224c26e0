import numpy as np
import pytest

from deskhockey.kinematics import KinematicChain, Transform


def random_chain(rng: np.random.Generator, max_joints: int = 8) -> KinematicChain:
    """Random revolute chain mixing axis-aligned and skew joints."""
    n = int(rng.integers(2, max_joints + 1))
    axes = []
    origins = []
    for _ in range(n):
        roll = rng.random()
        if roll < 0.6:
            axis = np.zeros(3)
            axis[rng.integers(3)] = rng.choice([-1.0, 1.0])
        else:
            axis = rng.normal(size=3)
            while np.linalg.norm(axis) < 1e-6:
                axis = rng.normal(size=3)
        axes.append(axis)
        xyz = rng.uniform(-0.4, 0.4, size=3)
        rpy = rng.uniform(-np.pi, np.pi, size=3) if rng.random() < 0.5 else np.zeros(3)
        origins.append(Transform.from_xyz_rpy(xyz, rpy))
    return KinematicChain(
        axes=np.array(axes),
        origins=tuple(origins),
        joint_pos_limits=np.tile([-3.0, 3.0], (n, 1)),
        joint_vel_limits=rng.uniform(0.5, 3.0, size=n),
        mallet_offset=Transform.from_xyz_rpy(rng.uniform(-0.2, 0.2, size=3), [0.0, 0.0, 0.0]),
        name="random",
    )


def random_joints(rng: np.random.Generator, chain: KinematicChain) -> np.ndarray:
    lo = chain.joint_pos_limits[:, 0]
    hi = chain.joint_pos_limits[:, 1]
    return rng.uniform(lo, hi)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260810)
