"""Serial-chain kinematics for the mallet arm.

Forward kinematics and the positional (3 x n) Jacobian for revolute chains,
a damped pseudo-inverse, and the mapping from Cartesian mallet displacements
to clipped joint commands. All functions are pure; chains are immutable.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
import yaml

from .errors import ConfigError

CHAIN_FORMAT_VERSION = 1

# Cartesian displacement weights: the z component dominates so the mallet is
# pulled back onto the table plane faster than it moves across it.
DEFAULT_CARTESIAN_WEIGHTS = (0.25, 0.25, 0.5)

# Singular values below this floor are damped instead of inverted.
DEFAULT_SV_FLOOR = 1e-4


def rpy_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Rotation matrix from fixed-axis roll/pitch/yaw angles (Rz @ Ry @ Rx)."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation about a unit axis by `angle` (Rodrigues form)."""
    x, y, z = axis
    c = math.cos(angle)
    s = math.sin(angle)
    t = 1.0 - c
    return np.array(
        [
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ]
    )


@dataclass(frozen=True)
class Transform:
    """Rigid transform: rotation followed by translation."""

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    @classmethod
    def from_xyz_rpy(cls, xyz, rpy) -> "Transform":
        return cls(rpy_matrix(*rpy), np.asarray(xyz, dtype=float))

    @classmethod
    def identity(cls) -> "Transform":
        return cls(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class KinematicChain:
    """A revolute serial chain with a mallet rigidly attached after the last joint.

    Per-joint parameters follow the usual link convention: `origins[i]` is the
    fixed transform from the frame after joint i-1 to the frame of joint i,
    and `axes[i]` is the unit rotation axis of joint i in that frame.
    """

    axes: np.ndarray  # (n, 3) unit vectors
    origins: tuple[Transform, ...]  # length n
    joint_pos_limits: np.ndarray  # (n, 2) [min, max] rad
    joint_vel_limits: np.ndarray  # (n,) rad/s, > 0
    mallet_offset: Transform
    home_joints: np.ndarray | None = None  # optional reference pose, (n,)
    name: str = "chain"

    def __post_init__(self):
        axes = np.asarray(self.axes, dtype=float)
        norms = np.linalg.norm(axes, axis=1)
        if np.any(norms == 0.0):
            raise ConfigError("joint axes must be non-zero")
        object.__setattr__(self, "axes", axes / norms[:, None])
        pos = np.asarray(self.joint_pos_limits, dtype=float)
        vel = np.asarray(self.joint_vel_limits, dtype=float)
        if pos.shape != (self.joint_count, 2) or vel.shape != (self.joint_count,):
            raise ConfigError("limit arrays must match joint count")
        if np.any(pos[:, 0] >= pos[:, 1]):
            raise ConfigError("joint position limits must satisfy min < max")
        if np.any(vel <= 0.0):
            raise ConfigError("joint velocity limits must be strictly positive")
        object.__setattr__(self, "joint_pos_limits", pos)
        object.__setattr__(self, "joint_vel_limits", vel)
        if self.home_joints is not None:
            home = np.asarray(self.home_joints, dtype=float)
            if home.shape != (self.joint_count,):
                raise ConfigError("home_joints length must match joint count")
            object.__setattr__(self, "home_joints", home)
        self._precompute()

    def _precompute(self) -> None:
        """Flatten the chain into plain-float tuples for the traversal hot path."""
        eye = np.eye(3)
        origin_t, origin_r, axis_spec = [], [], []
        for i, origin in enumerate(self.origins):
            origin_t.append(tuple(float(v) for v in origin.translation))
            rot = origin.rotation
            origin_r.append(
                None if bool((rot == eye).all()) else tuple(float(v) for v in rot.ravel())
            )
            axis = self.axes[i]
            spec = None
            for k in range(3):
                if abs(axis[k]) == 1.0:
                    spec = (k, float(np.sign(axis[k])))
                    break
            if spec is None:
                spec = (3, tuple(float(v) for v in axis))
            axis_spec.append(spec)
        object.__setattr__(self, "_origin_t", tuple(origin_t))
        object.__setattr__(self, "_origin_r", tuple(origin_r))
        object.__setattr__(self, "_axis_spec", tuple(axis_spec))
        object.__setattr__(
            self, "_mallet_t", tuple(float(v) for v in self.mallet_offset.translation)
        )

    @property
    def joint_count(self) -> int:
        return len(self.origins)

    def clamp_positions(self, positions: np.ndarray) -> np.ndarray:
        return np.clip(positions, self.joint_pos_limits[:, 0], self.joint_pos_limits[:, 1])


@dataclass
class JointState:
    """Joint positions (rad) and velocities (rad/s) of one arm."""

    positions: np.ndarray
    velocities: np.ndarray

    @classmethod
    def zeros(cls, joint_count: int) -> "JointState":
        return cls(np.zeros(joint_count), np.zeros(joint_count))

    def copy(self) -> "JointState":
        return JointState(self.positions.copy(), self.velocities.copy())


@dataclass(frozen=True)
class CartesianDisplacement:
    """Requested mallet displacement in the chain base frame (m)."""

    dx: float
    dy: float
    dz: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz])


@dataclass(frozen=True)
class JointCommand:
    """Target joint positions and velocities for one control cycle."""

    positions: np.ndarray
    velocities: np.ndarray


def _check_joints(chain: KinematicChain, joints: JointState) -> None:
    if joints.positions.shape != (chain.joint_count,):
        raise ValueError(
            f"joint state has {joints.positions.shape[0]} positions, "
            f"chain expects {chain.joint_count}"
        )


def _traverse(chain: KinematicChain, positions):
    """Walk the chain once; plain-float math (this is the simulation hot path).

    Returns (joint_origins, joint_axes, tip) as lists/tuples of floats, all in
    the chain base frame. The running rotation is kept as nine scalars; joints
    about a coordinate axis update it by column mixing, anything else through
    the full axis-angle matrix product.
    """
    r00 = r11 = r22 = 1.0
    r01 = r02 = r10 = r12 = r20 = r21 = 0.0
    px = py = pz = 0.0
    origins = []
    axes = []
    for i in range(chain.joint_count):
        tx, ty, tz = chain._origin_t[i]
        px += r00 * tx + r01 * ty + r02 * tz
        py += r10 * tx + r11 * ty + r12 * tz
        pz += r20 * tx + r21 * ty + r22 * tz
        o = chain._origin_r[i]
        if o is not None:
            o00, o01, o02, o10, o11, o12, o20, o21, o22 = o
            r00, r01, r02, r10, r11, r12, r20, r21, r22 = (
                r00 * o00 + r01 * o10 + r02 * o20,
                r00 * o01 + r01 * o11 + r02 * o21,
                r00 * o02 + r01 * o12 + r02 * o22,
                r10 * o00 + r11 * o10 + r12 * o20,
                r10 * o01 + r11 * o11 + r12 * o21,
                r10 * o02 + r11 * o12 + r12 * o22,
                r20 * o00 + r21 * o10 + r22 * o20,
                r20 * o01 + r21 * o11 + r22 * o21,
                r20 * o02 + r21 * o12 + r22 * o22,
            )
        origins.append((px, py, pz))
        kind, extra = chain._axis_spec[i]
        theta = positions[i]
        if kind == 2:
            axes.append((extra * r02, extra * r12, extra * r22))
            a = extra * theta
            c, s = math.cos(a), math.sin(a)
            r00, r01, r10, r11, r20, r21 = (
                c * r00 + s * r01, c * r01 - s * r00,
                c * r10 + s * r11, c * r11 - s * r10,
                c * r20 + s * r21, c * r21 - s * r20,
            )
        elif kind == 1:
            axes.append((extra * r01, extra * r11, extra * r21))
            a = extra * theta
            c, s = math.cos(a), math.sin(a)
            r00, r02, r10, r12, r20, r22 = (
                c * r00 - s * r02, s * r00 + c * r02,
                c * r10 - s * r12, s * r10 + c * r12,
                c * r20 - s * r22, s * r20 + c * r22,
            )
        elif kind == 0:
            axes.append((extra * r00, extra * r10, extra * r20))
            a = extra * theta
            c, s = math.cos(a), math.sin(a)
            r01, r02, r11, r12, r21, r22 = (
                c * r01 + s * r02, c * r02 - s * r01,
                c * r11 + s * r12, c * r12 - s * r11,
                c * r21 + s * r22, c * r22 - s * r21,
            )
        else:
            ax, ay, az = extra
            axes.append(
                (
                    r00 * ax + r01 * ay + r02 * az,
                    r10 * ax + r11 * ay + r12 * az,
                    r20 * ax + r21 * ay + r22 * az,
                )
            )
            c, s = math.cos(theta), math.sin(theta)
            t = 1.0 - c
            m00 = t * ax * ax + c
            m01 = t * ax * ay - s * az
            m02 = t * ax * az + s * ay
            m10 = t * ax * ay + s * az
            m11 = t * ay * ay + c
            m12 = t * ay * az - s * ax
            m20 = t * ax * az - s * ay
            m21 = t * ay * az + s * ax
            m22 = t * az * az + c
            r00, r01, r02, r10, r11, r12, r20, r21, r22 = (
                r00 * m00 + r01 * m10 + r02 * m20,
                r00 * m01 + r01 * m11 + r02 * m21,
                r00 * m02 + r01 * m12 + r02 * m22,
                r10 * m00 + r11 * m10 + r12 * m20,
                r10 * m01 + r11 * m11 + r12 * m21,
                r10 * m02 + r11 * m12 + r12 * m22,
                r20 * m00 + r21 * m10 + r22 * m20,
                r20 * m01 + r21 * m11 + r22 * m21,
                r20 * m02 + r21 * m12 + r22 * m22,
            )
    tx, ty, tz = chain._mallet_t
    tip = (
        px + r00 * tx + r01 * ty + r02 * tz,
        py + r10 * tx + r11 * ty + r12 * tz,
        pz + r20 * tx + r21 * ty + r22 * tz,
    )
    return origins, axes, tip


def forward_kinematics(chain: KinematicChain, joints: JointState) -> np.ndarray:
    """Mallet-center position (x, y, z) in the chain base frame.

    The z component is the mallet height above the base plane; tabletop
    contact corresponds to z equal to the table plane height.
    """
    _check_joints(chain, joints)
    _, _, tip = _traverse(chain, joints.positions.tolist())
    return np.array(tip)


def _jacobian_from_frames(origins, axes, tip, n: int) -> np.ndarray:
    tipx, tipy, tipz = tip
    jac = np.empty((3, n))
    for i in range(n):
        ox, oy, oz = origins[i]
        ax, ay, az = axes[i]
        dx, dy, dz = tipx - ox, tipy - oy, tipz - oz
        jac[0, i] = ay * dz - az * dy
        jac[1, i] = az * dx - ax * dz
        jac[2, i] = ax * dy - ay * dx
    return jac


def jacobian(chain: KinematicChain, joints: JointState) -> np.ndarray:
    """Positional Jacobian (3 x n) of the mallet point, m per rad.

    Column i is the instantaneous linear velocity of the mallet for unit
    velocity of joint i: axis_i x (tip - origin_i).
    """
    _check_joints(chain, joints)
    origins, axes, tip = _traverse(chain, joints.positions.tolist())
    return _jacobian_from_frames(origins, axes, tip, chain.joint_count)


def tip_and_jacobian(chain: KinematicChain, joints: JointState) -> tuple[np.ndarray, np.ndarray]:
    """Mallet position and Jacobian from a single chain traversal."""
    _check_joints(chain, joints)
    origins, axes, tip = _traverse(chain, joints.positions.tolist())
    return np.array(tip), _jacobian_from_frames(origins, axes, tip, chain.joint_count)


def pseudo_inverse(jac: np.ndarray, sv_floor: float = DEFAULT_SV_FLOOR) -> np.ndarray:
    """Damped Moore-Penrose pseudo-inverse.

    Singular values at or above `sv_floor` are inverted exactly; smaller ones
    are damped to sigma / sv_floor**2, which is continuous at the floor and
    bounds the output spectral norm by 1 / sv_floor near singularities.
    """
    jac = np.asarray(jac, dtype=float)
    if not np.all(np.isfinite(jac)):
        raise ValueError("Jacobian contains non-finite entries")
    u, s, vt = np.linalg.svd(jac, full_matrices=False)
    inv_s = np.where(s >= sv_floor, 1.0 / np.maximum(s, sv_floor), s / sv_floor**2)
    return (vt.T * inv_s) @ u.T


def resolve_action(
    chain: KinematicChain,
    joints: JointState,
    displacement: CartesianDisplacement,
    cycle_s: float,
    weights: tuple[float, float, float] = DEFAULT_CARTESIAN_WEIGHTS,
    sv_floor: float = DEFAULT_SV_FLOOR,
    direction_preserving_clip: bool = False,
    jac: np.ndarray | None = None,
) -> JointCommand:
    """Turn a Cartesian mallet displacement into a feasible joint command.

    The displacement is scaled element-wise by `weights`, mapped through the
    damped Jacobian pseudo-inverse, and the resulting joint displacements are
    clipped so no joint exceeds its velocity limit over `cycle_s`. Velocities
    are the clipped displacements divided by the cycle; positions are
    additionally clamped to the joint position limits.

    Clipping is per-joint by default; `direction_preserving_clip` scales the
    whole displacement vector down instead, preserving its direction.
    """
    if cycle_s <= 0.0:
        raise ValueError("cycle_s must be positive")
    if not (
        math.isfinite(displacement.dx)
        and math.isfinite(displacement.dy)
        and math.isfinite(displacement.dz)
    ):
        raise ValueError("displacement contains non-finite values")
    _check_joints(chain, joints)

    weighted = np.array(
        (
            displacement.dx * weights[0],
            displacement.dy * weights[1],
            displacement.dz * weights[2],
        )
    )
    if jac is None:
        jac = jacobian(chain, joints)
    delta = pseudo_inverse(jac, sv_floor) @ weighted

    max_step = chain.joint_vel_limits * cycle_s
    if direction_preserving_clip:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.abs(delta) / max_step
        worst = np.max(ratios) if delta.size else 0.0
        if worst > 1.0:
            delta = delta / worst
    else:
        np.minimum(delta, max_step, out=delta)
        np.maximum(delta, -max_step, out=delta)

    velocities = delta / cycle_s
    positions = joints.positions + delta
    np.minimum(positions, chain.joint_pos_limits[:, 1], out=positions)
    np.maximum(positions, chain.joint_pos_limits[:, 0], out=positions)
    return JointCommand(positions, velocities)


def planar_chain(link_lengths, vel_limit: float = 10.0) -> KinematicChain:
    """Planar test chain: z-axis revolute joints chained along +x with unit-ish links."""
    lengths = list(link_lengths)
    n = len(lengths)
    origins = [Transform.from_xyz_rpy([0.0, 0.0, 0.0], [0.0, 0.0, 0.0])]
    for length in lengths[:-1]:
        origins.append(Transform.from_xyz_rpy([length, 0.0, 0.0], [0.0, 0.0, 0.0]))
    return KinematicChain(
        axes=np.tile([0.0, 0.0, 1.0], (n, 1)),
        origins=tuple(origins),
        joint_pos_limits=np.tile([-np.pi, np.pi], (n, 1)),
        joint_vel_limits=np.full(n, vel_limit),
        mallet_offset=Transform.from_xyz_rpy([lengths[-1], 0.0, 0.0], [0.0, 0.0, 0.0]),
        name=f"planar{n}",
    )


def _parse_transform(node, where: str) -> Transform:
    try:
        xyz = [float(v) for v in node["xyz"]]
        rpy = [float(v) for v in node["rpy"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: expected keys 'xyz' and 'rpy' with 3 numbers each") from exc
    if len(xyz) != 3 or len(rpy) != 3:
        raise ConfigError(f"{where}: xyz and rpy must have 3 entries")
    return Transform.from_xyz_rpy(xyz, rpy)


def chain_from_dict(data: dict, name: str = "chain") -> KinematicChain:
    """Build a chain from the structured config mapping (see configs/chain_iiwa_like.yaml)."""
    version = data.get("format_version")
    if version != CHAIN_FORMAT_VERSION:
        raise ConfigError(
            f"unsupported chain format_version {version!r}; expected {CHAIN_FORMAT_VERSION}"
        )
    joints = data.get("joints")
    if not isinstance(joints, list) or not joints:
        raise ConfigError("chain config needs a non-empty 'joints' list")
    declared = data.get("joint_count")
    if declared is not None and declared != len(joints):
        raise ConfigError(f"joint_count {declared} does not match {len(joints)} joint entries")

    axes, origins, pos_limits, vel_limits = [], [], [], []
    for i, joint in enumerate(joints):
        where = f"joints[{i}]"
        try:
            axes.append([float(v) for v in joint["axis"]])
            pos_limits.append([float(v) for v in joint["pos_limits"]])
            vel_limits.append(float(joint["vel_limit"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: needs 'axis', 'pos_limits', 'vel_limit'") from exc
        origins.append(_parse_transform(joint.get("origin", {"xyz": [0, 0, 0], "rpy": [0, 0, 0]}), where))

    mallet = data.get("mallet_offset")
    if mallet is None:
        raise ConfigError("chain config needs 'mallet_offset'")
    home = data.get("home_joints")
    return KinematicChain(
        axes=np.array(axes),
        origins=tuple(origins),
        joint_pos_limits=np.array(pos_limits),
        joint_vel_limits=np.array(vel_limits),
        mallet_offset=_parse_transform(mallet, "mallet_offset"),
        home_joints=None if home is None else np.array([float(v) for v in home]),
        name=name,
    )


def load_chain(path) -> KinematicChain:
    """Load a chain spec from a YAML file."""
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: chain config must be a mapping")
    return chain_from_dict(data, name=os.path.splitext(os.path.basename(str(path)))[0])


_DEFAULT_CHAIN: KinematicChain | None = None


def default_chain() -> KinematicChain:
    """The shipped 7-DoF chain (configs/chain_iiwa_like.yaml), loaded once."""
    global _DEFAULT_CHAIN
    if _DEFAULT_CHAIN is None:
        from importlib import resources

        ref = resources.files("deskhockey").joinpath("configs/chain_iiwa_like.yaml")
        _DEFAULT_CHAIN = chain_from_dict(yaml.safe_load(ref.read_text()), name="chain_iiwa_like")
    return _DEFAULT_CHAIN
