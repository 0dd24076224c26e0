"""Planar rigid-body simulation of the puck and two kinematically driven mallets.

Table frame: origin at the table center, x along the length, y along the
width, z up. Side A defends the goal at x = -length/2, side B the one at
x = +length/2. The puck is integrated with semi-implicit Euler; wall contacts
mirror the positional overshoot across the wall plane scaled by restitution,
so at unit restitution the discrete trajectory coincides with the exact
reflection-unfolded straight line at every substep boundary.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
import yaml

from .errors import ConfigError
from .kinematics import JointState

log = logging.getLogger(__name__)

TABLE_FORMAT_VERSION = 1

# 50 Hz control with 10 physics substeps per control step.
CONTROL_DT = 0.02
SUBSTEPS_PER_CONTROL = 10
SUBSTEP_DT = CONTROL_DT / SUBSTEPS_PER_CONTROL


class Side(enum.Enum):
    A = "A"
    B = "B"

    @property
    def other(self) -> "Side":
        return Side.B if self is Side.A else Side.A

    @property
    def index(self) -> int:
        return 0 if self is Side.A else 1

    @property
    def sign(self) -> float:
        """Sign of the x half-plane this side defends."""
        return -1.0 if self is Side.A else 1.0

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class TableSpec:
    """Geometry and contact parameters of the table.

    Defaults approximate a competition air hockey table; none of them are
    authoritative, so every quantity can be overridden from a config file.
    `max_speed` caps the puck speed for numerical robustness (it also keeps
    substep travel well below the puck radius, preventing tunnelling), and
    `spin_damping` is the optional spin-friction coupling (default off).
    """

    length: float = 1.948
    width: float = 1.038
    goal_width: float = 0.25
    puck_radius: float = 0.03165
    mallet_radius: float = 0.048
    restitution_wall: float = 0.9
    restitution_mallet: float = 0.9
    damping: float = 0.12
    plane_height: float = 0.0
    max_speed: float = 8.0
    spin_damping: float = 0.0

    def __post_init__(self):
        if self.goal_width >= self.width:
            raise ConfigError("goal_width must be smaller than table width")
        if self.puck_radius <= 0 or self.mallet_radius <= 0:
            raise ConfigError("radii must be positive")
        for name in ("restitution_wall", "restitution_mallet"):
            e = getattr(self, name)
            if not 0.0 <= e <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.damping < 0 or self.spin_damping < 0:
            raise ConfigError("damping must be non-negative")

    @property
    def half_length(self) -> float:
        return self.length / 2.0

    @property
    def half_width(self) -> float:
        return self.width / 2.0

    @property
    def aperture_half(self) -> float:
        """Half-width of the y-interval through which the puck fits into a goal."""
        return self.goal_width / 2.0 - self.puck_radius


@dataclass
class PuckState:
    x: float = 0.0
    y: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    angle: float = 0.0
    angular_velocity: float = 0.0

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass
class MalletState:
    x: float = 0.0
    y: float = 0.0
    vx: float = 0.0
    vy: float = 0.0


@dataclass
class WorldState:
    """Full simulator truth for one match.

    `fault_steps` counts consecutive 50 Hz control steps of puck possession
    per side (seconds = steps * CONTROL_DT); only the possessing side's
    counter is non-zero. `rng` is the single owned generator; together with
    the action history it fully determines the trajectory.
    """

    puck: PuckState
    mallets: tuple[MalletState, MalletState]
    joints: tuple[JointState, JointState]
    step_index: int = 0
    fault_steps: tuple[int, int] = (0, 0)
    stuck_steps: int = 0
    rng: np.random.Generator | None = None

    @property
    def fault_timers(self) -> tuple[float, float]:
        """Possession timers in seconds, (side A, side B)."""
        return (self.fault_steps[0] * CONTROL_DT, self.fault_steps[1] * CONTROL_DT)

    def mallet(self, side: Side) -> MalletState:
        return self.mallets[side.index]

    def joint_state(self, side: Side) -> JointState:
        return self.joints[side.index]


def possession_side(puck: PuckState) -> Side | None:
    """Which half the puck center is on; None exactly on the center line."""
    if puck.x < 0.0:
        return Side.A
    if puck.x > 0.0:
        return Side.B
    return None


def _reflect_axis(pos: float, vel: float, lo: float, hi: float, e: float):
    """Fold [pos, vel] back into [lo, hi], scaling the overshoot and speed by e."""
    for _ in range(8):
        if pos > hi:
            pos = hi - e * (pos - hi)
            vel = -e * vel
        elif pos < lo:
            pos = lo + e * (lo - pos)
            vel = -e * vel
        else:
            return pos, vel
    # Degenerate box (possible only with absurd configs): clamp inside.
    return min(max(pos, lo), hi), vel


def substep(world: WorldState, table: TableSpec, dt: float = SUBSTEP_DT) -> WorldState:
    """Advance puck dynamics by one physics substep.

    Semi-implicit Euler with linear velocity decay, wall reflection with
    restitution (tangential component untouched), goal-aperture pass-through,
    and impulse response against both mallets. Mallet states are inputs here;
    the control layer moves them between substeps.
    """
    p = world.puck
    decay = 1.0 - table.damping * dt
    if decay < 0.0:
        decay = 0.0
    vx = p.vx * decay
    vy = p.vy * decay

    speed_sq = vx * vx + vy * vy
    if speed_sq > table.max_speed * table.max_speed:
        scale = table.max_speed / math.sqrt(speed_sq)
        vx *= scale
        vy *= scale

    x = p.x + vx * dt
    y = p.y + vy * dt

    # Long walls (y-normal) always reflect.
    wall_y = table.half_width - table.puck_radius
    y, vy = _reflect_axis(y, vy, -wall_y, wall_y, table.restitution_wall)

    # Short walls reflect only outside the goal aperture; inside it the puck
    # sails through and goal detection picks it up at the control step.
    wall_x = table.half_length - table.puck_radius
    if not (abs(y) <= table.aperture_half and abs(x) > wall_x):
        x, vx = _reflect_axis(x, vx, -wall_x, wall_x, table.restitution_wall)

    spin_decay = 1.0 - table.spin_damping * dt
    if spin_decay < 0.0:
        spin_decay = 0.0
    omega = p.angular_velocity * spin_decay
    angle = p.angle + omega * dt
    if angle > math.pi:
        angle -= math.tau
    elif angle < -math.pi:
        angle += math.tau

    new_puck = PuckState(x, y, vx, vy, angle, omega)
    for mallet in world.mallets:
        new_puck = collide_mallet_puck(new_puck, mallet, table)
    return WorldState(
        puck=new_puck,
        mallets=world.mallets,
        joints=world.joints,
        step_index=world.step_index,
        fault_steps=world.fault_steps,
        stuck_steps=world.stuck_steps,
        rng=world.rng,
    )


def collide_mallet_puck(puck: PuckState, mallet: MalletState, table: TableSpec) -> PuckState:
    """Resolve circle-circle contact between the puck and one mallet.

    The mallet is kinematically driven (infinite mass): the puck's velocity
    relative to the mallet is reflected about the contact normal and scaled
    by the mallet restitution, and the puck is pushed out of penetration
    along the normal. States without contact are returned unchanged.
    """
    dx = puck.x - mallet.x
    dy = puck.y - mallet.y
    min_dist = table.puck_radius + table.mallet_radius
    dist_sq = dx * dx + dy * dy
    if dist_sq > min_dist * min_dist:
        return puck

    dist = math.sqrt(dist_sq)
    if dist == 0.0:
        # Degenerate coincident centers: push toward the +x goal so the puck
        # never gets wedged into the defender.
        log.warning("coincident puck/mallet centers at (%.3f, %.3f)", puck.x, puck.y)
        nx, ny = 1.0, 0.0
    else:
        nx, ny = dx / dist, dy / dist

    # Positional de-penetration (puck moves; mallet is infinite-mass).
    x = mallet.x + nx * min_dist
    y = mallet.y + ny * min_dist

    rvx = puck.vx - mallet.vx
    rvy = puck.vy - mallet.vy
    vn = rvx * nx + rvy * ny
    if vn >= 0.0:
        # Already separating: de-penetrate only.
        return PuckState(x, y, puck.vx, puck.vy, puck.angle, puck.angular_velocity)

    scale = (1.0 + table.restitution_mallet) * vn
    vx = puck.vx - scale * nx
    vy = puck.vy - scale * ny
    return PuckState(x, y, vx, vy, puck.angle, puck.angular_velocity)


def detect_goal(puck: PuckState, table: TableSpec) -> Side | None:
    """Side scored against, if the puck center has crossed its goal line inside the aperture."""
    if abs(puck.y) > table.goal_width / 2.0:
        return None
    if puck.x < -table.half_length:
        return Side.A
    if puck.x > table.half_length:
        return Side.B
    return None


def table_from_dict(data: dict) -> TableSpec:
    version = data.get("format_version")
    if version != TABLE_FORMAT_VERSION:
        raise ConfigError(
            f"unsupported table format_version {version!r}; expected {TABLE_FORMAT_VERSION}"
        )
    fields = {k: float(v) for k, v in data.items() if k != "format_version"}
    known = set(TableSpec.__dataclass_fields__)
    unknown = set(fields) - known
    if unknown:
        raise ConfigError(f"unknown table config keys: {sorted(unknown)}")
    return TableSpec(**fields)


def load_table(path) -> TableSpec:
    """Load a TableSpec from a YAML file."""
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: table config must be a mapping")
    return table_from_dict(data)


def default_table() -> TableSpec:
    """The shipped table spec (equal to TableSpec() defaults)."""
    return TableSpec()
