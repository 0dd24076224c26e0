"""Agent-facing environment: observations, action decoding, rewards, stochasticity.

Each agent perceives and acts in its *own frame*: the table frame for side A,
and the table frame rotated by pi for side B, so that an agent's goal is
always at negative x. Policies are therefore side-agnostic. Observations are
normalized to [-1, 1] and stacked with per-state history depths; actions are
normalized mallet target positions inside the side's workspace rectangle and
are resolved to joint commands through the inverse-Jacobian controller.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
import yaml

from .errors import ConfigError
from .kinematics import (
    CartesianDisplacement,
    JointCommand,
    JointState,
    KinematicChain,
    forward_kinematics,
    resolve_action,
    tip_and_jacobian,
)
from .match import (
    TERMINAL_KINDS,
    EventKind,
    MatchConfig,
    MatchEvent,
    faceoff_puck,
    update_rules,
)
from .physics import (
    CONTROL_DT,
    SUBSTEP_DT,
    SUBSTEPS_PER_CONTROL,
    MalletState,
    PuckState,
    Side,
    TableSpec,
    WorldState,
    possession_side,
    substep,
)

log = logging.getLogger(__name__)

NOISE_FORMAT_VERSION = 1
STRATEGY_FORMAT_VERSION = 1

OBSERVATION_DIM = 40
ACTION_DIM = 2

# Stack depths per observed state (newest first within each block).
STACK_OWN_MALLET = 2
STACK_OPP_MALLET = 2
STACK_PUCK_POS = 10
STACK_PUCK_ROT = 2

# Flat layout offsets: joints, own mallet, opponent mallet, puck position,
# puck orientation, fault timer.
_JOINTS = slice(0, 7)
_OWN = slice(7, 7 + 2 * STACK_OWN_MALLET)
_OPP = slice(11, 11 + 2 * STACK_OPP_MALLET)
_PUCK = slice(15, 15 + 2 * STACK_PUCK_POS)
_ROT = slice(35, 35 + 2 * STACK_PUCK_ROT)
_TIMER = 39


@dataclass
class ObservationStack:
    """Normalized, stacked 40-dimensional observation state of one agent.

    `flat` is the live observation vector; historical entries shift one slot
    deeper on every `observe` call. After a reset every slot of a stacked
    state holds the same duplicated value.
    """

    flat: np.ndarray
    side: Side
    tracking_loss_steps: int = 0
    initialized: bool = False

    @classmethod
    def empty(cls, side: Side) -> "ObservationStack":
        return cls(flat=np.zeros(OBSERVATION_DIM), side=side)

    def reset(self) -> None:
        self.flat[:] = 0.0
        self.tracking_loss_steps = 0
        self.initialized = False

    def copy(self) -> "ObservationStack":
        return ObservationStack(
            self.flat.copy(), self.side, self.tracking_loss_steps, self.initialized
        )

    # Convenience views used by scripted policies and the score estimator.
    @property
    def joints(self) -> np.ndarray:
        return self.flat[_JOINTS]

    @property
    def own_mallet(self) -> np.ndarray:
        return self.flat[_OWN.start : _OWN.start + 2]

    @property
    def opp_mallet(self) -> np.ndarray:
        return self.flat[_OPP.start : _OPP.start + 2]

    @property
    def puck(self) -> np.ndarray:
        return self.flat[_PUCK.start : _PUCK.start + 2]

    @property
    def puck_prev(self) -> np.ndarray:
        return self.flat[_PUCK.start + 2 : _PUCK.start + 4]

    @property
    def fault_timer(self) -> float:
        return float(self.flat[_TIMER])


@dataclass(frozen=True)
class StrategyRewardConfig:
    """Sparse terminal rewards for one playstyle; exact rationals."""

    name: str
    score_goal: Fraction
    receive_goal: Fraction = Fraction(-1)
    cause_fault: Fraction = Fraction(-1, 3)


STRATEGIES: dict[str, StrategyRewardConfig] = {
    "balanced": StrategyRewardConfig("balanced", Fraction(2, 3)),
    "aggressive": StrategyRewardConfig("aggressive", Fraction(1)),
    "defensive": StrategyRewardConfig("defensive", Fraction(0)),
}


def strategy_by_name(name: str) -> StrategyRewardConfig:
    try:
        return STRATEGIES[name]
    except KeyError:
        raise ConfigError(
            f"unknown strategy {name!r}; expected one of {sorted(STRATEGIES)}"
        ) from None


def strategies_from_dict(data: dict) -> dict[str, StrategyRewardConfig]:
    """Parse a strategy config mapping; rewards are exact rationals ("2/3")."""
    version = data.get("format_version")
    if version != STRATEGY_FORMAT_VERSION:
        raise ConfigError(
            f"unsupported strategy format_version {version!r}; "
            f"expected {STRATEGY_FORMAT_VERSION}"
        )
    entries = data.get("strategies")
    if not isinstance(entries, dict) or not entries:
        raise ConfigError("strategy config needs a non-empty 'strategies' mapping")
    out = {}
    for name, fields in entries.items():
        try:
            out[name] = StrategyRewardConfig(
                name=name,
                score_goal=Fraction(str(fields["score_goal"])),
                receive_goal=Fraction(str(fields.get("receive_goal", "-1"))),
                cause_fault=Fraction(str(fields.get("cause_fault", "-1/3"))),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"strategy {name!r}: {exc}") from exc
    return out


def load_strategies(path) -> dict[str, StrategyRewardConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: strategy config must be a mapping")
    return strategies_from_dict(data)


@dataclass(frozen=True)
class NoiseConfig:
    """Stochasticity applied to the learner's pathway (normalized units)."""

    obs_noise_sigma: float = 0.005
    action_noise_sigma: float = 0.01
    disturbance_impulse_sigma: float = 0.05  # m/s
    tracking_loss_prob: float = 0.01  # per-step onset probability
    tracking_loss_mean_duration: float = 10.0  # steps, geometric

    def __post_init__(self):
        if min(
            self.obs_noise_sigma,
            self.action_noise_sigma,
            self.disturbance_impulse_sigma,
            self.tracking_loss_mean_duration,
        ) < 0:
            raise ConfigError("noise magnitudes must be non-negative")
        if not 0.0 <= self.tracking_loss_prob <= 1.0:
            raise ConfigError("tracking_loss_prob must lie in [0, 1]")

    @classmethod
    def zeroed(cls) -> "NoiseConfig":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


def noise_from_dict(data: dict) -> NoiseConfig:
    version = data.get("format_version")
    if version != NOISE_FORMAT_VERSION:
        raise ConfigError(
            f"unsupported noise format_version {version!r}; expected {NOISE_FORMAT_VERSION}"
        )
    fields = {k: float(v) for k, v in data.items() if k != "format_version"}
    known = set(NoiseConfig.__dataclass_fields__)
    unknown = set(fields) - known
    if unknown:
        raise ConfigError(f"unknown noise config keys: {sorted(unknown)}")
    return NoiseConfig(**fields)


def load_noise(path) -> NoiseConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: noise config must be a mapping")
    return noise_from_dict(data)


@dataclass(frozen=True)
class EnvGeometry:
    """Arm mounting and reachable-workspace parameters, in the own frame.

    The arm base sits `base_offset` behind the own goal line, `base_z` below
    the table plane. The action workspace is the own half inset by the mallet
    radius, intersected with the bounding box of the reach disc around the
    base (a rectangle approximation of the reachable region).
    """

    base_offset: float = 0.15
    base_z: float = -0.1
    reach_radius: float = 0.85

    def base_xy(self, table: TableSpec) -> tuple[float, float]:
        return (-table.half_length - self.base_offset, 0.0)

    def workspace(self, table: TableSpec) -> tuple[float, float, float, float]:
        """Own-frame workspace rectangle (x_lo, x_hi, y_lo, y_hi)."""
        bx, _ = self.base_xy(table)
        r = table.mallet_radius
        x_lo = max(-table.half_length + r, bx - self.reach_radius)
        x_hi = min(-r, bx + self.reach_radius)
        y_lo = max(-table.half_width + r, -self.reach_radius)
        y_hi = min(table.half_width - r, self.reach_radius)
        if x_lo >= x_hi:
            raise ConfigError("empty workspace: reach radius or offsets inconsistent")
        return (x_lo, x_hi, y_lo, y_hi)


def to_own_frame(side: Side, x: float, y: float) -> tuple[float, float]:
    """Table frame -> side's own frame (rotation by pi for side B)."""
    return (x, y) if side is Side.A else (-x, -y)


def to_table_frame(side: Side, x: float, y: float) -> tuple[float, float]:
    return (x, y) if side is Side.A else (-x, -y)


def chain_to_own(geometry: EnvGeometry, table: TableSpec, point: np.ndarray) -> tuple[float, float, float]:
    """Chain base frame -> own frame (pure translation; frames share axes)."""
    bx, by = geometry.base_xy(table)
    return (point[0] + bx, point[1] + by, point[2] + geometry.base_z)


def observe(
    world: WorldState,
    side: Side,
    chain: KinematicChain,
    table: TableSpec,
    stack: ObservationStack,
    noise: NoiseConfig,
    rng: np.random.Generator | None = None,
    match_config: MatchConfig = MatchConfig(),
) -> ObservationStack:
    """Push the current world into the agent's observation stack.

    Joint positions are normalized by their limits, planar positions by the
    table half-dimensions, puck orientation is emitted as (sin, cos), and the
    fault timer as possession-elapsed over the fault limit, negative while
    the puck is on the observer's side. New entries receive additive Gaussian
    noise (then clamping) when configured; while a simulated tracking loss is
    active, the puck entries repeat the last observed values exactly.
    """
    if stack.side is not side:
        raise ValueError("observation stack belongs to the other side")
    joints = world.joint_state(side)
    lo = chain.joint_pos_limits[:, 0]
    hi = chain.joint_pos_limits[:, 1]
    joints_n = 2.0 * (joints.positions - lo) / (hi - lo) - 1.0

    own_m = world.mallet(side)
    opp_m = world.mallet(side.other)
    ox, oy = to_own_frame(side, own_m.x, own_m.y)
    px, py = to_own_frame(side, opp_m.x, opp_m.y)
    kx, ky = to_own_frame(side, world.puck.x, world.puck.y)
    hl, hw = table.half_length, table.half_width
    own_n = (ox / hl, oy / hw)
    opp_n = (px / hl, py / hw)
    puck_n = (kx / hl, ky / hw)
    angle = world.puck.angle if side is Side.A else world.puck.angle + math.pi
    rot_n = (math.sin(angle), math.cos(angle))

    holder = possession_side(world.puck)
    if holder is None:
        timer = 0.0
    else:
        elapsed = world.fault_steps[holder.index] / match_config.fault_limit_steps
        timer = -elapsed if holder is side else elapsed

    flat = stack.flat

    # Simulated tracking loss: freeze puck position/orientation entries.
    frozen = False
    if noise.tracking_loss_prob > 0.0 and rng is not None and stack.initialized:
        if stack.tracking_loss_steps > 0:
            stack.tracking_loss_steps -= 1
            frozen = True
        elif rng.random() < noise.tracking_loss_prob:
            mean = max(noise.tracking_loss_mean_duration, 1.0)
            stack.tracking_loss_steps = int(rng.geometric(1.0 / mean))
            frozen = stack.tracking_loss_steps > 0
            if frozen:
                stack.tracking_loss_steps -= 1

    if frozen:
        puck_entry = (flat[_PUCK.start], flat[_PUCK.start + 1])
        rot_entry = (flat[_ROT.start], flat[_ROT.start + 1])
    else:
        puck_entry, rot_entry = puck_n, rot_n

    new = np.empty(16)
    new[0:7] = joints_n
    new[7:9] = own_n
    new[9:11] = opp_n
    new[11:13] = puck_entry
    new[13:15] = rot_entry
    new[15] = timer
    if noise.obs_noise_sigma > 0.0 and rng is not None:
        if frozen:
            # Frozen puck entries must repeat bit-exactly; noise the rest.
            new[0:11] += rng.normal(0.0, noise.obs_noise_sigma, 11)
            new[15] += rng.normal(0.0, noise.obs_noise_sigma)
        else:
            new += rng.normal(0.0, noise.obs_noise_sigma, 16)
    np.minimum(new, 1.0, out=new)
    np.maximum(new, -1.0, out=new)

    if not stack.initialized:
        flat[_JOINTS] = new[0:7]
        flat[_OWN] = np.tile(new[7:9], STACK_OWN_MALLET)
        flat[_OPP] = np.tile(new[9:11], STACK_OPP_MALLET)
        flat[_PUCK] = np.tile(new[11:13], STACK_PUCK_POS)
        flat[_ROT] = np.tile(new[13:15], STACK_PUCK_ROT)
        flat[_TIMER] = new[15]
        stack.initialized = True
    else:
        flat[_JOINTS] = new[0:7]
        for sl, src in ((_OWN, 7), (_OPP, 9), (_PUCK, 11), (_ROT, 13)):
            flat[sl.start + 2 : sl.stop] = flat[sl.start : sl.stop - 2].copy()
            flat[sl.start : sl.start + 2] = new[src : src + 2]
        flat[_TIMER] = new[15]
    return stack


def act(
    world: WorldState,
    side: Side,
    action,
    chain: KinematicChain,
    table: TableSpec,
    noise: NoiseConfig,
    rng: np.random.Generator | None = None,
    geometry: EnvGeometry = EnvGeometry(),
) -> JointCommand:
    """Decode a normalized (ax, ay) action into a joint command.

    The action is clamped to [-1, 1]^2 (non-finite actions become a
    hold-position (0, 0)), optionally perturbed by learner action noise,
    denormalized into the side's workspace rectangle, and converted to a
    Cartesian displacement from the current mallet pose. The z component is
    never taken from the action: it re-targets the table plane every cycle.
    """
    ax, ay = float(action[0]), float(action[1])
    if not (math.isfinite(ax) and math.isfinite(ay)):
        log.warning("non-finite action %r on side %s treated as (0, 0)", action, side)
        ax, ay = 0.0, 0.0
    ax = min(max(ax, -1.0), 1.0)
    ay = min(max(ay, -1.0), 1.0)
    if noise.action_noise_sigma > 0.0 and rng is not None:
        nx, ny = rng.normal(0.0, noise.action_noise_sigma, 2)
        ax = min(max(ax + nx, -1.0), 1.0)
        ay = min(max(ay + ny, -1.0), 1.0)

    x_lo, x_hi, y_lo, y_hi = geometry.workspace(table)
    target_x = x_lo + (ax + 1.0) * 0.5 * (x_hi - x_lo)
    target_y = y_lo + (ay + 1.0) * 0.5 * (y_hi - y_lo)

    joints = world.joint_state(side)
    tip_chain, jac = tip_and_jacobian(chain, joints)
    tip_own = chain_to_own(geometry, table, tip_chain)

    plane_z_chain = table.plane_height - geometry.base_z
    disp = CartesianDisplacement(
        dx=target_x - tip_own[0],
        dy=target_y - tip_own[1],
        dz=plane_z_chain - tip_chain[2],
    )
    return resolve_action(chain, joints, disp, CONTROL_DT, jac=jac)


def reward(event: MatchEvent | None, side: Side, strategy: StrategyRewardConfig) -> Fraction:
    """Sparse terminal reward for one event as seen by `side`.

    Goals score for/against; own faults penalize; opponent faults and stuck
    resets carry no reward; every non-terminal transition is 0.
    """
    if event is None:
        return Fraction(0)
    if event.kind is EventKind.GOAL:
        return strategy.receive_goal if event.side is side else strategy.score_goal
    if event.kind is EventKind.FAULT:
        return strategy.cause_fault if event.side is side else Fraction(0)
    return Fraction(0)


def apply_disturbance(
    world: WorldState, noise: NoiseConfig, rng: np.random.Generator
) -> WorldState:
    """Kick the puck with a zero-mean Gaussian velocity impulse."""
    if noise.disturbance_impulse_sigma <= 0.0:
        return world
    ix, iy = rng.normal(0.0, noise.disturbance_impulse_sigma, 2)
    puck = replace(world.puck, vx=world.puck.vx + ix, vy=world.puck.vy + iy)
    return replace(world, puck=puck)


def home_joint_state(chain: KinematicChain) -> JointState:
    if chain.home_joints is None:
        return JointState.zeros(chain.joint_count)
    return JointState(chain.home_joints.copy(), np.zeros(chain.joint_count))


def mallet_from_joints(
    side: Side, chain: KinematicChain, joints: JointState, table: TableSpec, geometry: EnvGeometry
) -> MalletState:
    """Table-frame mallet state implied by a joint configuration (at rest)."""
    tip = forward_kinematics(chain, joints)
    own = chain_to_own(geometry, table, tip)
    tx, ty = to_table_frame(side, own[0], own[1])
    return MalletState(x=tx, y=ty, vx=0.0, vy=0.0)


def advance_control_step(
    world: WorldState,
    table: TableSpec,
    chain: KinematicChain,
    geometry: EnvGeometry,
    commands: tuple[JointCommand, JointCommand],
    match_config: MatchConfig,
) -> tuple[WorldState, list[MatchEvent]]:
    """Run one 50 Hz control step: joint interpolation, physics, match rules.

    Joint commands are executed as linear joint-space ramps over the control
    cycle; the mallet path across the ten physics substeps interpolates the
    Cartesian endpoints of that ramp (the within-cycle chord, accurate to
    second order in the per-cycle joint displacement).
    """
    starts = []
    ends = []
    for side in (Side.A, Side.B):
        cmd = commands[side.index]
        m = world.mallet(side)
        tip = forward_kinematics(chain, JointState(cmd.positions, cmd.velocities))
        own = chain_to_own(geometry, table, tip)
        ex, ey = to_table_frame(side, own[0], own[1])
        starts.append((m.x, m.y))
        ends.append((ex, ey))

    mallets = list(world.mallets)
    for k in range(1, SUBSTEPS_PER_CONTROL + 1):
        frac = k / SUBSTEPS_PER_CONTROL
        for i in range(2):
            sx, sy = starts[i]
            ex, ey = ends[i]
            mallets[i] = MalletState(
                x=sx + (ex - sx) * frac,
                y=sy + (ey - sy) * frac,
                vx=(ex - sx) / CONTROL_DT,
                vy=(ey - sy) / CONTROL_DT,
            )
        world.mallets = (mallets[0], mallets[1])
        world = substep(world, table, SUBSTEP_DT)

    world.joints = (
        JointState(commands[0].positions.copy(), commands[0].velocities.copy()),
        JointState(commands[1].positions.copy(), commands[1].velocities.copy()),
    )
    return update_rules(world, table, match_config)


class AirHockeyEnv:
    """Episodic learner-vs-opponent environment with a step/reset interface.

    The learner controls one side; the opponent is any callable mapping
    (ObservationStack, rng) to a normalized action and is driven internally
    on a noise-free pathway. Episodes terminate on goals, faults, and stuck
    resets; `step` returns (observation, reward, terminated, truncated, info)
    with the reward as a float and its exact rational in `info`.
    """

    def __init__(
        self,
        *,
        table: TableSpec | None = None,
        chain: KinematicChain | None = None,
        geometry: EnvGeometry | None = None,
        match_config: MatchConfig | None = None,
        noise: NoiseConfig | None = None,
        strategy: str | StrategyRewardConfig = "balanced",
        opponent=None,
        learner_side: Side = Side.A,
        seed: int | None = None,
        max_episode_steps: int = 1500,
        disturbance_rate_hz: float = 0.2,
        reset_side: str = "random",
    ):
        from .kinematics import default_chain  # local: avoids import at module load

        self.table = table if table is not None else TableSpec()
        self.chain = chain if chain is not None else default_chain()
        self.geometry = geometry if geometry is not None else EnvGeometry()
        self.match_config = match_config if match_config is not None else MatchConfig()
        self.noise = noise if noise is not None else NoiseConfig.zeroed()
        self.strategy = strategy_by_name(strategy) if isinstance(strategy, str) else strategy
        self.opponent = opponent
        self.learner_side = learner_side
        if not 0 < max_episode_steps <= self.match_config.match_steps:
            raise ConfigError("max_episode_steps must lie in (0, match_steps]")
        self.max_episode_steps = max_episode_steps
        self.disturbance_rate_hz = disturbance_rate_hz
        if reset_side not in ("random", "learner", "opponent"):
            raise ConfigError("reset_side must be 'random', 'learner', or 'opponent'")
        self.reset_side = reset_side
        self._no_noise = NoiseConfig.zeroed()
        self._rng = np.random.default_rng(seed)
        self._stacks = {s: ObservationStack.empty(s) for s in (Side.A, Side.B)}
        self.world: WorldState | None = None
        self._episode_steps = 0

    @property
    def observation_dim(self) -> int:
        return OBSERVATION_DIM

    @property
    def action_dim(self) -> int:
        return ACTION_DIM

    def spec(self) -> dict:
        return {
            "observation_dim": OBSERVATION_DIM,
            "action_dim": ACTION_DIM,
            "observation_low": -1.0,
            "observation_high": 1.0,
            "action_low": -1.0,
            "action_high": 1.0,
            "control_dt": CONTROL_DT,
        }

    def _serving_side(self) -> Side:
        if self.reset_side == "learner":
            return self.learner_side
        if self.reset_side == "opponent":
            return self.learner_side.other
        return Side.A if self._rng.random() < 0.5 else Side.B

    def reset(self, seed: int | None = None) -> np.ndarray:
        """Start a new episode; returns the learner's initial observation."""
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        home = home_joint_state(self.chain)
        mallets = tuple(
            mallet_from_joints(s, self.chain, home, self.table, self.geometry)
            for s in (Side.A, Side.B)
        )
        world = WorldState(
            puck=PuckState(),
            mallets=mallets,
            joints=(home.copy(), home.copy()),
            rng=self._rng,
        )
        world.puck = faceoff_puck(world, self.table, self.match_config, self._serving_side())
        if self.noise.disturbance_impulse_sigma > 0.0:
            world = apply_disturbance(world, self.noise, self._rng)
        self.world = world
        self._episode_steps = 0
        for side in (Side.A, Side.B):
            self._stacks[side].reset()
            self._observe_side(side)
        return self._stacks[self.learner_side].flat.copy()

    def _observe_side(self, side: Side) -> None:
        noise = self.noise if side is self.learner_side else self._no_noise
        observe(
            self.world,
            side,
            self.chain,
            self.table,
            self._stacks[side],
            noise,
            self._rng,
            self.match_config,
        )

    def opponent_stack(self) -> ObservationStack:
        return self._stacks[self.learner_side.other]

    def step(self, action):
        """Advance one control step with the learner's normalized action."""
        if self.world is None:
            raise RuntimeError("environment must be reset before stepping")
        opp_side = self.learner_side.other
        if self.opponent is not None:
            opp_action = self.opponent(self._stacks[opp_side], self._rng)
        else:
            opp_action = (0.0, 0.0)

        cmd = {
            self.learner_side: act(
                self.world, self.learner_side, action, self.chain, self.table,
                self.noise, self._rng, self.geometry,
            ),
            opp_side: act(
                self.world, opp_side, opp_action, self.chain, self.table,
                self._no_noise, self._rng, self.geometry,
            ),
        }
        if (
            self.disturbance_rate_hz > 0.0
            and self.noise.disturbance_impulse_sigma > 0.0
            and self._rng.random() < self.disturbance_rate_hz * CONTROL_DT
        ):
            self.world = apply_disturbance(self.world, self.noise, self._rng)

        self.world, events = advance_control_step(
            self.world, self.table, self.chain, self.geometry,
            (cmd[Side.A], cmd[Side.B]), self.match_config,
        )
        for side in (Side.A, Side.B):
            self._observe_side(side)

        exact = sum(
            (reward(e, self.learner_side, self.strategy) for e in events),
            start=Fraction(0),
        )
        terminated = any(e.kind in TERMINAL_KINDS for e in events)
        self._episode_steps += 1
        truncated = not terminated and (
            self._episode_steps >= self.max_episode_steps
            or any(e.kind is EventKind.MATCH_END for e in events)
        )
        info = {"events": events, "exact_reward": exact, "step_index": self.world.step_index}
        return (
            self._stacks[self.learner_side].flat.copy(),
            float(exact),
            terminated,
            truncated,
            info,
        )
