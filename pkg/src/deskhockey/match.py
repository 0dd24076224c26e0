"""Match rules: possession/fault clocks, stuck-puck resets, scoring, termination.

`update_rules` is the 50 Hz state machine applied after the physics substeps
of every control step. It owns the puck-side possession counters, fires
faults after 15 s of one-sided possession (750 control steps), resets a
stalled puck that neither arm can reach, and terminates the match after the
configured number of steps. Arm re-homing on episode boundaries is the
environment layer's job; this module only moves the puck.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .errors import ConfigError
from .physics import (
    CONTROL_DT,
    PuckState,
    Side,
    TableSpec,
    WorldState,
    detect_goal,
    possession_side,
)


class EventKind(enum.Enum):
    GOAL = "goal"
    FAULT = "fault"
    STUCK_RESET = "stuck_reset"
    EPISODE_END = "episode_end"
    MATCH_END = "match_end"

    def __str__(self) -> str:
        return self.value


# Kinds that terminate a training episode.
TERMINAL_KINDS = frozenset({EventKind.GOAL, EventKind.FAULT, EventKind.STUCK_RESET})


@dataclass(frozen=True)
class MatchEvent:
    """One scoring-relevant event.

    `side` is the penalized side for goals (the side scored against) and
    faults (the side that committed it); for stuck resets it is the side the
    puck was handed to, and None for episode/match boundaries.
    """

    kind: EventKind
    side: Side | None
    step_index: int


@dataclass(frozen=True)
class MatchConfig:
    """Rule constants; the defaults realize the 15-minute 50 Hz match."""

    match_steps: int = 45000
    fault_limit_steps: int = 750  # 15 s of possession at 50 Hz
    stuck_speed_threshold: float = 0.01  # m/s
    stuck_duration_steps: int = 150  # 3 s at 50 Hz
    stuck_band_halfwidth: float = 0.2  # m, center band outside both workspaces
    faceoff_x_fraction: float = 0.25  # faceoff at +-length * fraction
    faceoff_jitter: float = 0.02  # m, std of seeded spawn jitter
    faceoff_spin_sigma: float = 3.0  # rad/s, seeded initial puck spin

    def __post_init__(self):
        if self.match_steps <= 0 or self.fault_limit_steps <= 0:
            raise ConfigError("step counts must be positive")

    @property
    def fault_limit_s(self) -> float:
        return self.fault_limit_steps * CONTROL_DT


def faceoff_puck(world: WorldState, table: TableSpec, config: MatchConfig, serving: Side) -> PuckState:
    """Fresh puck at the serving side's faceoff spot with seeded jitter and spin."""
    rng = world.rng
    x = serving.sign * table.length * config.faceoff_x_fraction
    y = 0.0
    if rng is not None and config.faceoff_jitter > 0.0:
        jx, jy = rng.normal(0.0, config.faceoff_jitter, size=2)
        x += jx
        y += jy
        # Stay on the serving half, clear of walls.
        margin = table.puck_radius * 2.0
        if serving is Side.A:
            x = min(max(x, -table.half_length + margin), -margin)
        else:
            x = max(min(x, table.half_length - margin), margin)
        y = min(max(y, -table.half_width + margin), table.half_width - margin)
    angle = float(rng.uniform(-math.pi, math.pi)) if rng is not None else 0.0
    omega = float(rng.normal(0.0, config.faceoff_spin_sigma)) if rng is not None else 0.0
    return PuckState(x=x, y=y, vx=0.0, vy=0.0, angle=angle, angular_velocity=omega)


def update_rules(
    world: WorldState, table: TableSpec, config: MatchConfig = MatchConfig()
) -> tuple[WorldState, list[MatchEvent]]:
    """Advance the rules clock by one control step and emit any events.

    Must be called exactly once per 50 Hz control step, after physics. The
    step index increments here; events carry the post-increment index. Once
    `match_steps` is reached no further updates are accepted.
    """
    if world.step_index >= config.match_steps:
        raise ValueError("match already ended; no further rule updates accepted")
    world.step_index += 1
    events: list[MatchEvent] = []

    scored_on = detect_goal(world.puck, table)
    if scored_on is not None:
        events.append(MatchEvent(EventKind.GOAL, scored_on, world.step_index))
        world.puck = faceoff_puck(world, table, config, serving=scored_on)
        world.fault_steps = (0, 0)
        world.stuck_steps = 0
    else:
        side = possession_side(world.puck)
        if side is None:
            world.fault_steps = (0, 0)
        else:
            steps = world.fault_steps[side.index] + 1
            world.fault_steps = (steps, 0) if side is Side.A else (0, steps)
            if steps >= config.fault_limit_steps:
                events.append(MatchEvent(EventKind.FAULT, side, world.step_index))
                world.puck = faceoff_puck(world, table, config, serving=side)
                world.fault_steps = (0, 0)
                world.stuck_steps = 0

        if not events:
            stalled = (
                world.puck.speed < config.stuck_speed_threshold
                and abs(world.puck.x) < config.stuck_band_halfwidth
            )
            world.stuck_steps = world.stuck_steps + 1 if stalled else 0
            if world.stuck_steps >= config.stuck_duration_steps:
                serving = Side.A if world.rng is None or world.rng.random() < 0.5 else Side.B
                events.append(MatchEvent(EventKind.STUCK_RESET, serving, world.step_index))
                world.puck = faceoff_puck(world, table, config, serving=serving)
                world.fault_steps = (0, 0)
                world.stuck_steps = 0

    if world.step_index >= config.match_steps:
        events.append(MatchEvent(EventKind.MATCH_END, None, world.step_index))
    return world, events


@dataclass
class MatchResult:
    """Tallied outcome of a finished match: points = goals - faults // 3."""

    goals: dict[Side, int] = field(default_factory=lambda: {Side.A: 0, Side.B: 0})
    faults: dict[Side, int] = field(default_factory=lambda: {Side.A: 0, Side.B: 0})
    event_log: list[MatchEvent] = field(default_factory=list)

    def points(self, side: Side) -> int:
        return self.goals[side] - self.faults[side] // 3

    @property
    def points_a(self) -> int:
        return self.points(Side.A)

    @property
    def points_b(self) -> int:
        return self.points(Side.B)


def score_match(log: list[MatchEvent]) -> MatchResult:
    """Tally a complete event log. The log must end with a match_end event."""
    if not log or log[-1].kind is not EventKind.MATCH_END:
        raise ValueError("malformed event log: missing terminal match_end event")
    last = -1
    for event in log:
        if event.step_index < last:
            raise ValueError("malformed event log: step indices must be monotone")
        last = event.step_index
    result = MatchResult(event_log=list(log))
    for event in log:
        if event.kind is EventKind.GOAL:
            result.goals[event.side.other] += 1
        elif event.kind is EventKind.FAULT:
            result.faults[event.side] += 1
    return result


def write_event_log(path, events: list[MatchEvent], header: dict[str, str]) -> None:
    """Persist a replay log: '# key value' header lines, then 'step kind side' records."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in header.items():
            fh.write(f"# {key} {value}\n")
        for event in events:
            side = event.side.value if event.side is not None else "none"
            fh.write(f"{event.step_index} {event.kind.value} {side}\n")


def read_event_log(path) -> tuple[list[MatchEvent], dict[str, str]]:
    """Inverse of `write_event_log`."""
    events: list[MatchEvent] = []
    header: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("# "):
                key, _, value = line[2:].partition(" ")
                header[key] = value
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"malformed replay record: {line!r}")
            step, kind, side = parts
            events.append(
                MatchEvent(
                    EventKind(kind),
                    None if side == "none" else Side(side),
                    int(step),
                )
            )
    return events, header
