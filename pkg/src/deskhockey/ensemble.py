"""Score-aware strategy switching between balanced/aggressive/defensive play.

The ensemble never sees the referee's truth: it reconstructs the match score
from its own observation stream. Goals appear as a puck-position
discontinuity out of a goal mouth followed by a faceoff spawn; faults as a
saturated possession timer that resets; stuck resets as a discontinuity out
of the slow center band (score-neutral). Jumps right after a frozen
(tracking-lost) puck observation are left uncounted and flagged.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace

import numpy as np
import yaml

from .env import EnvGeometry, ObservationStack
from .errors import ConfigError
from .match import MatchConfig
from .physics import CONTROL_DT, TableSpec
from .policy import PolicySnapshot, as_policy, load_snapshot

ENSEMBLE_FORMAT_VERSION = 1

STRATEGY_NAMES = ("balanced", "aggressive", "defensive")
DEFAULT_DEFENSIVE_MARGIN = 3


@dataclass(frozen=True)
class ScoreEstimate:
    """Match score reconstructed from observations.

    Counters are never decremented; ambiguous transitions leave them
    unchanged and increment `ambiguous` (the low-confidence flag).
    """

    own_goals: int = 0
    opp_goals: int = 0
    own_faults: int = 0
    opp_faults: int = 0
    ambiguous: int = 0

    @property
    def own_points(self) -> int:
        return self.own_goals - self.own_faults // 3

    @property
    def opp_points(self) -> int:
        return self.opp_goals - self.opp_faults // 3

    @property
    def low_confidence(self) -> bool:
        return self.ambiguous > 0


@dataclass(frozen=True)
class EstimatorConfig:
    """Detection thresholds in normalized observation units."""

    jump_x: float
    jump_y: float
    mouth_x: float
    mouth_y: float
    center_x: float
    slow_step: float
    goal_speed: float
    timer_sat: float
    timer_small: float = 0.1

    @classmethod
    def from_specs(
        cls, table: TableSpec | None = None, match_config: MatchConfig | None = None
    ) -> "EstimatorConfig":
        table = table if table is not None else TableSpec()
        match_config = match_config if match_config is not None else MatchConfig()
        travel_x = table.max_speed * CONTROL_DT / table.half_length
        travel_y = table.max_speed * CONTROL_DT / table.half_width
        return cls(
            jump_x=max(1.5 * travel_x, 0.22),
            jump_y=max(1.5 * travel_y, 0.4),
            mouth_x=1.0 - travel_x - 0.015,
            mouth_y=(table.goal_width / 2.0) / table.half_width + travel_y,
            center_x=match_config.stuck_band_halfwidth / table.half_length + travel_x,
            slow_step=0.005,
            goal_speed=0.01,
            timer_sat=(match_config.fault_limit_steps - 1.5) / match_config.fault_limit_steps,
        )


_PUCK_X, _PUCK_Y = 15, 16
_TIMER = 39


def update_score_estimate(
    est: ScoreEstimate, window, config: EstimatorConfig
) -> ScoreEstimate:
    """Fold the newest observation transition of `window` into the estimate.

    `window` is a sequence of consecutive flat observations, oldest first,
    of length two or three; the third-from-last entry, when present, guards
    against counting reset-like jumps that follow a tracking-loss freeze.
    """
    if len(window) < 2:
        return est
    o1, o2 = window[-2], window[-1]
    o0 = window[-3] if len(window) >= 3 else None

    p1x, p1y, t1 = o1[_PUCK_X], o1[_PUCK_Y], o1[_TIMER]
    p2x, p2y, t2 = o2[_PUCK_X], o2[_PUCK_Y], o2[_TIMER]
    jump = abs(p2x - p1x) > config.jump_x or abs(p2y - p1y) > config.jump_y
    # A fault respawns the puck on the faulting side, so possession restarts
    # with the same timer sign; an ordinary centerline crossing flips it.
    timer_reset = (
        abs(t1) >= config.timer_sat
        and abs(t2) <= config.timer_small
        and (t1 * t2 > 0.0 or t2 == 0.0)
    )
    if not jump and not timer_reset:
        return est

    if o0 is not None:
        step_x = p1x - o0[_PUCK_X]
        step_y = p1y - o0[_PUCK_Y]
        frozen = step_x == 0.0 and step_y == 0.0
    else:
        step_x = step_y = 0.0
        frozen = False

    in_opp_mouth = p1x >= config.mouth_x and abs(p1y) <= config.mouth_y
    in_own_mouth = p1x <= -config.mouth_x and abs(p1y) <= config.mouth_y
    saturated = abs(t1) >= config.timer_sat

    if in_opp_mouth and (not saturated or step_x >= config.goal_speed):
        if frozen:
            return replace(est, ambiguous=est.ambiguous + 1)
        return replace(est, own_goals=est.own_goals + 1)
    if in_own_mouth and (not saturated or step_x <= -config.goal_speed):
        if frozen:
            return replace(est, ambiguous=est.ambiguous + 1)
        return replace(est, opp_goals=est.opp_goals + 1)
    if timer_reset:
        # The possession timer is referee truth (it survives tracking loss),
        # so faults are counted even after a frozen stretch.
        if t1 < 0.0:
            return replace(est, own_faults=est.own_faults + 1)
        return replace(est, opp_faults=est.opp_faults + 1)
    if frozen:
        return replace(est, ambiguous=est.ambiguous + 1)
    if abs(p1x) <= config.center_x and math.hypot(step_x, step_y) <= config.slow_step:
        return est  # stuck-puck reset: score-neutral
    return replace(est, ambiguous=est.ambiguous + 1)


class ScoreEstimator:
    """Stateful wrapper feeding an observation stream into the estimate."""

    def __init__(self, config: EstimatorConfig | None = None):
        self.config = config if config is not None else EstimatorConfig.from_specs()
        self.estimate = ScoreEstimate()
        self._window: list[np.ndarray] = []

    def push(self, flat_obs: np.ndarray) -> ScoreEstimate:
        self._window.append(np.asarray(flat_obs, dtype=float).copy())
        if len(self._window) > 3:
            del self._window[0]
        self.estimate = update_score_estimate(self.estimate, self._window, self.config)
        return self.estimate

    def reset_window(self) -> None:
        """Drop continuity across an externally known boundary (e.g. arm re-home)."""
        self._window.clear()


def select_strategy(est: ScoreEstimate, margin: int = DEFAULT_DEFENSIVE_MARGIN) -> str:
    """Playstyle for the current score: behind -> aggressive, far ahead ->
    defensive, otherwise balanced."""
    if est.opp_points > est.own_points:
        return "aggressive"
    if est.own_points - est.opp_points >= margin:
        return "defensive"
    return "balanced"


class EnsemblePolicy:
    """Three frozen policies with score-driven switching at faceoffs only."""

    def __init__(
        self,
        snapshots: dict[str, PolicySnapshot],
        margin: int = DEFAULT_DEFENSIVE_MARGIN,
        table: TableSpec | None = None,
        geometry: EnvGeometry | None = None,
        match_config: MatchConfig | None = None,
    ):
        missing = [s for s in STRATEGY_NAMES if s not in snapshots]
        if missing:
            raise ConfigError(f"ensemble needs snapshots for {missing}")
        self.snapshots = dict(snapshots)
        self.margin = margin
        self._policies = {
            name: as_policy(snap, table, geometry) for name, snap in snapshots.items()
        }
        self.estimator = ScoreEstimator(EstimatorConfig.from_specs(table, match_config))
        self.active_strategy = "balanced"

    def __call__(self, stack: ObservationStack, rng: np.random.Generator):
        self.estimator.push(stack.flat)
        return self._policies[self.active_strategy](stack, rng)

    def reset_episode(self) -> None:
        """Faceoff boundary: re-select the strategy from the estimated score.

        The window is kept across the boundary on purpose: the event that
        ended the episode only becomes observable as the faceoff jump in the
        first post-reset observation, so it enters the estimate right after
        this switch and influences the next one.
        """
        self.active_strategy = select_strategy(self.estimator.estimate, self.margin)

    @property
    def estimate(self) -> ScoreEstimate:
        return self.estimator.estimate


def load_ensemble_manifest(
    path,
    table: TableSpec | None = None,
    geometry: EnvGeometry | None = None,
    match_config: MatchConfig | None = None,
) -> EnsemblePolicy:
    """Build an EnsemblePolicy from a manifest: three checkpoint paths + margin."""
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict) or data.get("format_version") != ENSEMBLE_FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported ensemble manifest")
    base = os.path.dirname(str(path))
    missing = [name for name in STRATEGY_NAMES if name not in data]
    if missing:
        raise ConfigError(f"{path}: manifest missing checkpoint paths for {missing}")
    snapshots = {}
    for name in STRATEGY_NAMES:
        ckpt = data[name]
        snapshots[name] = load_snapshot(ckpt if os.path.isabs(ckpt) else os.path.join(base, ckpt))
    margin = int(data.get("defensive_margin", DEFAULT_DEFENSIVE_MARGIN))
    return EnsemblePolicy(snapshots, margin, table, geometry, match_config)
