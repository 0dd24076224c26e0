"""Policies: frozen snapshots, scripted opponents, a small trainable network,
and the action-smoothing EMA filter.

Three snapshot kinds exist. `toy_learner` is a bounded two-layer network
(40 -> hidden -> 2, tanh throughout) trained with the cross-entropy method;
it stands in for a heavyweight learner so every training and self-play
contract can be exercised on a desktop CPU. `scripted_baseline` is the
documented rule policy used to bootstrap opponent pools, and
`scripted_variant` covers two additional playstyles (a passive blocker and
a stochastic jitterer) for opponent diversity.

Scripted baseline rule table (all quantities in the observer's own frame,
normalized units, own goal at x = -1, opponent goal center at (+1, 0)):

1. Puck on the opponent half            -> hold the home x-line, track puck y.
2. Puck on our half, out of reach       -> return to the home position.
3. Puck escaping toward the opponent    -> hold the home x-line, track puck y.
4. Mallet behind the puck and aligned   -> strike: drive through the puck
   (dx <= -0.03, |dy| <= 0.12)             along the puck-to-goal line.
5. Mallet beside/ahead, close in y      -> detour sideways to the staging
                                           point so the puck is never shoved
                                           toward our own goal.
6. Otherwise                            -> move to the staging point behind
                                           the puck on the puck-to-goal line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .env import ACTION_DIM, OBSERVATION_DIM, EnvGeometry, ObservationStack
from .errors import CheckpointError
from .physics import TableSpec

CHECKPOINT_MAGIC = "deskhockey-policy"
CHECKPOINT_FORMAT_VERSION = 1

KIND_SCRIPTED_BASELINE = "scripted_baseline"
KIND_SCRIPTED_VARIANT = "scripted_variant"
KIND_TOY_LEARNER = "toy_learner"

# scripted_variant parameter 0 selects the behavior.
VARIANT_BLOCKER = 0.0
VARIANT_JITTER = 1.0

TOY_HIDDEN_DEFAULT = 8


def toy_param_count(hidden: int = TOY_HIDDEN_DEFAULT) -> int:
    return hidden * OBSERVATION_DIM + hidden + ACTION_DIM * hidden + ACTION_DIM


def _declared_dims_ok(kind: str, n: int) -> bool:
    if kind == KIND_SCRIPTED_BASELINE:
        return n == 0
    if kind == KIND_SCRIPTED_VARIANT:
        return n == 2
    if kind == KIND_TOY_LEARNER:
        return n >= toy_param_count(1) and (n - ACTION_DIM) % (OBSERVATION_DIM + 1 + ACTION_DIM) == 0
    return False


@dataclass(frozen=True)
class PolicySnapshot:
    """Immutable policy parameters plus identifying metadata."""

    kind: str
    parameters: np.ndarray
    strategy: str = "balanced"
    episode: int = 0
    format_version: int = CHECKPOINT_FORMAT_VERSION

    def __post_init__(self):
        params = np.asarray(self.parameters, dtype=float).copy()
        params.setflags(write=False)
        object.__setattr__(self, "parameters", params)
        if not _declared_dims_ok(self.kind, params.size):
            raise CheckpointError(
                f"{self.kind}: parameter vector of length {params.size} does not match "
                "the kind's declared dimension"
            )

    @property
    def hidden(self) -> int:
        if self.kind != KIND_TOY_LEARNER:
            raise CheckpointError("hidden size only defined for toy_learner snapshots")
        return (self.parameters.size - ACTION_DIM) // (OBSERVATION_DIM + 1 + ACTION_DIM)


def baseline_snapshot(strategy: str = "balanced") -> PolicySnapshot:
    return PolicySnapshot(KIND_SCRIPTED_BASELINE, np.zeros(0), strategy=strategy)


def blocker_snapshot() -> PolicySnapshot:
    return PolicySnapshot(KIND_SCRIPTED_VARIANT, np.array([VARIANT_BLOCKER, 0.9]))


def jitter_snapshot(amplitude: float = 0.25) -> PolicySnapshot:
    return PolicySnapshot(KIND_SCRIPTED_VARIANT, np.array([VARIANT_JITTER, amplitude]))


def toy_snapshot(
    parameters, strategy: str = "balanced", episode: int = 0
) -> PolicySnapshot:
    return PolicySnapshot(KIND_TOY_LEARNER, parameters, strategy=strategy, episode=episode)


def _toy_forward(params: np.ndarray, obs: np.ndarray) -> tuple[float, float]:
    n = params.size
    hidden = (n - ACTION_DIM) // (OBSERVATION_DIM + 1 + ACTION_DIM)
    w1_end = hidden * OBSERVATION_DIM
    w1 = params[:w1_end].reshape(hidden, OBSERVATION_DIM)
    b1 = params[w1_end : w1_end + hidden]
    w2_end = w1_end + hidden + ACTION_DIM * hidden
    w2 = params[w1_end + hidden : w2_end].reshape(ACTION_DIM, hidden)
    b2 = params[w2_end:]
    h = np.tanh(w1 @ obs + b1)
    out = np.tanh(w2 @ h + b2)
    return float(out[0]), float(out[1])


class _Geom:
    """Cached mapping between table-normalized and action coordinates."""

    def __init__(self, table: TableSpec, geometry: EnvGeometry):
        self.x_lo, self.x_hi, self.y_lo, self.y_hi = geometry.workspace(table)
        self.half_length = table.half_length
        self.half_width = table.half_width
        # Front edge of the workspace in table-normalized x.
        self.reach_front = self.x_hi / self.half_length

    def action_from_table_norm(self, xn: float, yn: float) -> tuple[float, float]:
        x = xn * self.half_length
        y = yn * self.half_width
        ax = 2.0 * (x - self.x_lo) / (self.x_hi - self.x_lo) - 1.0
        ay = 2.0 * (y - self.y_lo) / (self.y_hi - self.y_lo) - 1.0
        return (min(max(ax, -1.0), 1.0), min(max(ay, -1.0), 1.0))


_DEFAULT_GEOM: _Geom | None = None


def _geom(table: TableSpec | None, geometry: EnvGeometry | None) -> _Geom:
    global _DEFAULT_GEOM
    if table is None and geometry is None:
        if _DEFAULT_GEOM is None:
            _DEFAULT_GEOM = _Geom(TableSpec(), EnvGeometry())
        return _DEFAULT_GEOM
    return _Geom(table or TableSpec(), geometry or EnvGeometry())


# Baseline tuning constants (normalized units).
_HOME_TABLE_X = -0.72  # home x in table-normalized coordinates
_ESCAPE_VX = 0.004  # per-step puck vx above which the puck counts as escaping
_STRIKE_OVERSHOOT = 0.35  # aim this far beyond the puck along the goal line
_BEHIND_GAP = 0.22  # approach point sits this far behind the puck
_STRIKE_OFF_DX = 0.03  # strike stays active while the mallet is behind by this
_CAPTURE_DY = 0.12  # alignment width of the strike zone
_DETOUR_Y = 0.35  # sidestep when a straight approach would barge the puck


def _goal_line_dir(px: float, py: float) -> tuple[float, float]:
    """Unit vector from the puck toward the opponent goal center (+1, 0)."""
    dx, dy = 1.0 - px, -py
    norm = math.hypot(dx, dy)
    return (1.0, 0.0) if norm < 1e-9 else (dx / norm, dy / norm)


def _baseline_action(obs: ObservationStack, geom: _Geom) -> tuple[float, float]:
    px, py = float(obs.puck[0]), float(obs.puck[1])
    qx = float(obs.puck_prev[0])
    mx, my = float(obs.own_mallet[0]), float(obs.own_mallet[1])
    vx = px - qx

    if px >= 0.0:
        return geom.action_from_table_norm(_HOME_TABLE_X, py)
    if px >= geom.reach_front:
        # On our half but inside the unreachable center band.
        return geom.action_from_table_norm(_HOME_TABLE_X, 0.0)
    if vx > _ESCAPE_VX:
        # Already heading back to the opponent: hold the defensive line.
        return geom.action_from_table_norm(_HOME_TABLE_X, py)

    dx_rel = mx - px
    dy_rel = my - py
    gx, gy = _goal_line_dir(px, py)
    if dx_rel <= -_STRIKE_OFF_DX and abs(dy_rel) <= _CAPTURE_DY:
        # Behind and aligned: drive through the puck toward the goal. The
        # condition stays true all the way to contact, so the lunge never
        # aborts halfway.
        return geom.action_from_table_norm(
            px + _STRIKE_OVERSHOOT * gx, py + _STRIKE_OVERSHOOT * gy
        )
    if dx_rel > -_STRIKE_OFF_DX and abs(dy_rel) < 0.18:
        # Beside or ahead of the puck: detour so the retreat cannot shove it
        # toward our own goal.
        side_step = _DETOUR_Y if dy_rel >= 0.0 else -_DETOUR_Y
        return geom.action_from_table_norm(px - _BEHIND_GAP * gx, py + side_step)
    # Clear path: move to the staging point behind the puck on the goal line.
    return geom.action_from_table_norm(px - _BEHIND_GAP * gx, py - _BEHIND_GAP * gy)


def _variant_action(
    params: np.ndarray, obs: ObservationStack, geom: _Geom, rng: np.random.Generator | None
) -> tuple[float, float]:
    variant = params[0]
    py = float(obs.puck[1])
    if variant == VARIANT_BLOCKER:
        gain = params[1]
        return geom.action_from_table_norm(_HOME_TABLE_X, gain * py)
    # Jitterer: blocker line with stochastic wander and occasional pokes.
    amplitude = params[1]
    jx = jy = 0.0
    if rng is not None:
        jx, jy = rng.normal(0.0, amplitude, 2)
    return geom.action_from_table_norm(_HOME_TABLE_X + abs(jx), py + jy)


def policy_act(
    snapshot: PolicySnapshot,
    obs: ObservationStack,
    rng: np.random.Generator | None = None,
    table: TableSpec | None = None,
    geometry: EnvGeometry | None = None,
) -> tuple[float, float]:
    """Action of a frozen policy on one observation, clamped to [-1, 1]^2.

    Deterministic given (snapshot, obs, rng state); the snapshot is never
    mutated. Scripted policies map between observation and action coordinates
    using the default table/workspace unless overridden.
    """
    flat = obs.flat if isinstance(obs, ObservationStack) else np.asarray(obs, dtype=float)
    if flat.shape != (OBSERVATION_DIM,):
        raise ValueError(f"observation must have length {OBSERVATION_DIM}, got {flat.shape}")
    if snapshot.kind == KIND_TOY_LEARNER:
        ax, ay = _toy_forward(snapshot.parameters, flat)
    else:
        stack = obs if isinstance(obs, ObservationStack) else _wrap_flat(flat)
        geom = _geom(table, geometry)
        if snapshot.kind == KIND_SCRIPTED_BASELINE:
            ax, ay = _baseline_action(stack, geom)
        else:
            ax, ay = _variant_action(snapshot.parameters, stack, geom, rng)
    return (min(max(ax, -1.0), 1.0), min(max(ay, -1.0), 1.0))


def _wrap_flat(flat: np.ndarray) -> ObservationStack:
    from .physics import Side

    return ObservationStack(flat=flat, side=Side.A, initialized=True)


def as_policy(
    snapshot: PolicySnapshot,
    table: TableSpec | None = None,
    geometry: EnvGeometry | None = None,
):
    """Bind a snapshot into the (stack, rng) -> action callable the env drives.

    The observation/action coordinate mapping is resolved once up front, so
    the returned callable is cheap enough for the 50 Hz loop.
    """
    geom = _geom(table, geometry)
    if snapshot.kind == KIND_TOY_LEARNER:
        params = snapshot.parameters

        def _fn(stack: ObservationStack, rng: np.random.Generator):
            return _toy_forward(params, stack.flat)

    elif snapshot.kind == KIND_SCRIPTED_BASELINE:

        def _fn(stack: ObservationStack, rng: np.random.Generator):
            return _baseline_action(stack, geom)

    else:
        params = snapshot.parameters

        def _fn(stack: ObservationStack, rng: np.random.Generator):
            return _variant_action(params, stack, geom, rng)

    return _fn


@dataclass(frozen=True)
class EmaFilterState:
    """Exponential moving average over emitted actions."""

    alpha: float
    last_output: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")


def ema_filter(state: EmaFilterState, action) -> tuple[EmaFilterState, tuple[float, float]]:
    """Smooth one action: out = alpha * action + (1 - alpha) * last output."""
    ax = state.alpha * float(action[0]) + (1.0 - state.alpha) * state.last_output[0]
    ay = state.alpha * float(action[1]) + (1.0 - state.alpha) * state.last_output[1]
    return replace(state, last_output=(ax, ay)), (ax, ay)


def smoothed_policy(policy, alpha: float):
    """Wrap a policy callable with an EMA filter (deployment smoothing)."""
    state = EmaFilterState(alpha)

    def _fn(stack: ObservationStack, rng: np.random.Generator):
        nonlocal state
        state, out = ema_filter(state, policy(stack, rng))
        return out

    return _fn


def save_snapshot(path, snapshot: PolicySnapshot) -> None:
    """Write the text checkpoint format (header + one decimal parameter per line)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"magic {CHECKPOINT_MAGIC}\n")
        fh.write(f"format_version {snapshot.format_version}\n")
        fh.write(f"kind {snapshot.kind}\n")
        fh.write(f"dims {snapshot.parameters.size}\n")
        fh.write(f"strategy {snapshot.strategy}\n")
        fh.write(f"episode {snapshot.episode}\n")
        for value in snapshot.parameters:
            fh.write(repr(float(value)) + "\n")


def load_snapshot(path) -> PolicySnapshot:
    """Read a checkpoint written by `save_snapshot`; round-trips bit-exactly."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header: dict[str, str] = {}
    idx = 0
    for idx, line in enumerate(lines):
        key, _, value = line.partition(" ")
        if key in ("magic", "format_version", "kind", "dims", "strategy", "episode"):
            header[key] = value
        else:
            break
    else:
        idx = len(lines)
    if header.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    if header.get("format_version") != str(CHECKPOINT_FORMAT_VERSION):
        raise CheckpointError(f"{path}: unsupported checkpoint format_version")
    try:
        dims = int(header["dims"])
        episode = int(header["episode"])
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint header") from exc
    values = [float(v) for v in lines[idx:] if v]
    if len(values) != dims:
        raise CheckpointError(f"{path}: expected {dims} parameters, found {len(values)}")
    return PolicySnapshot(
        kind=header["kind"],
        parameters=np.array(values),
        strategy=header.get("strategy", "balanced"),
        episode=episode,
    )


@dataclass(frozen=True)
class TrainerSettings:
    """Cross-entropy-method knobs for the toy learner.

    With `common_episode_seeds` every candidate of a generation is evaluated
    on the same episode seeds and opponent draws (common random numbers),
    which removes most of the fitness noise that otherwise swamps elite
    selection under sparse rewards.
    """

    population: int = 14
    elite_frac: float = 0.3
    sigma_init: float = 0.6
    sigma_floor: float = 0.04
    episodes_per_eval: int = 2
    hidden: int = TOY_HIDDEN_DEFAULT
    checkpoint_every: int = 1  # generations between emitted snapshots
    common_episode_seeds: bool = True
    # Reuse the same episode seeds across generations (a frozen evaluation
    # set): turns the fitness into a stationary function of the parameters.
    fixed_episode_seeds: bool = False
    # Early stop once the mean return plateaus: compare the last
    # `plateau_window` generations against the preceding window and stop when
    # the relative change drops below `plateau_rel_change`. None disables.
    plateau_window: int | None = None
    plateau_rel_change: float = 0.05


def run_episode(env, params: np.ndarray, opponent: PolicySnapshot, seed=None) -> float:
    """Roll one episode of the toy learner against `opponent`; returns the return."""
    env.opponent = as_policy(opponent, env.table, env.geometry)
    obs = env.reset(seed=seed)
    total = 0.0
    while True:
        action = _toy_forward(params, obs)
        obs, rew, terminated, truncated, _ = env.step(action)
        total += rew
        if terminated or truncated:
            return total


def _make_env(env_factory, index: int):
    try:
        return env_factory(index)
    except TypeError:
        return env_factory()


def train_toy_learner(
    env_factory,
    opponent_source,
    strategy: str,
    budget_episodes: int,
    rng: np.random.Generator,
    settings: TrainerSettings = TrainerSettings(),
    history: list | None = None,
    workers: int = 1,
) -> list[PolicySnapshot]:
    """Cross-entropy search over toy-learner parameters.

    Per generation, a population of parameter perturbations is evaluated on
    whole episodes against opponents drawn per episode from
    `opponent_source` (`sample(rng)`, drawn in candidate order before
    dispatch); after the generation the source is notified once per consumed
    episode, in order, so an opponent pool can grow on its schedule. With
    `workers` > 1 candidate evaluations run on that many env instances
    (candidate i on env i mod workers; `env_factory` may accept the worker
    index for per-instance seeding); results are identical for a fixed
    worker count regardless of thread scheduling.

    Emits the running mean as a snapshot every `checkpoint_every`
    generations, starting with the initial one. `history`, when given,
    collects (generation, mean_return, best_return) tuples.
    """
    if budget_episodes < 1:
        raise ValueError("budget_episodes must be >= 1")
    workers = max(1, workers)
    envs = [_make_env(env_factory, w) for w in range(workers)]
    dim = toy_param_count(settings.hidden)
    mu = np.zeros(dim)
    sigma = np.full(dim, settings.sigma_init)
    n_elite = max(1, int(round(settings.population * settings.elite_frac)))

    episodes_used = 0
    generation = 0
    snapshots = [toy_snapshot(mu, strategy, episode=0)]
    per_eval = settings.episodes_per_eval
    cost_per_gen = settings.population * per_eval
    frozen_seeds: list[int] | None = None
    gen_means: list[float] = []

    while episodes_used + cost_per_gen <= budget_episodes:
        generation += 1
        noise = rng.standard_normal((settings.population, dim))
        candidates = mu[None, :] + sigma[None, :] * noise
        if settings.common_episode_seeds:
            slot_opponents = [opponent_source.sample(rng) for _ in range(per_eval)]
            if settings.fixed_episode_seeds:
                if frozen_seeds is None:
                    frozen_seeds = [int(s) for s in rng.integers(0, 2**63 - 1, size=per_eval)]
                slot_seeds = frozen_seeds
            else:
                slot_seeds = [int(s) for s in rng.integers(0, 2**63 - 1, size=per_eval)]
            opponents = [slot_opponents] * settings.population
            seeds = [slot_seeds] * settings.population
        else:
            opponents = [
                [opponent_source.sample(rng) for _ in range(per_eval)]
                for _ in range(settings.population)
            ]
            seeds = [[None] * per_eval] * settings.population

        def _evaluate(worker: int) -> list[tuple[int, float]]:
            out = []
            for i in range(worker, settings.population, workers):
                total = 0.0
                for e in range(per_eval):
                    total += run_episode(
                        envs[worker], candidates[i], opponents[i][e], seeds[i][e]
                    )
                out.append((i, total / per_eval))
            return out

        returns = np.empty(settings.population)
        if workers == 1:
            for i, value in _evaluate(0):
                returns[i] = value
        else:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                for chunk in pool.map(_evaluate, range(workers)):
                    for i, value in chunk:
                        returns[i] = value

        for _ in range(cost_per_gen):
            episodes_used += 1
            opponent_source.after_episode(
                lambda: toy_snapshot(mu, strategy, episode=episodes_used), rng
            )
        elite_idx = np.argsort(returns)[-n_elite:]
        elite = candidates[elite_idx]
        mu = elite.mean(axis=0)
        sigma = elite.std(axis=0) + settings.sigma_floor
        gen_means.append(float(returns.mean()))
        if history is not None:
            history.append((generation, float(returns.mean()), float(returns.max())))
        if generation % settings.checkpoint_every == 0:
            snapshots.append(toy_snapshot(mu, strategy, episode=episodes_used))
        w = settings.plateau_window
        if w is not None and len(gen_means) >= 2 * w:
            recent = float(np.mean(gen_means[-w:]))
            previous = float(np.mean(gen_means[-2 * w : -w]))
            if abs(recent - previous) < settings.plateau_rel_change * max(abs(previous), 0.1):
                break
    return snapshots
