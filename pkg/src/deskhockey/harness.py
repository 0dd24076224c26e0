"""Operational surface: match and tournament runners, training orchestration,
replay verification, and the per-step compute benchmark.

Every run writes one output directory holding a config snapshot, delimited
results, replay logs, and rendered figures, so any result can be re-checked
(`replay-verify`) or inspected without re-running.
"""

from __future__ import annotations

import hashlib
import io
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import yaml

from . import report
from .env import (
    AirHockeyEnv,
    EnvGeometry,
    NoiseConfig,
    ObservationStack,
    act,
    advance_control_step,
    home_joint_state,
    load_noise,
    mallet_from_joints,
    observe,
)
from .ensemble import load_ensemble_manifest
from .errors import ConfigError, ReplayVerificationError
from .kinematics import KinematicChain, default_chain, load_chain
from .match import (
    TERMINAL_KINDS,
    EventKind,
    MatchConfig,
    MatchResult,
    faceoff_puck,
    score_match,
)
from .physics import Side, TableSpec, WorldState, default_table, load_table
from .policy import (
    TrainerSettings,
    baseline_snapshot,
    blocker_snapshot,
    jitter_snapshot,
    as_policy,
    load_snapshot,
    save_snapshot,
    smoothed_policy,
    train_toy_learner,
)
from .selfplay import (
    CHECKPOINTS_PER_STRATEGY,
    STAGE2_STRATEGIES,
    OpponentPool,
    SelfPlayOpponents,
    bootstrap_stage2,
    evenly_spaced_checkpoints,
    save_pool,
)

REPLAY_FORMAT = "deskhockey-replay 1"
CONTROL_BUDGET_MS = 20.0  # the 50 Hz cycle budget mirrored as a report metric

OUTPUT_DIR_ENV = "DESKHOCKEY_OUTPUT_DIR"
WORKERS_ENV = "DESKHOCKEY_WORKERS"


@dataclass
class RunConfig:
    """Everything a run needs; a single seed determines single-worker runs."""

    seed: int = 0
    table_path: str | None = None
    chain_path: str | None = None
    noise_path: str | None = None
    strategy: str = "balanced"
    policies: list[str] = field(default_factory=list)
    match_steps: int = 45000
    matches: int = 1
    workers: int = 1
    output_dir: str = "runs/run"
    # training knobs
    budget_episodes: int = 600
    max_episode_steps: int = 1500
    pool_add_interval: int = 1000
    pool_capacity: int = 25
    population: int = 14
    hidden: int = 8
    checkpoint_every: int = 1
    train_noise: bool = True
    plateau_window: int | None = None  # generations; None trains to budget

    def __post_init__(self):
        env_out = os.environ.get(OUTPUT_DIR_ENV)
        if env_out:
            self.output_dir = os.path.join(env_out, os.path.basename(self.output_dir))
        env_workers = os.environ.get(WORKERS_ENV)
        if env_workers:
            try:
                self.workers = max(1, int(env_workers))
            except ValueError:
                raise ConfigError(f"{WORKERS_ENV} must be an integer") from None


@dataclass(frozen=True)
class Setup:
    """Resolved specs shared by one run."""

    table: TableSpec
    chain: KinematicChain
    noise: NoiseConfig
    geometry: EnvGeometry
    match_config: MatchConfig


def load_setup(config: RunConfig) -> Setup:
    table = load_table(config.table_path) if config.table_path else default_table()
    chain = load_chain(config.chain_path) if config.chain_path else default_chain()
    noise = load_noise(config.noise_path) if config.noise_path else NoiseConfig()
    match_config = MatchConfig(match_steps=config.match_steps)
    return Setup(table, chain, noise, EnvGeometry(), match_config)


def fingerprint(data) -> str:
    """Stable 16-hex digest of any YAML-serializable structure."""
    text = yaml.safe_dump(data, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def setup_fingerprints(setup: Setup) -> dict[str, str]:
    chain = setup.chain
    chain_repr = {
        "axes": chain.axes.tolist(),
        "origins": [
            {"rotation": t.rotation.tolist(), "translation": t.translation.tolist()}
            for t in chain.origins
        ],
        "pos_limits": chain.joint_pos_limits.tolist(),
        "vel_limits": chain.joint_vel_limits.tolist(),
        "mallet_offset": {
            "rotation": chain.mallet_offset.rotation.tolist(),
            "translation": chain.mallet_offset.translation.tolist(),
        },
        "home": None if chain.home_joints is None else chain.home_joints.tolist(),
    }
    return {
        "table": fingerprint(asdict(setup.table)),
        "chain": fingerprint(chain_repr),
        "match": fingerprint(asdict(setup.match_config)),
    }


class NamedPolicy:
    """A display name plus a fresh-state policy callable for one match."""

    def __init__(self, name: str, fn, reset_episode=None):
        self.name = name
        self._fn = fn
        self._reset = reset_episode

    def __call__(self, stack, rng):
        return self._fn(stack, rng)

    def reset_episode(self):
        if self._reset is not None:
            self._reset()
        elif hasattr(self._fn, "reset_episode"):
            self._fn.reset_episode()


def resolve_policy(spec: str, setup: Setup):
    """Policy factory from a spec string.

    Accepted forms: `scripted:baseline`, `scripted:blocker`,
    `scripted:jitter`, `ckpt:<checkpoint path>`, `ensemble:<manifest path>`,
    `none` (hold the home position), and `ema:<alpha>:<inner spec>` to wrap
    any of these with the action-smoothing filter. Returns a zero-argument
    factory producing a fresh NamedPolicy per match.
    """
    kind, _, arg = spec.partition(":")
    table, geometry = setup.table, setup.geometry

    if kind == "ema":
        alpha_text, _, inner_spec = arg.partition(":")
        try:
            alpha = float(alpha_text)
        except ValueError:
            raise ConfigError(f"ema policy spec needs a numeric alpha, got {alpha_text!r}") from None
        if not inner_spec:
            raise ConfigError("ema policy spec needs an inner policy, e.g. ema:0.3:scripted:baseline")
        make_inner = resolve_policy(inner_spec, setup)

        def _make_ema():
            inner = make_inner()
            return NamedPolicy(
                spec,
                smoothed_policy(inner, alpha),
                reset_episode=inner.reset_episode,
            )

        return _make_ema

    if kind == "none":
        # Do-nothing: hold the home mallet position forever.
        home = home_joint_state(setup.chain)
        m = mallet_from_joints(Side.A, setup.chain, home, table, geometry)
        x_lo, x_hi, y_lo, y_hi = geometry.workspace(table)
        hold = (
            2.0 * (m.x - x_lo) / (x_hi - x_lo) - 1.0,
            2.0 * (m.y - y_lo) / (y_hi - y_lo) - 1.0,
        )
        return lambda: NamedPolicy(spec, lambda stack, rng: hold)
    if kind == "scripted":
        makers = {
            "baseline": baseline_snapshot,
            "blocker": blocker_snapshot,
            "jitter": jitter_snapshot,
        }
        if arg not in makers:
            raise ConfigError(f"unknown scripted policy {arg!r}; expected {sorted(makers)}")
        snap = makers[arg]()
        return lambda: NamedPolicy(spec, as_policy(snap, table, geometry))
    if kind == "ckpt":
        snap = load_snapshot(arg)
        return lambda: NamedPolicy(spec, as_policy(snap, table, geometry))
    if kind == "ensemble":
        def _make():
            policy = load_ensemble_manifest(arg, table, geometry, setup.match_config)
            return NamedPolicy(spec, policy, reset_episode=policy.reset_episode)

        return _make
    raise ConfigError(f"unknown policy spec {spec!r}")


def simulate_match(
    setup: Setup,
    policy_a,
    policy_b,
    seed: int,
    collect_latency: bool = False,
    observers: dict[Side, object] | None = None,
) -> tuple[MatchResult, np.ndarray]:
    """Drive one full match between two policies; noise-free and symmetric.

    Deterministic in `seed`: the single generator owns every stochastic
    element (faceoffs, stuck resets, scripted-policy randomness). Returns the
    scored result and, when requested, per-control-step wall-clock latencies
    in milliseconds. `observers` callbacks receive a side's observation stack
    after every observation, seeing exactly the stream that side's agent sees.
    """
    table, chain, geometry, match_config = (
        setup.table,
        setup.chain,
        setup.geometry,
        setup.match_config,
    )
    rng = np.random.default_rng(seed)
    home = home_joint_state(chain)
    home_mallets = tuple(
        mallet_from_joints(s, chain, home, table, geometry) for s in (Side.A, Side.B)
    )
    world = WorldState(
        puck=None,  # set below once the rng exists on the world
        mallets=home_mallets,
        joints=(home.copy(), home.copy()),
        rng=rng,
    )
    serving = Side.A if rng.random() < 0.5 else Side.B
    world.puck = faceoff_puck(world, table, match_config, serving)

    quiet = NoiseConfig.zeroed()
    stacks = {s: ObservationStack.empty(s) for s in (Side.A, Side.B)}
    policies = {Side.A: policy_a, Side.B: policy_b}
    for side in (Side.A, Side.B):
        observe(world, side, chain, table, stacks[side], quiet, rng, match_config)
        if observers and side in observers:
            observers[side](stacks[side])

    all_events = []
    latencies = np.empty(match_config.match_steps) if collect_latency else None
    step = 0
    while True:
        t0 = time.perf_counter_ns() if collect_latency else 0
        commands = []
        for side in (Side.A, Side.B):
            action = policies[side](stacks[side], rng)
            commands.append(
                act(world, side, action, chain, table, quiet, rng, geometry)
            )
        world, events = advance_control_step(
            world, table, chain, geometry, (commands[0], commands[1]), match_config
        )
        terminal = False
        for event in events:
            all_events.append(event)
            terminal = terminal or event.kind in TERMINAL_KINDS
        if terminal:
            world.joints = (home.copy(), home.copy())
            world.mallets = home_mallets
            for side in (Side.A, Side.B):
                stacks[side].reset()
                policies[side].reset_episode()
        for side in (Side.A, Side.B):
            observe(world, side, chain, table, stacks[side], quiet, rng, match_config)
            if observers and side in observers:
                observers[side](stacks[side])
        if collect_latency:
            latencies[step] = (time.perf_counter_ns() - t0) / 1e6
        step += 1
        if all_events and all_events[-1].kind is EventKind.MATCH_END:
            break
    return score_match(all_events), latencies if collect_latency else np.empty(0)


def replay_header(setup: Setup, seed: int, policy_a: str, policy_b: str) -> dict[str, str]:
    prints = setup_fingerprints(setup)
    return {
        "format": REPLAY_FORMAT,
        "seed": str(seed),
        "table": prints["table"],
        "chain": prints["chain"],
        "match": prints["match"],
        "policy_a": policy_a,
        "policy_b": policy_b,
    }


def render_event_log(events, header: dict[str, str]) -> str:
    buf = io.StringIO()
    for key, value in header.items():
        buf.write(f"# {key} {value}\n")
    for event in events:
        side = event.side.value if event.side is not None else "none"
        buf.write(f"{event.step_index} {event.kind.value} {side}\n")
    return buf.getvalue()


def run_match(config: RunConfig, policy_a: str, policy_b: str) -> list[MatchResult]:
    """Play `config.matches` matches of policy_a (side A) vs policy_b (side B).

    Writes per-match replay logs, a results CSV with latency percentiles,
    and an event-timeline figure for the first match.
    """
    setup = load_setup(config)
    make_a = resolve_policy(policy_a, setup)
    make_b = resolve_policy(policy_b, setup)
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    _write_config_snapshot(config, setup, {"policy_a": policy_a, "policy_b": policy_b})

    results = []
    rows = []
    for i in range(config.matches):
        seed = int(np.random.SeedSequence([config.seed, i]).generate_state(1)[0])
        result, lat = simulate_match(setup, make_a(), make_b(), seed, collect_latency=True)
        results.append(result)
        header = replay_header(setup, seed, policy_a, policy_b)
        with open(os.path.join(out, f"replay_{i:03d}.log"), "w", encoding="utf-8") as fh:
            fh.write(render_event_log(result.event_log, header))
        rows.append(
            [
                i,
                seed,
                result.points_a,
                result.points_b,
                result.goals[Side.A],
                result.goals[Side.B],
                result.faults[Side.A],
                result.faults[Side.B],
                round(float(np.percentile(lat, 50)), 4),
                round(float(np.percentile(lat, 99)), 4),
            ]
        )
        if i == 0:
            report.match_timeline_figure(
                result.event_log,
                setup.match_config.match_steps,
                os.path.join(out, "figures", "match_000_timeline.png"),
            )
    report.write_csv(
        os.path.join(out, "results.csv"),
        [
            "match", "seed", "points_a", "points_b", "goals_a", "goals_b",
            "faults_a", "faults_b", "latency_p50_ms", "latency_p99_ms",
        ],
        rows,
    )
    return results


def _stable_policy_seed(base_seed: int, name_a: str, name_b: str, repeat: int) -> int:
    digest = hashlib.sha256(
        f"{base_seed}|{name_a}|{name_b}|{repeat}".encode()
    ).digest()
    return int.from_bytes(digest[:8], "big")


def run_tournament(config: RunConfig, policies: list[str] | None = None):
    """Double round-robin: every ordered pair plays `config.matches` matches.

    Match seeds derive from the participant names, so the resulting table is
    invariant to the listing order (up to row order). Returns the list of
    per-match rows; writes results.csv, a summary.csv of mean points, and a
    heatmap figure.
    """
    setup = load_setup(config)
    names = policies if policies is not None else config.policies
    if len(names) < 2:
        raise ConfigError("a tournament needs at least 2 policies")
    factories = {name: resolve_policy(name, setup) for name in names}
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    _write_config_snapshot(config, setup, {"policies": list(names)})

    jobs = [
        (name_a, name_b, k)
        for name_a in names
        for name_b in names
        if name_a != name_b
        for k in range(config.matches)
    ]

    def _play(job):
        name_a, name_b, k = job
        seed = _stable_policy_seed(config.seed, name_a, name_b, k)
        result, _ = simulate_match(setup, factories[name_a](), factories[name_b](), seed)
        return (name_a, name_b, k, seed, result)

    if config.workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_play, jobs))
    else:
        outcomes = [_play(job) for job in jobs]

    rows = []
    totals = {name: 0 for name in names}
    sums = {(a, b): [0, 0, 0] for a in names for b in names}  # pts_row, pts_col, n
    for name_a, name_b, k, seed, result in outcomes:
        pa, pb = result.points_a, result.points_b
        rows.append([name_a, name_b, k, seed, pa, pb])
        totals[name_a] += pa
        totals[name_b] += pb
        sums[(name_a, name_b)][0] += pa
        sums[(name_a, name_b)][1] += pb
        sums[(name_a, name_b)][2] += 1
        sums[(name_b, name_a)][0] += pb
        sums[(name_b, name_a)][1] += pa
        sums[(name_b, name_a)][2] += 1

    report.write_csv(
        os.path.join(out, "results.csv"),
        ["policy_a", "policy_b", "repeat", "seed", "points_a", "points_b"],
        rows,
    )
    matrix = np.zeros((len(names), len(names)))
    summary_rows = []
    for i, a in enumerate(names):
        for j, b in enumerate(names):
            if i == j:
                continue
            pts, opp_pts, n = sums[(a, b)]
            matrix[i, j] = pts / n
            summary_rows.append([a, b, round(pts / n, 3), round(opp_pts / n, 3), n])
    report.write_csv(
        os.path.join(out, "summary.csv"),
        ["policy", "opponent", "mean_points_for", "mean_points_against", "matches"],
        sorted(summary_rows),
    )
    report.write_csv(
        os.path.join(out, "totals.csv"),
        ["policy", "total_points"],
        sorted(totals.items(), key=lambda kv: -kv[1]),
    )
    report.tournament_heatmap_figure(
        list(names), matrix, os.path.join(out, "figures", "tournament_heatmap.png")
    )
    return rows


def make_env_factory(
    config: RunConfig,
    setup: Setup,
    strategy: str,
    seed_root: np.random.SeedSequence,
    reset_side: str = "random",
):
    """Environment factory for training; worker index selects a child seed."""
    noise = setup.noise if config.train_noise else NoiseConfig.zeroed()
    children = seed_root.spawn(max(1, config.workers))

    def _factory(worker: int = 0):
        return AirHockeyEnv(
            table=setup.table,
            chain=setup.chain,
            geometry=setup.geometry,
            match_config=setup.match_config,
            noise=noise,
            strategy=strategy,
            seed=int(children[worker % len(children)].generate_state(1)[0]),
            max_episode_steps=config.max_episode_steps,
            reset_side=reset_side,
        )

    return _factory


def _save_checkpoints(directory, snapshots) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i, snap in enumerate(snapshots):
        path = os.path.join(directory, f"ckpt_{i:04d}_ep{snap.episode:06d}.ckpt")
        save_snapshot(path, snap)
        paths.append(path)
    return paths


def run_training(config: RunConfig, strategy: str = "balanced", stage: int = 1) -> str:
    """Train toy learners with fictitious self-play.

    Stage 1 trains one agent per shipped strategy against a pool seeded with
    the scripted baseline, keeping every checkpoint. Stage 2 rebuilds a
    25-opponent pool from the baseline plus eight evenly spaced stage-1
    checkpoints per strategy, then trains a fresh balanced agent against it.
    Returns the checkpoint directory; writes learning curves and the pool
    manifest.
    """
    setup = load_setup(config)
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    _write_config_snapshot(config, setup, {"stage": stage, "strategy": strategy})
    trainer = TrainerSettings(
        population=config.population,
        hidden=config.hidden,
        checkpoint_every=config.checkpoint_every,
        plateau_window=config.plateau_window,
    )
    histories: dict[str, list] = {}

    if stage == 1:
        for i, strat in enumerate(STAGE2_STRATEGIES):
            pool = OpponentPool(
                members=(baseline_snapshot(),),
                add_interval=config.pool_add_interval,
                capacity=config.pool_capacity,
            )
            source = SelfPlayOpponents(pool)
            train_seed = np.random.default_rng(
                np.random.SeedSequence([config.seed, 1000 + i])
            )
            factory = make_env_factory(
                config, setup, strat, np.random.SeedSequence([config.seed, i])
            )
            history: list = []
            snapshots = train_toy_learner(
                factory,
                source,
                strat,
                config.budget_episodes,
                train_seed,
                trainer,
                history=history,
                workers=config.workers,
            )
            histories[strat] = history
            _save_checkpoints(os.path.join(out, "stage1", strat), snapshots)
            report.write_csv(
                os.path.join(out, f"learning_curve_{strat}.csv"),
                ["generation", "mean_return", "best_return"],
                history,
            )
        report.learning_curve_figure(
            histories, os.path.join(out, "figures", "stage1_learning_curves.png")
        )
        return os.path.join(out, "stage1")

    if stage != 2:
        raise ConfigError("stage must be 1 or 2")

    stage1_dir = os.path.join(out, "stage1")
    checkpoints = {}
    for strat in STAGE2_STRATEGIES:
        strat_dir = os.path.join(stage1_dir, strat)
        if not os.path.isdir(strat_dir):
            raise ConfigError(
                f"stage 2 requires stage-1 checkpoints; missing {strat_dir}"
            )
        files = sorted(os.listdir(strat_dir))
        history = [load_snapshot(os.path.join(strat_dir, f)) for f in files]
        checkpoints[strat] = evenly_spaced_checkpoints(history, CHECKPOINTS_PER_STRATEGY)
    pool = bootstrap_stage2(checkpoints, baseline_snapshot())
    pool = replace_pool_schedule(pool, config.pool_add_interval, config.pool_capacity)
    save_pool(os.path.join(out, "stage2", "pool"), pool)
    source = SelfPlayOpponents(pool)
    factory = make_env_factory(
        config, setup, "balanced", np.random.SeedSequence([config.seed, 7])
    )
    history = []
    snapshots = train_toy_learner(
        factory,
        source,
        "balanced",
        config.budget_episodes,
        np.random.default_rng(np.random.SeedSequence([config.seed, 2000])),
        trainer,
        history=history,
        workers=config.workers,
    )
    _save_checkpoints(os.path.join(out, "stage2", "balanced"), snapshots)
    report.write_csv(
        os.path.join(out, "learning_curve_stage2.csv"),
        ["generation", "mean_return", "best_return"],
        history,
    )
    report.learning_curve_figure(
        {"stage2 balanced": history},
        os.path.join(out, "figures", "stage2_learning_curve.png"),
    )
    return os.path.join(out, "stage2")


def replace_pool_schedule(pool: OpponentPool, add_interval: int, capacity: int) -> OpponentPool:
    if capacity < pool.size:
        raise ConfigError("pool capacity below current size")
    return OpponentPool(
        members=pool.members,
        episodes_since_add=pool.episodes_since_add,
        add_interval=add_interval,
        capacity=capacity,
    )


def _write_config_snapshot(config: RunConfig, setup: Setup, extra: dict) -> str:
    snapshot = {"run": asdict(config), "fingerprints": setup_fingerprints(setup)}
    snapshot.update(extra)
    path = os.path.join(config.output_dir, "config.yaml")
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(snapshot, fh, sort_keys=False)
    return path


def replay_verify(run_dir: str) -> int:
    """Re-simulate every replay log in a run directory and compare bytes.

    Returns the number of verified logs; raises ReplayVerificationError on
    the first mismatch.
    """
    config_path = os.path.join(run_dir, "config.yaml")
    if not os.path.isfile(config_path):
        raise ConfigError(f"{run_dir}: missing config.yaml")
    with open(config_path, "r", encoding="utf-8") as fh:
        snapshot = yaml.safe_load(fh)
    run = snapshot.get("run", {})
    known = set(RunConfig.__dataclass_fields__)
    config = RunConfig(**{k: v for k, v in run.items() if k in known})
    config.output_dir = run_dir
    setup = load_setup(config)
    policy_a = snapshot.get("policy_a")
    policy_b = snapshot.get("policy_b")
    if policy_a is None or policy_b is None:
        raise ConfigError(f"{run_dir}: config.yaml does not describe a match run")
    make_a = resolve_policy(policy_a, setup)
    make_b = resolve_policy(policy_b, setup)

    verified = 0
    for name in sorted(os.listdir(run_dir)):
        if not (name.startswith("replay_") and name.endswith(".log")):
            continue
        path = os.path.join(run_dir, name)
        with open(path, "r", encoding="utf-8") as fh:
            recorded = fh.read()
        seed = None
        for line in recorded.splitlines():
            if line.startswith("# seed "):
                seed = int(line.split()[-1])
                break
        if seed is None:
            raise ReplayVerificationError(f"{path}: missing seed header")
        result, _ = simulate_match(setup, make_a(), make_b(), seed)
        rendered = render_event_log(
            result.event_log, replay_header(setup, seed, policy_a, policy_b)
        )
        if rendered != recorded:
            raise ReplayVerificationError(f"{path}: replay does not reproduce")
        verified += 1
    if verified == 0:
        raise ReplayVerificationError(f"{run_dir}: no replay logs found")
    return verified


def run_bench(config: RunConfig, steps: int = 2000) -> dict[str, float]:
    """Measure per-control-step latency on a live match loop.

    Reports p50/p95/p99 against the 20 ms cycle budget; writes a CSV and a
    histogram figure. The budget is reported, not enforced by aborting.
    """
    setup = load_setup(config)
    bench_setup = replace(setup, match_config=MatchConfig(match_steps=steps))
    make_a = resolve_policy("scripted:baseline", bench_setup)
    make_b = resolve_policy("scripted:jitter", bench_setup)
    _, latencies = simulate_match(
        bench_setup, make_a(), make_b(), config.seed, collect_latency=True
    )
    stats = {
        "steps": float(len(latencies)),
        "p50_ms": float(np.percentile(latencies, 50)),
        "p95_ms": float(np.percentile(latencies, 95)),
        "p99_ms": float(np.percentile(latencies, 99)),
        "max_ms": float(np.max(latencies)),
        "budget_ms": CONTROL_BUDGET_MS,
    }
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    report.write_csv(
        os.path.join(out, "bench.csv"),
        list(stats.keys()),
        [[round(v, 5) for v in stats.values()]],
    )
    report.latency_histogram_figure(
        latencies, CONTROL_BUDGET_MS, os.path.join(out, "figures", "bench_latency.png")
    )
    return stats
