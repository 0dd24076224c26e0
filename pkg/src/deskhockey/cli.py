"""Command-line interface.

Subcommands: match, tournament, train, replay-verify, bench. Exit codes:
0 success, 2 configuration error, 3 verification failure. The output
directory and worker count can also be set through the DESKHOCKEY_OUTPUT_DIR
and DESKHOCKEY_WORKERS environment variables.
"""

from __future__ import annotations

import sys

import click

from .errors import ConfigError, ReplayVerificationError
from .harness import RunConfig, replay_verify, run_bench, run_match, run_tournament, run_training
from .physics import Side

EXIT_CONFIG_ERROR = 2
EXIT_VERIFY_FAILED = 3


def _common_options(fn):
    options = [
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--table", "table_path", type=click.Path(exists=True), default=None,
                     help="Table spec YAML (defaults to the shipped table)."),
        click.option("--chain", "chain_path", type=click.Path(exists=True), default=None,
                     help="Arm chain spec YAML (defaults to the shipped 7-DoF chain)."),
        click.option("--noise", "noise_path", type=click.Path(exists=True), default=None,
                     help="Noise config YAML (training only; matches run noise-free)."),
        click.option("--match-steps", type=int, default=45000, show_default=True,
                     help="Control steps per match (45000 = the full 15 min)."),
        click.option("--matches", type=int, default=1, show_default=True),
        click.option("--workers", type=int, default=1, show_default=True),
        click.option("--out", "output_dir", type=click.Path(), default="runs/run",
                     show_default=True, help="Run output directory."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _build_config(**kwargs) -> RunConfig:
    return RunConfig(**{k: v for k, v in kwargs.items() if v is not None})


@click.group()
def main():
    """Desk-scale robot air hockey toolkit."""


@main.command("match")
@_common_options
@click.option("--policy-a", default="scripted:baseline", show_default=True,
              help="Side A policy spec (scripted:NAME, ckpt:PATH, ensemble:PATH, none).")
@click.option("--policy-b", default="scripted:baseline", show_default=True)
def match_cmd(policy_a, policy_b, **kwargs):
    """Play one or more matches and write replays, results, and figures."""
    try:
        config = _build_config(**kwargs)
        results = run_match(config, policy_a, policy_b)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    for i, result in enumerate(results):
        click.echo(
            f"match {i}: {result.points_a}:{result.points_b} "
            f"(goals {result.goals[Side.A]}:{result.goals[Side.B]}, "
            f"faults {result.faults[Side.A]}:{result.faults[Side.B]})"
        )
    click.echo(f"outputs in {config.output_dir}")


@main.command("tournament")
@_common_options
@click.option("--policy", "policies", multiple=True, required=True,
              help="Participant spec; pass two or more times.")
def tournament_cmd(policies, **kwargs):
    """Double round-robin over the given policies (every ordered pair plays)."""
    try:
        config = _build_config(**kwargs)
        rows = run_tournament(config, list(policies))
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    click.echo(f"{len(rows)} matches played; table in {config.output_dir}")


@main.command("train")
@_common_options
@click.option("--strategy", default="balanced", show_default=True,
              type=click.Choice(["balanced", "aggressive", "defensive"]))
@click.option("--stage", default=1, show_default=True, type=click.IntRange(1, 2))
@click.option("--budget-episodes", type=int, default=600, show_default=True)
@click.option("--max-episode-steps", type=int, default=1500, show_default=True)
@click.option("--pool-add-interval", type=int, default=1000, show_default=True)
@click.option("--pool-capacity", type=int, default=25, show_default=True)
@click.option("--population", type=int, default=14, show_default=True)
@click.option("--hidden", type=int, default=8, show_default=True)
@click.option("--plateau-window", type=int, default=None,
              help="Stop a stage early once mean return plateaus over this many generations.")
@click.option("--no-train-noise", "train_noise", flag_value=False, default=True,
              help="Disable the learner-side stochasticity during training.")
def train_cmd(strategy, stage, **kwargs):
    """Run self-play training (stage 1: per-strategy agents; stage 2: final pool)."""
    try:
        config = _build_config(**kwargs)
        ckpt_dir = run_training(config, strategy=strategy, stage=stage)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    click.echo(f"checkpoints in {ckpt_dir}")


@main.command("replay-verify")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
def replay_verify_cmd(run_dir):
    """Re-simulate the replays of a match run and compare byte-for-byte."""
    try:
        count = replay_verify(run_dir)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    except ReplayVerificationError as exc:
        click.echo(f"verification failed: {exc}", err=True)
        sys.exit(EXIT_VERIFY_FAILED)
    click.echo(f"verified {count} replay log(s): bit-identical")


@main.command("bench")
@_common_options
@click.option("--steps", type=int, default=2000, show_default=True)
def bench_cmd(steps, **kwargs):
    """Measure per-control-step compute latency against the 20 ms budget."""
    try:
        config = _build_config(**kwargs)
        stats = run_bench(config, steps=steps)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    for key, value in stats.items():
        click.echo(f"{key}: {value:.4f}")
    if stats["p99_ms"] > stats["budget_ms"]:
        click.echo("warning: p99 latency exceeds the control cycle budget", err=True)


if __name__ == "__main__":
    main()
