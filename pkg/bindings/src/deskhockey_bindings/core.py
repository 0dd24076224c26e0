"""Handle table and boundary validation for the deskhockey env."""

from __future__ import annotations

import itertools
import math
import threading

import deskhockey
from deskhockey import AirHockeyEnv, NoiseConfig
from deskhockey.policy import (
    as_policy,
    baseline_snapshot,
    blocker_snapshot,
    jitter_snapshot,
)

# The core interface version this binding was built against.
ABI_VERSION = "deskhockey-env/1"


class BindingError(Exception):
    """Base class for every error surfaced across the boundary."""


class AbiMismatchError(BindingError):
    """The installed core reports an incompatible interface version."""


class ClosedHandleError(BindingError):
    """Operation on a handle that was never created or already closed."""


class InvalidActionError(BindingError):
    """Action has the wrong arity or non-numeric entries."""


class UnknownOptionError(BindingError):
    """`create` received an option the boundary does not define."""


def _check_abi() -> None:
    found = getattr(deskhockey, "ENV_ABI_VERSION", None)
    if found != ABI_VERSION:
        raise AbiMismatchError(
            f"core reports ABI {found!r}, bindings require {ABI_VERSION!r}"
        )


_check_abi()


def abi_version() -> str:
    return ABI_VERSION


_OPPONENTS = {
    "none": None,
    "baseline": baseline_snapshot,
    "blocker": blocker_snapshot,
    "jitter": jitter_snapshot,
}

_KNOWN_OPTIONS = {
    "seed",
    "strategy",
    "opponent",
    "max_episode_steps",
    "reset_side",
    "noise",
}

_handles: dict[int, AirHockeyEnv] = {}
_next_handle = itertools.count(1)
_lock = threading.Lock()


def create(options: dict | None = None) -> int:
    """Create an environment instance; returns its handle.

    Options: `seed` (int), `strategy` (balanced/aggressive/defensive),
    `opponent` (none/baseline/blocker/jitter), `max_episode_steps` (int),
    `reset_side` (random/learner/opponent), `noise` (bool: default learner
    stochasticity on or off). A handle is confined to one caller thread.
    """
    options = dict(options or {})
    unknown = set(options) - _KNOWN_OPTIONS
    if unknown:
        raise UnknownOptionError(f"unknown options: {sorted(unknown)}")
    opponent_name = options.pop("opponent", "baseline")
    if opponent_name not in _OPPONENTS:
        raise UnknownOptionError(
            f"unknown opponent {opponent_name!r}; expected one of {sorted(_OPPONENTS)}"
        )
    noise_on = bool(options.pop("noise", False))
    try:
        env = AirHockeyEnv(
            seed=options.pop("seed", None),
            strategy=options.pop("strategy", "balanced"),
            max_episode_steps=int(options.pop("max_episode_steps", 1500)),
            reset_side=options.pop("reset_side", "random"),
            noise=NoiseConfig() if noise_on else NoiseConfig.zeroed(),
        )
    except (ValueError, TypeError) as exc:
        raise BindingError(f"invalid environment options: {exc}") from exc
    maker = _OPPONENTS[opponent_name]
    if maker is not None:
        env.opponent = as_policy(maker(), env.table, env.geometry)
    with _lock:
        handle = next(_next_handle)
        _handles[handle] = env
    return handle


def _env(handle) -> AirHockeyEnv:
    env = _handles.get(handle)
    if env is None:
        raise ClosedHandleError(f"handle {handle!r} is not open")
    return env


def close(handle: int) -> None:
    """Release a handle; further operations on it raise ClosedHandleError."""
    with _lock:
        if _handles.pop(handle, None) is None:
            raise ClosedHandleError(f"handle {handle!r} is not open")


def reset(handle: int, seed: int | None = None) -> list[float]:
    """Start an episode; returns the 40-dimensional observation."""
    env = _env(handle)
    if seed is not None and not isinstance(seed, int):
        raise BindingError("seed must be an integer or None")
    return env.reset(seed=seed).tolist()


def step(handle: int, action) -> tuple[list[float], float, bool, dict]:
    """Advance one control step.

    Returns (observation, reward, terminal, info). `terminal` covers both
    score-affecting episode ends and truncation; info distinguishes them and
    carries the events and the exact rational reward as a string.
    """
    env = _env(handle)
    try:
        ax, ay = float(action[0]), float(action[1])
        if len(action) != 2:
            raise InvalidActionError(f"action must have 2 entries, got {len(action)}")
    except InvalidActionError:
        raise
    except (TypeError, ValueError, IndexError) as exc:
        raise InvalidActionError(f"malformed action {action!r}") from exc
    if not (math.isfinite(ax) and math.isfinite(ay)):
        # The env treats non-finite actions as hold-position; the boundary is
        # stricter so callers notice corrupted buffers immediately.
        raise InvalidActionError("action entries must be finite")
    try:
        obs, reward, terminated, truncated, info = env.step((ax, ay))
    except RuntimeError as exc:
        raise BindingError(str(exc)) from exc
    flat_info = {
        "terminated": terminated,
        "truncated": truncated,
        "step_index": info["step_index"],
        "exact_reward": str(info["exact_reward"]),
        "events": [
            {"kind": e.kind.value, "side": e.side.value if e.side else "none"}
            for e in info["events"]
        ],
    }
    return obs.tolist(), reward, terminated or truncated, flat_info


def spec(handle: int) -> dict:
    """Observation/action dimensions and bounds, plus the ABI string."""
    env = _env(handle)
    out = dict(env.spec())
    out["abi"] = ABI_VERSION
    return out
