"""Desk-scale robot air hockey: simulation, control, self-play, and match tooling."""

from .env import (
    ACTION_DIM,
    OBSERVATION_DIM,
    AirHockeyEnv,
    EnvGeometry,
    NoiseConfig,
    ObservationStack,
    StrategyRewardConfig,
    STRATEGIES,
)
from .kinematics import (
    CartesianDisplacement,
    JointCommand,
    JointState,
    KinematicChain,
    default_chain,
    forward_kinematics,
    jacobian,
    pseudo_inverse,
    resolve_action,
)
from .match import EventKind, MatchConfig, MatchEvent, MatchResult, score_match, update_rules
from .physics import (
    MalletState,
    PuckState,
    Side,
    TableSpec,
    WorldState,
    collide_mallet_puck,
    default_table,
    detect_goal,
    substep,
)
from .policy import (
    EmaFilterState,
    PolicySnapshot,
    ema_filter,
    load_snapshot,
    policy_act,
    save_snapshot,
    train_toy_learner,
)
from .selfplay import OpponentPool, bootstrap_stage2, maybe_add, sample_opponent
from .ensemble import ScoreEstimate, select_strategy, update_score_estimate

__version__ = "0.1.0"

# Interface version of the env boundary consumed by external bindings.
ENV_ABI_VERSION = "deskhockey-env/1"
