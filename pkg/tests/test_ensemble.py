import numpy as np
import pytest

from deskhockey.ensemble import (
    EnsemblePolicy,
    EstimatorConfig,
    ScoreEstimate,
    ScoreEstimator,
    load_ensemble_manifest,
    select_strategy,
    update_score_estimate,
)
from deskhockey.errors import ConfigError
from deskhockey.match import MatchConfig
from deskhockey.physics import TableSpec
from deskhockey.policy import save_snapshot, toy_snapshot, toy_param_count


CFG = EstimatorConfig.from_specs(TableSpec(), MatchConfig())


def obs_with(puck=(0.0, 0.0), timer=0.0):
    flat = np.zeros(40)
    flat[15:17] = puck
    flat[39] = timer
    return flat


class TestSelectStrategy:
    def test_paper_rule_cases(self):
        assert select_strategy(ScoreEstimate(own_goals=2, opp_goals=2)) == "balanced"
        assert select_strategy(ScoreEstimate(own_goals=1, opp_goals=2)) == "aggressive"
        assert select_strategy(ScoreEstimate(own_goals=5, opp_goals=1), margin=3) == "defensive"
        assert select_strategy(ScoreEstimate(own_goals=3, opp_goals=1), margin=3) == "balanced"

    def test_exhaustive_differential_table(self):
        margin = 3
        for own in range(0, 11):
            for opp in range(0, 11):
                est = ScoreEstimate(own_goals=own, opp_goals=opp)
                got = select_strategy(est, margin)
                diff = own - opp
                if diff < 0:
                    assert got == "aggressive"
                elif diff >= margin:
                    assert got == "defensive"
                else:
                    assert got == "balanced"

    def test_points_follow_three_fault_rule(self):
        est = ScoreEstimate(own_goals=2, own_faults=4, opp_goals=1, opp_faults=3)
        assert est.own_points == 1
        assert est.opp_points == 0


class TestUpdateEstimate:
    def test_no_discontinuity_no_change(self):
        est = ScoreEstimate()
        window = [obs_with(puck=(0.1, 0.0)), obs_with(puck=(0.12, 0.0))]
        assert update_score_estimate(est, window, CFG) == est

    def test_goal_for_us_detected(self):
        est = ScoreEstimate()
        window = [
            obs_with(puck=(0.90, 0.02)),
            obs_with(puck=(0.95, 0.02)),  # in the opponent mouth, moving out
            obs_with(puck=(0.49, 0.01)),  # faceoff jump back
        ]
        out = update_score_estimate(est, window, CFG)
        assert out.own_goals == 1 and out.opp_goals == 0

    def test_goal_against_us_detected(self):
        est = ScoreEstimate()
        window = [
            obs_with(puck=(-0.90, -0.03)),
            obs_with(puck=(-0.96, -0.03)),
            obs_with(puck=(-0.51, 0.0)),
        ]
        out = update_score_estimate(est, window, CFG)
        assert out.opp_goals == 1 and out.own_goals == 0

    def test_own_fault_detected_by_timer_saturation(self):
        est = ScoreEstimate()
        sat = 749.0 / 750.0
        window = [
            obs_with(puck=(-0.5, 0.1), timer=-(748.0 / 750.0)),
            obs_with(puck=(-0.5, 0.1), timer=-sat),
            obs_with(puck=(-0.52, -0.01), timer=-(1.0 / 750.0)),
        ]
        out = update_score_estimate(est, window, CFG)
        assert out.own_faults == 1 and out.opp_faults == 0

    def test_opponent_fault_detected(self):
        est = ScoreEstimate()
        sat = 749.0 / 750.0
        window = [
            obs_with(puck=(0.5, 0.1), timer=748.0 / 750.0),
            obs_with(puck=(0.5, 0.1), timer=sat),
            obs_with(puck=(0.52, -0.02), timer=1.0 / 750.0),
        ]
        out = update_score_estimate(est, window, CFG)
        assert out.opp_faults == 1 and out.own_faults == 0

    def test_centerline_crossing_near_limit_not_a_fault(self):
        est = ScoreEstimate()
        window = [
            obs_with(puck=(-0.02, 0.1), timer=-(749.0 / 750.0)),
            obs_with(puck=(0.02, 0.1), timer=1.0 / 750.0),  # legit crossing
        ]
        out = update_score_estimate(est, window, CFG)
        assert out == est  # no jump, no fault

    def test_stuck_reset_is_score_neutral(self):
        est = ScoreEstimate()
        window = [
            obs_with(puck=(0.05, 0.02)),
            obs_with(puck=(0.05, 0.02)),  # slow in the center band
            obs_with(puck=(-0.5, 0.01)),  # reset jump
        ]
        out = update_score_estimate(est, window, CFG)
        assert (out.own_goals, out.opp_goals, out.own_faults, out.opp_faults) == (0, 0, 0, 0)

    def test_freeze_then_jump_flagged_low_confidence(self):
        est = ScoreEstimate()
        window = [
            obs_with(puck=(0.93, 0.01)),
            obs_with(puck=(0.93, 0.01)),  # tracking-loss freeze (exact repeat)
            obs_with(puck=(0.49, 0.0)),  # reset-like jump
        ]
        out = update_score_estimate(est, window, CFG)
        assert out.own_goals == 0 and out.opp_goals == 0
        assert out.ambiguous == 1 and out.low_confidence

    def test_short_window_no_change(self):
        est = ScoreEstimate()
        assert update_score_estimate(est, [obs_with()], CFG) == est


class TestEstimatorStateful:
    def test_stream_feeding(self):
        estimator = ScoreEstimator(CFG)
        estimator.push(obs_with(puck=(0.85, 0.0)))
        estimator.push(obs_with(puck=(0.95, 0.01)))
        est = estimator.push(obs_with(puck=(0.5, 0.0)))
        assert est.own_goals == 1

    def test_window_reset_breaks_continuity(self):
        estimator = ScoreEstimator(CFG)
        estimator.push(obs_with(puck=(0.85, 0.0)))
        estimator.push(obs_with(puck=(0.95, 0.01)))
        estimator.reset_window()
        est = estimator.push(obs_with(puck=(0.5, 0.0)))
        assert est.own_goals == 0  # jump not observable across the reset


class TestEnsemblePolicy:
    def snapshots(self):
        return {
            name: toy_snapshot(np.zeros(toy_param_count()), strategy=name)
            for name in ("balanced", "aggressive", "defensive")
        }

    def test_switches_only_at_faceoffs(self):
        policy = EnsemblePolicy(self.snapshots(), margin=1)
        stack_obs = obs_with(puck=(0.9, 0.0))
        from deskhockey.env import ObservationStack
        from deskhockey.physics import Side

        stack = ObservationStack(flat=stack_obs, side=Side.A, initialized=True)
        policy(stack, np.random.default_rng(0))
        stack2 = ObservationStack(flat=obs_with(puck=(0.96, 0.0)), side=Side.A, initialized=True)
        policy(stack2, np.random.default_rng(0))
        stack3 = ObservationStack(flat=obs_with(puck=(0.5, 0.0)), side=Side.A, initialized=True)
        policy(stack3, np.random.default_rng(0))
        assert policy.estimate.own_points == 1
        assert policy.active_strategy == "balanced"  # not yet: mid-episode
        policy.reset_episode()
        assert policy.active_strategy == "defensive"  # margin 1, leading 1:0

    def test_missing_strategy_rejected(self):
        snaps = self.snapshots()
        del snaps["defensive"]
        with pytest.raises(ConfigError, match="defensive"):
            EnsemblePolicy(snaps)

    def test_manifest_round_trip(self, tmp_path):
        snaps = self.snapshots()
        for name, snap in snaps.items():
            save_snapshot(tmp_path / f"{name}.ckpt", snap)
        manifest = tmp_path / "ensemble.yaml"
        manifest.write_text(
            "format_version: 1\n"
            "balanced: balanced.ckpt\n"
            "aggressive: aggressive.ckpt\n"
            "defensive: defensive.ckpt\n"
            "defensive_margin: 4\n"
        )
        policy = load_ensemble_manifest(manifest)
        assert policy.margin == 4
        assert policy.active_strategy == "balanced"

    def test_manifest_missing_entry_rejected(self, tmp_path):
        manifest = tmp_path / "ensemble.yaml"
        manifest.write_text("format_version: 1\nbalanced: b.ckpt\n")
        with pytest.raises(ConfigError):
            load_ensemble_manifest(manifest)
