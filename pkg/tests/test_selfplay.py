import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deskhockey.errors import ConfigError
from deskhockey.policy import baseline_snapshot, toy_snapshot, toy_param_count
from deskhockey.selfplay import (
    CHECKPOINTS_PER_STRATEGY,
    FixedOpponent,
    OpponentPool,
    SelfPlayOpponents,
    bootstrap_stage2,
    evenly_spaced_checkpoints,
    load_pool,
    maybe_add,
    sample_opponent,
    save_pool,
)

# Chi-square critical value, df=24, alpha=0.01.
CHI2_99_DF24 = 42.97982


def snap(i: int):
    params = np.zeros(toy_param_count(1))
    params[0] = float(i)
    return toy_snapshot(params, episode=i)


def pool_of(n: int, **kwargs) -> OpponentPool:
    return OpponentPool(members=tuple(snap(i) for i in range(n)), **kwargs)


class TestSampling:
    def test_singleton_pool_always_returns_member(self, rng):
        pool = pool_of(1)
        for _ in range(20):
            assert sample_opponent(pool, rng) is pool.members[0]

    def test_uniformity_chi_square(self, rng):
        pool = pool_of(25)
        draws = 100_000
        counts = np.zeros(25)
        for _ in range(draws):
            member = sample_opponent(pool, rng)
            counts[int(member.parameters[0])] += 1
        expected = draws / 25
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        assert chi2 <= CHI2_99_DF24

    def test_same_seed_same_sequence(self):
        pool = pool_of(10)
        seq1 = [sample_opponent(pool, np.random.default_rng(3)).episode for _ in range(1)]
        r1, r2 = np.random.default_rng(3), np.random.default_rng(3)
        seq1 = [sample_opponent(pool, r1).episode for _ in range(50)]
        seq2 = [sample_opponent(pool, r2).episode for _ in range(50)]
        assert seq1 == seq2


class TestGrowth:
    def test_no_add_before_interval(self, rng):
        pool = pool_of(1)
        out = maybe_add(pool, snap(99), episode_index=999, rng=rng)
        assert out.size == 1
        assert out.episodes_since_add == 999

    def test_add_at_interval_multiple(self, rng):
        pool = pool_of(1)
        out = maybe_add(pool, snap(99), episode_index=1000, rng=rng)
        assert out.size == 2
        assert out.members[-1].episode == 99
        assert out.episodes_since_add == 0

    def test_replacement_keeps_capacity_and_new_member(self, rng):
        pool = pool_of(25)
        out = maybe_add(pool, snap(99), episode_index=25_000, rng=rng)
        assert out.size == 25
        episodes = [m.episode for m in out.members]
        assert 99 in episodes
        # Exactly one previous member is gone.
        assert len(set(range(25)) - set(episodes)) == 1

    def test_capacity_never_exceeded_over_long_schedule(self, rng):
        pool = pool_of(1, add_interval=10)
        for episode in range(1, 2000):
            pool = maybe_add(pool, snap(episode), episode, rng)
            assert 1 <= pool.size <= 25

    @given(st.integers(1, 40), st.integers(2, 2000))
    @settings(max_examples=60, deadline=None)
    def test_size_bounds_property(self, interval, episodes):
        rng = np.random.default_rng(0)
        pool = pool_of(1, add_interval=interval)
        for episode in range(1, episodes):
            pool = maybe_add(pool, snap(episode), episode, rng)
            assert 1 <= pool.size <= pool.capacity

    def test_invalid_pool_sizes_rejected(self):
        with pytest.raises(ConfigError):
            OpponentPool(members=())
        with pytest.raises(ConfigError):
            pool_of(26)


class TestBootstrap:
    def checkpoints(self, count=CHECKPOINTS_PER_STRATEGY):
        return {
            name: [snap(i) for i in range(count)]
            for name in ("balanced", "aggressive", "defensive")
        }

    def test_stage2_pool_is_exactly_25(self):
        baseline = baseline_snapshot()
        pool = bootstrap_stage2(self.checkpoints(), baseline)
        assert pool.size == 25
        assert pool.members[0] is baseline

    def test_insufficient_checkpoints_rejected(self):
        ckpts = self.checkpoints()
        ckpts["defensive"] = ckpts["defensive"][:7]
        with pytest.raises(ConfigError, match="defensive"):
            bootstrap_stage2(ckpts, baseline_snapshot())

    def test_duplicate_identities_accepted(self):
        shared = [snap(1)] * CHECKPOINTS_PER_STRATEGY
        ckpts = {name: list(shared) for name in ("balanced", "aggressive", "defensive")}
        pool = bootstrap_stage2(ckpts, baseline_snapshot())
        assert pool.size == 25

    def test_evenly_spaced_selection(self):
        history = [snap(i) for i in range(40)]
        picked = evenly_spaced_checkpoints(history, 8)
        assert len(picked) == 8
        assert picked[0].episode == 0
        assert picked[-1].episode == 39
        episodes = [p.episode for p in picked]
        assert episodes == sorted(set(episodes))
        with pytest.raises(ConfigError):
            evenly_spaced_checkpoints(history[:5], 8)


class TestSources:
    def test_selfplay_adapter_grows_on_schedule(self, rng):
        source = SelfPlayOpponents(pool_of(1, add_interval=5))
        added = []
        for episode in range(1, 21):
            source.after_episode(lambda: snap(episode), rng)
            added.append(source.pool.size)
        assert added[3] == 1  # episode 4: not yet
        assert added[4] == 2  # episode 5: first add
        assert source.pool.size == 5  # adds at 5, 10, 15, 20

    def test_fixed_opponent_never_changes(self, rng):
        source = FixedOpponent(snap(7))
        for episode in range(1, 50):
            source.after_episode(lambda: snap(episode), rng)
            assert source.sample(rng).episode == 7


class TestManifest:
    def test_round_trip(self, tmp_path, rng):
        pool = pool_of(4, add_interval=100, episodes_since_add=42)
        manifest = save_pool(tmp_path / "pool", pool)
        loaded = load_pool(manifest)
        assert loaded.size == 4
        assert loaded.add_interval == 100
        assert loaded.episodes_since_add == 42
        for a, b in zip(loaded.members, pool.members):
            assert np.array_equal(a.parameters, b.parameters)
            assert a.episode == b.episode

    def test_hash_mismatch_detected(self, tmp_path):
        pool = pool_of(2)
        manifest = save_pool(tmp_path / "pool", pool)
        ckpt = next((tmp_path / "pool").glob("pool_00_*.ckpt"))
        text = ckpt.read_text().replace("episode 0", "episode 1")
        ckpt.write_text(text)
        with pytest.raises(ConfigError, match="hash mismatch"):
            load_pool(manifest)
