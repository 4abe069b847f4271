import numpy as np
import pytest

from tapcore.env import EpisodeConfig, PackEnv, run_episode
from tapcore.policies import (GreedyEmsPolicy, RandomValidPolicy, make_policy)

SMALL = dict(n_boxes=6, container=(25, 25, 25), seed=11, p_occl=0.0)


def reset_small(**over):
    cfg = EpisodeConfig(**{**SMALL, **over})
    env = PackEnv(cfg)
    return env, env.reset()


class TestGreedy:
    def test_picks_biggest_valid_volume_first(self):
        env, obs = reset_small()
        j, k = GreedyEmsPolicy().choose(obs)
        vols = [b.dims[0] * b.dims[1] * b.dims[2] for b in obs.box_states]
        valid_vols = [vols[jj] for jj, kk in np.argwhere(obs.validity == 1)]
        assert vols[j] == max(valid_vols)

    def test_tie_breaks_on_drop_height_then_indices(self):
        env, obs = reset_small()
        policy = GreedyEmsPolicy()
        j, k = policy.choose(obs)
        vols = np.array([b.dims[0] * b.dims[1] * b.dims[2] for b in obs.box_states])
        fills = {c["index"]: c["packed_volume"] for c in obs.containers}
        cont = np.array([fills[ci] for ci, _ in obs.ems])
        valid = np.argwhere(obs.validity == 1)
        scores = vols[valid[:, 0]] + cont[valid[:, 1]]
        tied = valid[scores == scores.max()]
        keys = [(obs.drop_height(int(kk), obs.box_states[jj].dims), int(kk), int(jj))
                for jj, kk in tied]
        assert (obs.drop_height(k, obs.box_states[j].dims), k, j) == min(keys)

    def test_returns_none_when_nothing_valid(self):
        env, obs = reset_small()
        obs.validity[:] = 0
        assert GreedyEmsPolicy().choose(obs) is None

    def test_deterministic(self):
        a = run_episode(EpisodeConfig(**SMALL), GreedyEmsPolicy())
        b = run_episode(EpisodeConfig(**SMALL), GreedyEmsPolicy())
        assert a.steps == b.steps and a.metrics == b.metrics


class TestRandomValid:
    def test_only_valid_choices(self):
        env, obs = reset_small()
        policy = RandomValidPolicy(0)
        for _ in range(20):
            j, k = policy.choose(obs)
            assert obs.validity[j, k] == 1

    def test_seeded_determinism(self):
        a = run_episode(EpisodeConfig(**SMALL), RandomValidPolicy(4))
        b = run_episode(EpisodeConfig(**SMALL), RandomValidPolicy(4))
        assert a.steps == b.steps

    def test_episode_completes(self):
        rec = run_episode(EpisodeConfig(**SMALL), RandomValidPolicy(1))
        assert rec.metrics["C"] > 0


class TestFactory:
    def test_known_specs(self):
        assert isinstance(make_policy("greedy"), GreedyEmsPolicy)
        assert isinstance(make_policy("random", seed=2), RandomValidPolicy)

    def test_unknown_spec(self):
        with pytest.raises(ValueError):
            make_policy("alphazero")
