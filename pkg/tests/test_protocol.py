import numpy as np
import pytest

from tapcore import protocol
from tapcore.ems import Ems
from tapcore.env import EpisodeConfig, Observation, run_episode
from tapcore.errors import ProtocolError
from tapcore.policies import GreedyEmsPolicy, RandomValidPolicy, make_policy

SMALL = dict(n_boxes=6, container=(25, 25, 25), seed=11)


def greedy_revise_handler(policy):
    """Rebuild the revise context from the wire payload."""
    def handler(payload):
        row = np.asarray(payload["validity_row"], dtype=np.int8)
        entries = [(o["container"], Ems(tuple(o["corner"]), tuple(o["dims"]),
                                        o.get("kind", "original")))
                   for o in payload["ems"]]
        w, d, _ = payload["spec"]
        hms = {int(ci): np.asarray(flat, dtype=np.int64).reshape(w, d)
               for ci, flat in payload["heightmaps"].items()}
        ctx = {"dims": tuple(payload["dims"]), "ems": entries,
               "heightmaps": hms, "spec": tuple(payload["spec"])}
        return policy.revise(None, payload["j"], row, ctx)
    return handler


def drive_remote(client, cfg, policy):
    obs = Observation.from_payload(client.reset(cfg))
    handler = greedy_revise_handler(policy)
    total = 0.0
    while True:
        j, k = policy.choose(obs)
        result, obs_payload = client.step(j, k, revise_handler=handler)
        total += result["reward"]
        if result["done"]:
            return total, result["metrics"]
        obs = Observation.from_payload(obs_payload)


@pytest.fixture(scope="module")
def server():
    srv = protocol.serve_env("127.0.0.1", 0)
    yield srv
    srv.shutdown()


class TestEncoding:
    def test_round_trip(self):
        t, p = protocol._decode(protocol._encode("action", {"j": 1, "k": 2}))
        assert t == "action" and p == {"j": 1, "k": 2}

    def test_rejects_bad_json(self):
        with pytest.raises(ProtocolError):
            protocol._decode(b"{nope")

    def test_rejects_wrong_version(self):
        with pytest.raises(ProtocolError):
            protocol._decode(b'{"proto": 99, "type": "action"}')

    def test_rejects_missing_type(self):
        with pytest.raises(ProtocolError):
            protocol._decode(b'{"proto": 1}')


class TestEngineAsServer:
    def test_served_episode_matches_local(self, server):
        cfg = EpisodeConfig(mode="multi_all", **SMALL)
        local = run_episode(cfg, GreedyEmsPolicy())
        host, port = server.server_address
        client = protocol.EnvClient(f"{host}:{port}")
        try:
            reward, metrics = drive_remote(client, cfg, GreedyEmsPolicy())
        finally:
            client.close()
        assert metrics["C"] == pytest.approx(local.metrics["C"], abs=1e-12)
        assert metrics["N_t"] == local.metrics["N_t"]
        assert reward == pytest.approx(local.reward, abs=1e-12)

    def test_sequential_episodes_on_one_connection(self, server):
        host, port = server.server_address
        client = protocol.EnvClient(f"{host}:{port}")
        try:
            for seed in (1, 2):
                cfg = EpisodeConfig(n_boxes=5, container=(20, 20, 20), seed=seed)
                reward, metrics = drive_remote(client, cfg, GreedyEmsPolicy())
                assert metrics["C"] > 0
        finally:
            client.close()

    def test_invalid_action_reports_error(self, server):
        host, port = server.server_address
        client = protocol.EnvClient(f"{host}:{port}")
        try:
            cfg = EpisodeConfig(n_boxes=5, container=(20, 20, 20), seed=1)
            client.reset(cfg)
            with pytest.raises(ProtocolError):
                client.step(10 ** 6, 0)
        finally:
            client.close()

    def test_action_before_reset_is_error(self, server):
        host, port = server.server_address
        client = protocol.EnvClient(f"{host}:{port}")
        try:
            client.stream.send("action", {"j": 0, "k": 0})
            with pytest.raises(ProtocolError):
                client._expect("result")
        finally:
            client.close()


class TestEngineAsClient:
    def test_external_policy_matches_local(self):
        cfg = EpisodeConfig(mode="multi_all", **SMALL)
        local = run_episode(cfg, GreedyEmsPolicy())
        srv = protocol.serve_policy(GreedyEmsPolicy(), "127.0.0.1", 0)
        try:
            host, port = srv.server_address
            remote = run_episode(cfg, make_policy(f"external:{host}:{port}"))
        finally:
            srv.shutdown()
        assert remote.steps == local.steps
        assert remote.metrics == local.metrics

    def test_external_random_policy_runs(self):
        srv = protocol.serve_policy(RandomValidPolicy(5), "127.0.0.1", 0)
        try:
            host, port = srv.server_address
            cfg = EpisodeConfig(**SMALL)
            rec = run_episode(cfg, make_policy(f"external:{host}:{port}"))
        finally:
            srv.shutdown()
        assert rec.metrics["C"] > 0
