"""Newline-delimited JSON episode protocol over TCP or stdio.

Every message is one line: ``{"proto": 1, "type": <t>, "payload": {...}}``.

Engine as server (``serve``): the peer drives episodes --
    -> reset {config}        <- observation {...}
    -> action {j, k}         <- [revise {...} -> action {k}] result {...}
                                (+ observation when not done)

Engine as client (``--policy external:<addr>``): the engine forwards
observations to a remote policy and expects action replies; revise messages
carry the corrected dims, refreshed validity row, EMS list, and height maps.
"""

from __future__ import annotations

import json
import socket
import socketserver
import sys
import threading

import numpy as np

from .ems import Ems
from .env import EpisodeConfig, Observation, PackEnv, PROTO_VERSION
from .errors import InvalidActionError, ProtocolError


def _encode(msg_type: str, payload: dict) -> bytes:
    return (json.dumps({"proto": PROTO_VERSION, "type": msg_type,
                        "payload": payload}) + "\n").encode()


def _decode(line: bytes | str) -> tuple[str, dict]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed JSON message: {exc}") from exc
    if obj.get("proto") != PROTO_VERSION:
        raise ProtocolError(f"unsupported proto version {obj.get('proto')!r}")
    if "type" not in obj:
        raise ProtocolError("message missing 'type'")
    return obj["type"], obj.get("payload", {})


def _revise_payload(j: int, ctx, row: np.ndarray) -> dict:
    dims = ctx["dims"].as_tuple() if hasattr(ctx["dims"], "as_tuple") else tuple(ctx["dims"])
    return {
        "j": j,
        "dims": list(dims),
        "validity_row": row.tolist(),
        "ems": [{"k": k, "corner": list(e.corner), "dims": list(e.dims),
                 "kind": e.kind, "container": ci}
                for k, (ci, e) in enumerate(ctx["ems"])],
        "heightmaps": {str(ci): np.asarray(g).reshape(-1).tolist()
                       for ci, g in ctx["heightmaps"].items()},
        "spec": list(ctx["spec"]),
    }


class _LineStream:
    """Blocking line-oriented transport over a socket or file pair."""

    def __init__(self, rfile, wfile):
        self.rfile = rfile
        self.wfile = wfile

    def send(self, msg_type: str, payload: dict):
        self.wfile.write(_encode(msg_type, payload))
        self.wfile.flush()

    def recv(self) -> tuple[str, dict] | None:
        line = self.rfile.readline()
        if not line:
            return None
        if isinstance(line, str):
            line = line.encode()
        if not line.strip():
            return self.recv()
        return _decode(line)


# -- engine as server --------------------------------------------------------

def _serve_episode_stream(stream: _LineStream):
    """Serve one connection: any number of sequential episodes."""
    env = None
    while True:
        msg = stream.recv()
        if msg is None:
            return
        msg_type, payload = msg
        try:
            if msg_type == "reset":
                config = EpisodeConfig.from_payload(payload["config"])
                env = PackEnv(config)
                obs = env.reset()
                stream.send("observation", obs.to_payload())
            elif msg_type == "action":
                if env is None or env.done:
                    raise ProtocolError("action before reset or after done")

                def reviser(row, ctx):
                    stream.send("revise", _revise_payload(ctx_j, ctx, row))
                    reply = stream.recv()
                    if reply is None or reply[0] != "action":
                        raise ProtocolError("expected action reply to revise")
                    return reply[1].get("k")

                ctx_j = int(payload["j"])
                result, obs = env.step(int(payload["j"]), int(payload["k"]),
                                       reviser=reviser)
                stream.send("result", {"reward": result.reward,
                                       "done": result.done,
                                       "info": result.info,
                                       "metrics": env.metrics() if result.done else None})
                if not result.done:
                    stream.send("observation", obs.to_payload())
            else:
                raise ProtocolError(f"unexpected message type {msg_type!r}")
        except (ProtocolError, InvalidActionError, KeyError, TypeError, ValueError) as exc:
            stream.send("error", {"message": str(exc)})
            return


class _EnvHandler(socketserver.StreamRequestHandler):
    def handle(self):
        _serve_episode_stream(_LineStream(self.rfile, self.wfile))


class EnvServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


def serve_env(host: str = "127.0.0.1", port: int = 9000) -> EnvServer:
    """Start the episode server in a background thread; caller shuts it down."""
    server = EnvServer((host, port), _EnvHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def serve_env_stdio():
    """Serve a single session over stdin/stdout."""
    _serve_episode_stream(_LineStream(sys.stdin.buffer, sys.stdout.buffer))


# -- engine as client of a remote environment --------------------------------

class EnvClient:
    """Client for a served environment (used by external trainers)."""

    def __init__(self, addr: str):
        host, port = addr.rsplit(":", 1)
        self.sock = socket.create_connection((host or "127.0.0.1", int(port)))
        self.stream = _LineStream(self.sock.makefile("rb"), self.sock.makefile("wb"))

    def _expect(self, *types) -> tuple[str, dict]:
        msg = self.stream.recv()
        if msg is None:
            raise ProtocolError("connection closed by engine")
        if msg[0] == "error":
            raise ProtocolError(f"engine error: {msg[1].get('message')}")
        if msg[0] not in types:
            raise ProtocolError(f"expected {types}, got {msg[0]!r}")
        return msg

    def reset(self, config: EpisodeConfig) -> dict:
        self.stream.send("reset", {"config": config.to_payload()})
        return self._expect("observation")[1]

    def step(self, j: int, k: int, revise_handler=None):
        """Returns (result_payload, observation_payload | None)."""
        self.stream.send("action", {"j": j, "k": k})
        msg = self._expect("result", "revise")
        while msg[0] == "revise":
            if revise_handler is None:
                raise ProtocolError("engine requested revise but no handler given")
            k_new = revise_handler(msg[1])
            self.stream.send("action", {"k": int(k_new)})
            msg = self._expect("result", "revise")
        result = msg[1]
        obs = None
        if not result["done"]:
            obs = self._expect("observation")[1]
        return result, obs

    def close(self):
        self.sock.close()


# -- remote policy hosting ---------------------------------------------------

class PolicyClient:
    """Engine-side client that forwards decisions to a remote policy."""

    def __init__(self, addr: str):
        host, port = addr.rsplit(":", 1)
        self.sock = socket.create_connection((host or "127.0.0.1", int(port)))
        self.stream = _LineStream(self.sock.makefile("rb"), self.sock.makefile("wb"))

    def _expect_action(self) -> dict:
        msg = self.stream.recv()
        if msg is None:
            raise ProtocolError("policy connection closed")
        if msg[0] != "action":
            raise ProtocolError(f"expected action, got {msg[0]!r}")
        return msg[1]

    def request_action(self, obs: Observation) -> tuple[int, int]:
        self.stream.send("observation", obs.to_payload())
        reply = self._expect_action()
        try:
            return int(reply["j"]), int(reply["k"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed action payload {reply!r}") from exc

    def request_revise(self, j: int, ctx, row: np.ndarray) -> int:
        self.stream.send("revise", _revise_payload(j, ctx, row))
        reply = self._expect_action()
        try:
            return int(reply["k"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed revise reply {reply!r}") from exc

    def send_result(self, reward: float, metrics: dict):
        self.stream.send("result", {"reward": reward, "done": True,
                                    "metrics": metrics})

    def close(self):
        self.sock.close()


def _handle_policy_stream(stream: _LineStream, policy):
    while True:
        msg = stream.recv()
        if msg is None:
            return
        msg_type, payload = msg
        if msg_type == "observation":
            obs = Observation.from_payload(payload)
            decision = policy.choose(obs)
            if decision is None:
                stream.send("error", {"message": "no valid decision"})
                return
            stream.send("action", {"j": decision[0], "k": decision[1]})
        elif msg_type == "revise":
            row = np.asarray(payload["validity_row"], dtype=np.int8)
            ems_entries = [(o["container"], Ems(tuple(o["corner"]), tuple(o["dims"]),
                                               o.get("kind", "original")))
                           for o in payload["ems"]]
            w, d, _ = payload["spec"]
            heightmaps = {int(ci): np.asarray(flat, dtype=np.int64).reshape(w, d)
                          for ci, flat in payload["heightmaps"].items()}
            ctx = {"dims": tuple(payload["dims"]), "ems": ems_entries,
                   "heightmaps": heightmaps, "spec": tuple(payload["spec"])}
            k = policy.revise(None, payload["j"], row, ctx)
            stream.send("action", {"k": int(k)})
        elif msg_type == "result":
            continue
        else:
            stream.send("error", {"message": f"unexpected {msg_type!r}"})
            return


def serve_policy(policy, host: str = "127.0.0.1", port: int = 0):
    """Host an in-process policy behind the protocol; returns the server."""

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            _handle_policy_stream(_LineStream(self.rfile, self.wfile), policy)

    server = EnvServer((host, port), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server
