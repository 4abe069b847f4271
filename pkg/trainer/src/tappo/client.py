"""Standalone client for the engine's newline-delimited JSON episode protocol.

The trainer talks to the engine only through this wire format:
every message is one line ``{"proto": 1, "type": <t>, "payload": {...}}``.
A ``reset`` carrying an episode config is answered with an ``observation``;
each ``action {j, k}`` with a ``result`` (plus the next ``observation`` when
the episode continues). The engine may interleave a ``revise`` request when
the grasped box turns out to have different dimensions; the reply is an
``action {k}`` chosen from the refreshed validity row.
"""

from __future__ import annotations

import json
import shutil
import socket
import subprocess
import sys
import time

PROTO_VERSION = 1


class ProtocolError(Exception):
    pass


def _encode(msg_type: str, payload: dict) -> bytes:
    return (json.dumps({"proto": PROTO_VERSION, "type": msg_type,
                        "payload": payload}) + "\n").encode()


def _decode(line: bytes) -> tuple[str, dict]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed JSON message: {exc}") from exc
    if obj.get("proto") != PROTO_VERSION:
        raise ProtocolError(f"unsupported proto version {obj.get('proto')!r}")
    if "type" not in obj:
        raise ProtocolError("message missing 'type'")
    return obj["type"], obj.get("payload", {})


def argmax_revise(payload: dict) -> int:
    """Default revise reply: first set entry of the refreshed validity row."""
    row = payload["validity_row"]
    for k, v in enumerate(row):
        if v:
            return k
    raise ProtocolError("revise request carried an all-invalid row")


class EngineClient:
    """One protocol connection; supports sequential episodes."""

    def __init__(self, addr: str):
        host, port = addr.rsplit(":", 1)
        self.sock = socket.create_connection((host or "127.0.0.1", int(port)))
        self.rfile = self.sock.makefile("rb")
        self.wfile = self.sock.makefile("wb")

    def _send(self, msg_type: str, payload: dict):
        self.wfile.write(_encode(msg_type, payload))
        self.wfile.flush()

    def _recv(self) -> tuple[str, dict]:
        line = self.rfile.readline()
        if not line:
            raise ConnectionError("engine closed the connection")
        return _decode(line)

    def _expect(self, *types) -> tuple[str, dict]:
        msg_type, payload = self._recv()
        if msg_type == "error":
            raise ProtocolError(f"engine error: {payload.get('message')}")
        if msg_type not in types:
            raise ProtocolError(f"expected {types}, got {msg_type!r}")
        return msg_type, payload

    def reset(self, config: dict) -> dict:
        """Start an episode; returns the first observation payload."""
        self._send("reset", {"config": config})
        return self._expect("observation")[1]

    def step(self, j: int, k: int, revise_handler=argmax_revise):
        """Returns (result payload, next observation payload or None)."""
        self._send("action", {"j": int(j), "k": int(k)})
        msg_type, payload = self._expect("result", "revise")
        while msg_type == "revise":
            self._send("action", {"k": int(revise_handler(payload))})
            msg_type, payload = self._expect("result", "revise")
        obs = None
        if not payload["done"]:
            obs = self._expect("observation")[1]
        return payload, obs

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


def _engine_command() -> list[str]:
    exe = shutil.which("tapcore")
    if exe is not None:
        return [exe]
    return [sys.executable, "-c",
            "import sys; from tapcore.cli import main; sys.exit(main(sys.argv[1:]))"]


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def spawn_engine(timeout: float = 15.0):
    """Launch an engine server subprocess; returns (process, 'host:port').

    The caller owns the process and should terminate() it when done."""
    port = _free_port()
    proc = subprocess.Popen(_engine_command() + ["serve", "--port", str(port)],
                            stdout=subprocess.DEVNULL,
                            stderr=subprocess.DEVNULL)
    deadline = time.time() + timeout
    addr = f"127.0.0.1:{port}"
    while time.time() < deadline:
        if proc.poll() is not None:
            raise RuntimeError(f"engine exited early with code {proc.returncode}")
        try:
            client = EngineClient(addr)
            client.close()
            return proc, addr
        except OSError:
            time.sleep(0.1)
    proc.terminate()
    raise RuntimeError(f"engine did not accept connections within {timeout}s")
