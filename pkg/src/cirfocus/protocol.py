"""Newline-delimited JSON wire protocol shared with out-of-process adapters.

One request line maps to exactly one response line, order preserved.  The
same envelope carries scorer traffic (``type: score``) and generation-client
traffic (``type: generate``).  Transports are either a child process's
standard streams or a TCP socket.
"""
from __future__ import annotations

import json
import math
import select
import shlex
import socket
import subprocess
import threading
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import ProtocolTimeout, ProtocolViolation, TransportError
from .scoring import ScoreRequest
from .types import Candidate, PruneState, Ranking, TokenizedQuery

PROTOCOL_VERSION = 1


def encode_score_request(req: ScoreRequest, candidates: Sequence[Candidate]) -> dict:
    q = req.query
    return {
        "v": PROTOCOL_VERSION,
        "type": "score",
        "sample_id": req.sample_id,
        "query": {
            "image": [
                {
                    "id": t.id,
                    "asset": t.asset or "",
                    "mask": t.mask or "",
                    "active": bool(req.active[t.id]),
                }
                for t in q.image_tokens
            ],
            "text": [
                {
                    "id": t.id,
                    "surface": t.surface,
                    "active": bool(req.active[q.n_image + t.id]),
                }
                for t in q.text_tokens
            ],
        },
        "candidates": [{"id": c.id, "asset": c.asset or ""} for c in candidates],
    }


def validate_score_response(msg: dict, sample_id: str, n_candidates: int) -> list[float]:
    """Enforce the response contract; raises ProtocolViolation on any breach."""
    if not isinstance(msg, dict):
        raise ProtocolViolation("response is not a JSON object")
    if msg.get("v") != PROTOCOL_VERSION:
        raise ProtocolViolation(f"unsupported protocol version {msg.get('v')!r}")
    if msg.get("type") == "error":
        raise ProtocolViolation(f"endpoint error: {msg.get('message', '')}")
    if msg.get("type") != "scores":
        raise ProtocolViolation(f"unexpected message type {msg.get('type')!r}")
    if msg.get("sample_id") != sample_id:
        raise ProtocolViolation(
            f"sample_id mismatch: sent {sample_id!r}, got {msg.get('sample_id')!r}"
        )
    scores = msg.get("scores")
    if not isinstance(scores, list) or len(scores) != n_candidates:
        got = len(scores) if isinstance(scores, list) else scores
        raise ProtocolViolation(f"expected {n_candidates} scores, got {got}")
    out = []
    for s in scores:
        if not isinstance(s, (int, float)) or isinstance(s, bool) or not math.isfinite(s):
            raise ProtocolViolation(f"non-finite or non-numeric score {s!r}")
        out.append(float(s))
    return out


class Transport:
    """A reconnectable bidirectional line stream."""

    def send_line(self, line: str) -> None:
        raise NotImplementedError

    def recv_line(self, timeout: Optional[float]) -> str:
        raise NotImplementedError

    def poll_line(self, timeout: float) -> Optional[str]:
        """Non-raising read used to detect stray extra lines."""
        raise NotImplementedError

    def reconnect(self) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class SubprocessTransport(Transport):
    """Child process speaking the protocol on its standard streams."""

    def __init__(self, argv: Sequence[str]):
        self.argv = list(argv)
        self.proc: Optional[subprocess.Popen] = None
        self.reconnect()

    def reconnect(self) -> None:
        self.close()
        try:
            self.proc = subprocess.Popen(
                self.argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise TransportError(f"cannot spawn {self.argv!r}: {exc}") from exc

    def send_line(self, line: str) -> None:
        if self.proc is None or self.proc.poll() is not None:
            raise TransportError("child process is not running")
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise TransportError(f"write failed: {exc}") from exc

    def _readable(self, timeout: Optional[float]) -> bool:
        ready, _, _ = select.select([self.proc.stdout], [], [], timeout)
        return bool(ready)

    def recv_line(self, timeout: Optional[float]) -> str:
        if self.proc is None:
            raise TransportError("child process is not running")
        if timeout is not None and not self._readable(timeout):
            raise ProtocolTimeout(f"no response within {timeout}s")
        line = self.proc.stdout.readline()
        if line == "":
            raise TransportError("child process closed its output stream")
        return line.rstrip("\n")

    def poll_line(self, timeout: float) -> Optional[str]:
        if self.proc is None or not self._readable(timeout):
            return None
        line = self.proc.stdout.readline()
        return None if line == "" else line.rstrip("\n")

    def close(self) -> None:
        if self.proc is not None:
            try:
                if self.proc.stdin:
                    self.proc.stdin.close()
                self.proc.terminate()
                self.proc.wait(timeout=5)
            except Exception:
                self.proc.kill()
            self.proc = None


class TcpTransport(Transport):
    def __init__(self, host: str, port: int):
        self.host = host
        self.port = port
        self.sock: Optional[socket.socket] = None
        self.rfile = None
        self.reconnect()

    def reconnect(self) -> None:
        self.close()
        try:
            self.sock = socket.create_connection((self.host, self.port), timeout=10)
            self.rfile = self.sock.makefile("r", encoding="utf-8", newline="\n")
        except OSError as exc:
            raise TransportError(f"cannot connect to {self.host}:{self.port}: {exc}") from exc

    def send_line(self, line: str) -> None:
        if self.sock is None:
            raise TransportError("socket is closed")
        try:
            self.sock.sendall((line + "\n").encode("utf-8"))
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def recv_line(self, timeout: Optional[float]) -> str:
        if self.sock is None:
            raise TransportError("socket is closed")
        self.sock.settimeout(timeout)
        try:
            line = self.rfile.readline()
        except socket.timeout as exc:
            raise ProtocolTimeout(f"no response within {timeout}s") from exc
        except OSError as exc:
            raise TransportError(f"recv failed: {exc}") from exc
        if line == "":
            raise TransportError("endpoint closed the connection")
        return line.rstrip("\n")

    def poll_line(self, timeout: float) -> Optional[str]:
        if self.sock is None:
            return None
        ready, _, _ = select.select([self.sock], [], [], timeout)
        if not ready:
            return None
        line = self.rfile.readline()
        return None if line == "" else line.rstrip("\n")

    def close(self) -> None:
        if self.rfile is not None:
            try:
                self.rfile.close()
            except Exception:
                pass
            self.rfile = None
        if self.sock is not None:
            try:
                self.sock.close()
            except Exception:
                pass
            self.sock = None


def open_transport(endpoint: str) -> Transport:
    """``tcp://host:port`` opens a socket; anything else is a command line
    whose child process speaks the protocol on stdin/stdout."""
    if endpoint.startswith("tcp://"):
        hostport = endpoint[len("tcp://"):]
        host, _, port = hostport.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"malformed tcp endpoint {endpoint!r}")
        return TcpTransport(host, int(port))
    return SubprocessTransport(shlex.split(endpoint))


@dataclass
class ProtocolClient:
    """Serializes requests over one transport; retries are safe because score
    and generate requests are idempotent."""

    transport: Transport
    timeout: Optional[float] = 30.0
    max_retries: int = 2

    def __post_init__(self):
        self._lock = threading.Lock()

    def request(self, message: dict) -> dict:
        line = json.dumps(message, separators=(",", ":"), sort_keys=True)
        last: Exception = TransportError("no attempt made")
        with self._lock:
            for attempt in range(self.max_retries + 1):
                try:
                    self.transport.send_line(line)
                    raw = self.transport.recv_line(self.timeout)
                except (TransportError, ProtocolTimeout) as exc:
                    last = exc
                    if attempt < self.max_retries:
                        self.transport.reconnect()
                    continue
                try:
                    return json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise ProtocolViolation(f"response is not valid JSON: {raw!r}") from exc
        raise last

    def close(self) -> None:
        self.transport.close()


class ConnectionPool:
    """Round-robin pool of independent clients for concurrent callers."""

    def __init__(self, endpoint: str, size: int = 1, timeout: Optional[float] = 30.0):
        if size < 1:
            raise ValueError("pool size must be >= 1")
        self._clients = [
            ProtocolClient(open_transport(endpoint), timeout=timeout) for _ in range(size)
        ]
        self._idx = 0
        self._lock = threading.Lock()

    def acquire(self) -> ProtocolClient:
        with self._lock:
            client = self._clients[self._idx % len(self._clients)]
            self._idx += 1
            return client

    def close(self) -> None:
        for c in self._clients:
            c.close()


@dataclass
class RemoteScorer:
    """Scorer backed by the wire protocol; queries must carry asset refs."""

    client: ProtocolClient
    calls: int = 0
    unit_scores: int = 0

    def score(self, query: TokenizedQuery, state: PruneState, pool) -> list[float]:
        sample_id = f"req-{self.calls}"
        req = ScoreRequest(
            sample_id=sample_id,
            query=query,
            active=tuple(bool(b) for b in state.active_flags()),
            candidate_ids=tuple(c.id for c in pool),
        )
        msg = self.client.request(encode_score_request(req, pool))
        scores = validate_score_response(msg, sample_id, len(pool))
        self.calls += 1
        self.unit_scores += len(pool)
        return scores


def serve_stream(handler, infile, outfile) -> None:
    """Run a protocol endpoint over text streams: one response per request.

    ``handler(dict) -> dict``; handler exceptions become error lines, never
    silent drops.
    """
    for raw in infile:
        raw = raw.strip()
        if not raw:
            continue
        sample_id = ""
        try:
            msg = json.loads(raw)
            sample_id = msg.get("sample_id", "") if isinstance(msg, dict) else ""
            reply = handler(msg)
        except Exception as exc:  # noqa: BLE001 - protocol requires error lines
            reply = {
                "v": PROTOCOL_VERSION,
                "type": "error",
                "sample_id": sample_id,
                "message": str(exc),
            }
        outfile.write(json.dumps(reply, separators=(",", ":"), sort_keys=True) + "\n")
        outfile.flush()
