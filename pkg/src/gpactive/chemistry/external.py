"""Line-delimited JSON protocol for oracles living in another process.

Requests and responses are one JSON object per line::

    -> {"id": 0, "x": [0.25, 0.5]}
    <- {"id": 0, "y": 1.375}            or  {"id": 0, "error": "solver diverged"}

Coordinates are written with 17 significant digits.
"""
from __future__ import annotations

import json
import logging
import math
import queue
import shlex
import subprocess
import sys
import threading

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 60.0


class ExternalOracleError(RuntimeError):
    pass


class ProtocolError(ExternalOracleError):
    pass


class OracleTimeout(ExternalOracleError):
    pass


def format_request(req_id: int, x) -> str:
    coords = ", ".join(format(float(v), ".17g") for v in x)
    return f'{{"id": {int(req_id)}, "x": [{coords}]}}'


def parse_response(line: str, req_id: int) -> float:
    text = line.strip()
    try:
        msg = json.loads(text)
    except json.JSONDecodeError:
        raise ProtocolError(f"malformed response line: {text!r}") from None
    if not isinstance(msg, dict) or msg.get("id") != req_id:
        raise ProtocolError(f"unexpected response for request {req_id}: {text!r}")
    if "error" in msg:
        raise ExternalOracleError(f"oracle error for request {req_id}: {msg['error']}")
    y = msg.get("y")
    if isinstance(y, bool) or not isinstance(y, (int, float)) or not math.isfinite(y):
        raise ProtocolError(f"response has no finite 'y': {text!r}")
    return float(y)


class ExternalOracle:
    """Point -> value adapter around a long-running child process.

    The child is started on first use. Values are cached by point, so a
    repeated query costs no round trip. Any failure (exit, timeout,
    malformed line) raises and leaves the adapter closed.
    """

    def __init__(self, command, timeout: float = DEFAULT_TIMEOUT, cwd=None, env=None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = float(timeout)
        self.cwd = cwd
        self.env = env
        self.round_trips = 0
        self._proc = None
        self._lines: queue.Queue | None = None
        self._lock = threading.Lock()
        self._cache: dict = {}
        self._next_id = 0

    def start(self):
        if self._proc is not None:
            return
        self._proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1, cwd=self.cwd, env=self.env,
        )
        self._lines = queue.Queue()
        threading.Thread(target=self._pump, args=(self._proc.stdout, self._lines), daemon=True).start()

    @staticmethod
    def _pump(stream, sink):
        for line in stream:
            sink.put(line)
        sink.put(None)

    def __call__(self, x) -> float:
        key = tuple(float(v) for v in x)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
            self.start()
            req_id = self._next_id
            self._next_id += 1
            try:
                self._proc.stdin.write(format_request(req_id, key) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                self._fail()
                raise ExternalOracleError(f"oracle process is not accepting input: {exc}") from None
            try:
                line = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                self._fail()
                raise OracleTimeout(f"no response to request {req_id} within {self.timeout:g} s") from None
            if line is None:
                code = self._proc.wait()
                self._fail()
                raise ExternalOracleError(f"oracle process exited with status {code}")
            self.round_trips += 1
            try:
                y = parse_response(line, req_id)
            except ProtocolError:
                self._fail()
                raise
            self._cache[key] = y
            return y

    def _fail(self):
        proc, self._proc = self._proc, None
        if proc is not None and proc.poll() is None:
            proc.kill()
            proc.wait()

    def close(self):
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            proc.stdin.close()
            proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve(oracle, stdin=None, stdout=None) -> int:
    """Answer protocol requests with ``oracle`` until end of input."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    served = 0
    for line in stdin:
        if not line.strip():
            continue
        try:
            msg = json.loads(line)
            req_id, x = msg["id"], msg["x"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            log.error("bad request %r: %s", line.strip(), exc)
            continue
        try:
            reply = {"id": req_id, "y": float(oracle(x))}
        except Exception as exc:
            reply = {"id": req_id, "error": f"{type(exc).__name__}: {exc}"}
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()
        served += 1
    return served
