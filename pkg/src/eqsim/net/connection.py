"""Point-to-point stream connections.

Two unicast transports share one blocking interface: an in-process pipe
(for tests and single-host setups) and TCP.  Both deliver an ordered,
reliable byte stream in each direction, and closing one end is observable
by the peer as end-of-stream after all delivered bytes.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass
from typing import Optional

LOCAL_PIPE = "localPipe"
TCP = "tcp"
RSP_MULTICAST = "rspMulticast"


@dataclass(frozen=True)
class ConnectionDescription:
    protocol: str
    host: str = ""
    port: int = 0
    interface: Optional[str] = None

    def __post_init__(self):
        if self.protocol not in (LOCAL_PIPE, TCP, RSP_MULTICAST):
            raise ValueError(f"unknown protocol {self.protocol!r}")


class TransportError(Exception):
    pass


class ConnectError(TransportError):
    pass


class ConnectionClosedError(TransportError):
    pass


class _PipeBuffer:
    """One direction of an in-process pipe."""

    def __init__(self):
        self._data = bytearray()
        self._cond = threading.Condition()
        self._closed = False

    def write(self, data: bytes) -> None:
        with self._cond:
            if self._closed:
                raise ConnectionClosedError("peer closed")
            self._data += data
            self._cond.notify_all()

    def read_exact(self, n: int, timeout: Optional[float] = None) -> bytes:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while len(self._data) < n:
                if self._closed:
                    raise ConnectionClosedError(
                        f"closed with {len(self._data)} of {n} bytes available"
                    )
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    raise TimeoutError("read timed out")
                self._cond.wait(remaining)
            out = bytes(self._data[:n])
            del self._data[:n]
            return out

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()


class Connection:
    """Abstract ordered reliable byte stream."""

    def send(self, data: bytes) -> None:
        raise NotImplementedError

    def recv(self, n: int, timeout: Optional[float] = None) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class PipeConnection(Connection):
    def __init__(self, inbound: _PipeBuffer, outbound: _PipeBuffer):
        self._in = inbound
        self._out = outbound

    @staticmethod
    def pair() -> tuple["PipeConnection", "PipeConnection"]:
        a, b = _PipeBuffer(), _PipeBuffer()
        return PipeConnection(a, b), PipeConnection(b, a)

    def send(self, data: bytes) -> None:
        self._out.write(data)

    def recv(self, n: int, timeout: Optional[float] = None) -> bytes:
        return self._in.read_exact(n, timeout)

    def close(self) -> None:
        self._in.close()
        self._out.close()


class RateLimitedConnection(Connection):
    """Wraps a connection, pacing sends through a token bucket.

    Models a bandwidth-limited link; the bucket may be shared between
    several connections to model a shared interface.
    """

    def __init__(self, inner: Connection, bucket: "WallClockBucket"):
        self._inner = inner
        self._bucket = bucket

    def send(self, data: bytes) -> None:
        self._bucket.acquire_blocking(len(data))
        self._inner.send(data)

    def recv(self, n: int, timeout: Optional[float] = None) -> bytes:
        return self._inner.recv(n, timeout)

    def close(self) -> None:
        self._inner.close()


class WallClockBucket:
    """Thread-safe token bucket against the wall clock, for link shaping."""

    def __init__(self, rate_bytes_per_sec: float, capacity: Optional[float] = None):
        if rate_bytes_per_sec <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate_bytes_per_sec
        self.capacity = capacity if capacity is not None else rate_bytes_per_sec / 100.0
        self._credits = self.capacity
        self._last = time.monotonic()
        self._lock = threading.Lock()

    def acquire_blocking(self, n: float) -> None:
        # oversized requests drain in capacity-sized slices
        while n > 0:
            take = min(n, self.capacity)
            with self._lock:
                now = time.monotonic()
                self._credits = min(self.capacity, self._credits + (now - self._last) * self.rate)
                self._last = now
                if self._credits >= take:
                    self._credits -= take
                    wait = 0.0
                else:
                    wait = (take - self._credits) / self.rate
                    self._credits = 0.0
                    self._last = now + wait  # pre-charge the sleep
            if wait > 0:
                time.sleep(wait)
            n -= take


class TcpConnection(Connection):
    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def send(self, data: bytes) -> None:
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise ConnectionClosedError(str(exc)) from exc

    def recv(self, n: int, timeout: Optional[float] = None) -> bytes:
        self._sock.settimeout(timeout)
        parts = []
        got = 0
        while got < n:
            try:
                chunk = self._sock.recv(n - got)
            except socket.timeout:
                raise TimeoutError("read timed out") from None
            except OSError as exc:
                raise ConnectionClosedError(str(exc)) from exc
            if not chunk:
                raise ConnectionClosedError(f"closed with {got} of {n} bytes available")
            parts.append(chunk)
            got += len(chunk)
        return b"".join(parts)

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class Listener:
    def accept(self, timeout: Optional[float] = None) -> Connection:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


# in-process pipe "ports"
_pipe_listeners: dict[tuple[str, int], "PipeListener"] = {}
_pipe_lock = threading.Lock()


class PipeListener(Listener):
    def __init__(self, key: tuple[str, int]):
        self._key = key
        self._backlog: list[Connection] = []
        self._cond = threading.Condition()
        self._closed = False

    def _offer(self, conn: Connection) -> None:
        with self._cond:
            if self._closed:
                raise ConnectError("listener closed")
            self._backlog.append(conn)
            self._cond.notify()

    def accept(self, timeout: Optional[float] = None) -> Connection:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while not self._backlog:
                if self._closed:
                    raise ConnectionClosedError("listener closed")
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    raise TimeoutError("accept timed out")
                self._cond.wait(remaining)
            return self._backlog.pop(0)

    def close(self) -> None:
        with _pipe_lock:
            _pipe_listeners.pop(self._key, None)
        with self._cond:
            self._closed = True
            self._cond.notify_all()


class TcpListener(Listener):
    def __init__(self, sock: socket.socket):
        self._sock = sock
        self.port = sock.getsockname()[1]

    def accept(self, timeout: Optional[float] = None) -> Connection:
        self._sock.settimeout(timeout)
        try:
            sock, _ = self._sock.accept()
        except socket.timeout:
            raise TimeoutError("accept timed out") from None
        except OSError as exc:
            raise ConnectionClosedError(str(exc)) from exc
        return TcpConnection(sock)

    def close(self) -> None:
        self._sock.close()


def listen(desc: ConnectionDescription) -> Listener:
    if desc.protocol == LOCAL_PIPE:
        key = (desc.host, desc.port)
        with _pipe_lock:
            if key in _pipe_listeners:
                raise ConnectError(f"pipe endpoint {key} already bound")
            listener = PipeListener(key)
            _pipe_listeners[key] = listener
        return listener
    if desc.protocol == TCP:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((desc.host or "127.0.0.1", desc.port))
        except OSError as exc:
            sock.close()
            raise ConnectError(str(exc)) from exc
        sock.listen(16)
        return TcpListener(sock)
    raise ConnectError(f"cannot listen on protocol {desc.protocol!r}")


def connect(desc: ConnectionDescription, timeout: Optional[float] = 5.0) -> Connection:
    if desc.protocol == LOCAL_PIPE:
        with _pipe_lock:
            listener = _pipe_listeners.get((desc.host, desc.port))
        if listener is None:
            raise ConnectError(f"no pipe listener at {(desc.host, desc.port)}")
        ours, theirs = PipeConnection.pair()
        listener._offer(theirs)
        return ours
    if desc.protocol == TCP:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.settimeout(timeout)
        try:
            sock.connect((desc.host or "127.0.0.1", desc.port))
        except OSError as exc:
            sock.close()
            raise ConnectError(str(exc)) from exc
        sock.settimeout(None)
        return TcpConnection(sock)
    raise ConnectError(f"cannot connect with protocol {desc.protocol!r}")
