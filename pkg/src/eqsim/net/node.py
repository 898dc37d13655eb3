"""Process abstraction: nodes exchanging framed commands over connections.

A LocalNode listens on one or more connection endpoints.  Every accepted
or outgoing connection is wrapped in a RemoteNode after a node-id
handshake, and a dedicated receive thread dispatches incoming commands to
registered handlers, in per-peer receive order.  Commands with an unknown
type are counted and reported, not fatal.

Frame layout: u32 LE frame length | u16 command type | u32 request id |
payload.  Request id 0 means fire-and-forget; nonzero ids correlate a
blocking `request` with its REPLY.
"""

from __future__ import annotations

import itertools
import struct
import threading
import uuid
from dataclasses import dataclass, field
from typing import Callable, Optional

from .connection import (
    Connection,
    ConnectionClosedError,
    ConnectionDescription,
    Listener,
    TransportError,
    connect,
    listen,
)

_FRAME = struct.Struct("<IHI")  # length (type+reqid+payload), type, request id

CMD_REPLY = 0xFFFF
CMD_REPLY_ERROR = 0xFFFE


class RemoteError(Exception):
    """An error raised on the remote side of a request."""


@dataclass
class Command:
    node: "LocalNode"
    peer: "RemoteNode"
    type: int
    request_id: int
    payload: bytes

    def reply(self, payload: bytes = b"") -> None:
        self.peer.send_raw(CMD_REPLY, self.request_id, payload)

    def reply_error(self, message: str) -> None:
        self.peer.send_raw(CMD_REPLY_ERROR, self.request_id, message.encode("utf-8"))


class RemoteNode:
    """Proxy for a peer process reached through one connection."""

    def __init__(self, node_id: uuid.UUID, connection: Connection, local: "LocalNode"):
        self.node_id = node_id
        self.connection = connection
        self._local = local
        self._send_lock = threading.Lock()
        self.alive = True

    def send_raw(self, cmd_type: int, request_id: int, payload: bytes) -> None:
        frame = _FRAME.pack(6 + len(payload), cmd_type, request_id) + payload
        with self._send_lock:
            self.connection.send(frame)

    def send_command(self, cmd_type: int, payload: bytes = b"") -> None:
        self.send_raw(cmd_type, 0, payload)

    def request(self, cmd_type: int, payload: bytes = b"", timeout: float = 30.0) -> bytes:
        return self._local._request(self, cmd_type, payload, timeout)

    def close(self) -> None:
        self.connection.close()


@dataclass
class _Waiter:
    event: threading.Event = field(default_factory=threading.Event)
    payload: bytes = b""
    error: Optional[str] = None


class LocalNode:
    """This process's presence in the cluster."""

    def __init__(self, name: str = ""):
        self.node_id = uuid.uuid4()
        self.name = name or str(self.node_id)[:8]
        self._handlers: dict[int, Callable[[Command], None]] = {}
        self._listeners: list[tuple[Listener, threading.Thread]] = []
        self._peers: dict[uuid.UUID, RemoteNode] = {}
        self._peer_threads: list[threading.Thread] = []
        self._lock = threading.Lock()
        self._closed = False
        self._request_ids = itertools.count(1)
        self._waiters: dict[int, _Waiter] = {}
        self.unknown_commands = 0
        self.peer_connected_callbacks: list[Callable[[RemoteNode], None]] = []
        self.peer_disconnected_callbacks: list[Callable[[RemoteNode], None]] = []

    # --- wiring ---------------------------------------------------------

    def register_handler(self, cmd_type: int, handler: Callable[[Command], None]) -> None:
        if cmd_type in (CMD_REPLY, CMD_REPLY_ERROR):
            raise ValueError("reserved command type")
        self._handlers[cmd_type] = handler

    def listen(self, desc: ConnectionDescription) -> Listener:
        listener = listen(desc)
        thread = threading.Thread(
            target=self._accept_loop, args=(listener,), daemon=True, name=f"{self.name}-accept"
        )
        thread.start()
        self._listeners.append((listener, thread))
        return listener

    def connect_to(self, desc: ConnectionDescription) -> RemoteNode:
        conn = connect(desc)
        conn.send(self.node_id.bytes)
        peer_id = uuid.UUID(bytes=conn.recv(16))
        return self._add_peer(peer_id, conn)

    def _accept_loop(self, listener: Listener) -> None:
        while not self._closed:
            try:
                conn = listener.accept()
            except (ConnectionClosedError, TransportError, OSError):
                return
            try:
                peer_id = uuid.UUID(bytes=conn.recv(16, timeout=10.0))
                conn.send(self.node_id.bytes)
            except (TransportError, TimeoutError, OSError):
                conn.close()
                continue
            self._add_peer(peer_id, conn)

    def _add_peer(self, peer_id: uuid.UUID, conn: Connection) -> RemoteNode:
        peer = RemoteNode(peer_id, conn, self)
        with self._lock:
            self._peers[peer_id] = peer
        thread = threading.Thread(
            target=self._receive_loop, args=(peer,), daemon=True, name=f"{self.name}-recv"
        )
        thread.start()
        self._peer_threads.append(thread)
        for cb in list(self.peer_connected_callbacks):
            cb(peer)
        return peer

    @property
    def peers(self) -> list[RemoteNode]:
        with self._lock:
            return list(self._peers.values())

    def peer(self, node_id: uuid.UUID) -> Optional[RemoteNode]:
        with self._lock:
            return self._peers.get(node_id)

    # --- dispatch -------------------------------------------------------

    def _receive_loop(self, peer: RemoteNode) -> None:
        conn = peer.connection
        while not self._closed:
            try:
                header = conn.recv(_FRAME.size)
                length, cmd_type, request_id = _FRAME.unpack(header)
                payload = conn.recv(length - 6) if length > 6 else b""
            except (TransportError, OSError):
                break
            if cmd_type in (CMD_REPLY, CMD_REPLY_ERROR):
                self._resolve(request_id, cmd_type, payload)
                continue
            handler = self._handlers.get(cmd_type)
            if handler is None:
                self.unknown_commands += 1
                if request_id:
                    try:
                        peer.send_raw(CMD_REPLY_ERROR, request_id, b"unknown command")
                    except TransportError:
                        pass
                continue
            handler(Command(self, peer, cmd_type, request_id, payload))
        peer.alive = False
        with self._lock:
            self._peers.pop(peer.node_id, None)
        for cb in list(self.peer_disconnected_callbacks):
            cb(peer)

    def _resolve(self, request_id: int, cmd_type: int, payload: bytes) -> None:
        with self._lock:
            waiter = self._waiters.pop(request_id, None)
        if waiter is None:
            return
        if cmd_type == CMD_REPLY_ERROR:
            waiter.error = payload.decode("utf-8", "replace")
        else:
            waiter.payload = payload
        waiter.event.set()

    def _request(self, peer: RemoteNode, cmd_type: int, payload: bytes, timeout: float) -> bytes:
        request_id = next(self._request_ids)
        waiter = _Waiter()
        with self._lock:
            self._waiters[request_id] = waiter
        peer.send_raw(cmd_type, request_id, payload)
        if not waiter.event.wait(timeout):
            with self._lock:
                self._waiters.pop(request_id, None)
            raise TimeoutError(f"request {cmd_type} to {peer.node_id} timed out")
        if waiter.error is not None:
            raise RemoteError(waiter.error)
        return waiter.payload

    def close(self) -> None:
        self._closed = True
        for listener, _ in self._listeners:
            listener.close()
        for peer in self.peers:
            peer.close()
        for _, thread in self._listeners:
            thread.join(timeout=2.0)
        for thread in self._peer_threads:
            thread.join(timeout=2.0)
