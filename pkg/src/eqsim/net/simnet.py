"""Deterministic multicast network simulation for the stream protocol.

A SimTransport carries datagrams between the members of a group over a
virtual clock, applying seeded loss, reordering, duplication and latency
per receiver.  With a fixed seed the full datagram trace is bit-identical
across runs, which makes protocol behaviour (ack cadence, retransmission
ratios, window stalls) assertable in tests.

Each endpoint owns an application-side sink per remote writer modelling
the consuming application: by default it drains delivered data as fast as
it arrives; a rate-limited or paused sink leaves the protocol's delivery
buffers full, which withholds acknowledgements and throttles the writer
through the sliding window.
"""

from __future__ import annotations

import heapq
import itertools
import random
from typing import Callable, Optional

from .connection import ConnectionDescription
from .rsp import Datagram, MemberLostError, RspConfig, RspError, RspJoinError, RspMember

_INF = float("inf")


class SimStallError(RspError):
    """The simulation ran past its virtual deadline without progress."""


class SimTransport:
    """In-process datagram network with seeded impairments."""

    def __init__(
        self,
        seed: int = 0,
        loss: float = 0.0,
        duplicate: float = 0.0,
        reorder: float = 0.0,
        latency: float = 100e-6,
        jitter: float = 20e-6,
    ):
        self.seed = seed
        self.loss = loss
        self.duplicate = duplicate
        self.reorder = reorder
        self.latency = latency
        self.jitter = jitter
        self.groups: dict[tuple[str, int], RspSimGroup] = {}

    def join(self, desc: ConnectionDescription, cfg: RspConfig, member_id: int) -> "RspSimEndpoint":
        key = (desc.host, desc.port)
        group = self.groups.get(key)
        if group is None:
            group = RspSimGroup(self, cfg)
            self.groups[key] = group
        return group.join(cfg, member_id)


class _Sink:
    """Models the application consuming one writer's stream."""

    def __init__(self, member: RspMember, writer: int, now: float):
        self.member = member
        self.writer = writer
        self.buffer = bytearray()
        self.rate: Optional[float] = None  # bytes/s; None = drain immediately
        self.paused = False
        self.credits = 0.0
        self.last = now

    def due_time(self) -> float:
        readable = self.member.readable(self.writer)
        if self.paused or readable == 0:
            return _INF
        if self.rate is None:
            return 0.0
        # batch to datagram-sized chunks so pacing does not generate an
        # event per byte; the epsilon and floor absorb float rounding
        need = min(readable, self.member.cfg.payload_size)
        if self.credits + 1e-6 >= need:
            return 0.0
        return self.last + max((need - self.credits) / self.rate, 1e-6)

    def run(self, now: float) -> None:
        if self.paused:
            return
        readable = self.member.readable(self.writer)
        if self.rate is not None:
            self.credits = min(
                self.member.cfg.payload_size * 16.0,
                self.credits + (now - self.last) * self.rate,
            )
            self.last = now
            take = min(readable, int(self.credits + 1e-6))
            if take < min(readable, self.member.cfg.payload_size):
                return
        else:
            take = readable
        if take > 0:
            self.buffer += self.member.consume(self.writer, take)
            if self.rate is not None:
                self.credits = max(0.0, self.credits - take)

    def take(self, n: int) -> bytes:
        out = bytes(self.buffer[:n])
        del self.buffer[:n]
        return out


class RspSimGroup:
    """One multicast group: members, virtual clock and event queue."""

    def __init__(self, transport: SimTransport, cfg: RspConfig):
        self.transport = transport
        self.cfg = cfg
        self.clock = 0.0
        self.members: dict[int, RspMember] = {}
        self._sinks: dict[tuple[int, int], _Sink] = {}
        self._heap: list = []
        self._counter = itertools.count()
        self._rng = random.Random(transport.seed)
        self.trace: list[tuple] = []

    # --- membership -------------------------------------------------------

    def join(self, cfg: RspConfig, member_id: int) -> "RspSimEndpoint":
        if cfg.mtu != self.cfg.mtu:
            raise RspJoinError(f"mtu mismatch: group {self.cfg.mtu}, member {cfg.mtu}")
        if cfg.members != self.cfg.members:
            raise RspJoinError("member list mismatch within group")
        if member_id in self.members:
            raise RspJoinError(f"writer id {member_id} already joined")
        member = RspMember(member_id, cfg, self.clock)
        self.members[member_id] = member
        for writer in member.peers:
            self._sinks[(member_id, writer)] = _Sink(member, writer, self.clock)
        return RspSimEndpoint(self, member)

    def sink(self, member_id: int, writer: int) -> _Sink:
        return self._sinks[(member_id, writer)]

    # --- event machinery ----------------------------------------------------

    def _transmit(self, sender: int, dgram: Datagram, now: float) -> None:
        if len(dgram.payload) > self.cfg.payload_size:
            raise RspError("datagram payload exceeds mtu")
        t = self.transport
        self.trace.append(
            ("tx", round(now, 9), sender, dgram.type, dgram.writer_id, dgram.sequence, len(dgram.payload))
        )
        for receiver in sorted(self.members):
            if receiver == sender:
                continue
            if t.loss and self._rng.random() < t.loss:
                self.trace.append(("lost", sender, receiver, dgram.type, dgram.sequence))
                continue
            delay = t.latency + t.jitter * self._rng.random()
            if t.reorder and self._rng.random() < t.reorder:
                delay += 4.0 * t.jitter * self._rng.random()
            heapq.heappush(self._heap, (now + delay, next(self._counter), receiver, dgram))
            if t.duplicate and self._rng.random() < t.duplicate:
                dup_delay = delay + t.jitter * self._rng.random()
                self.trace.append(("dup", sender, receiver, dgram.type, dgram.sequence))
                heapq.heappush(self._heap, (now + dup_delay, next(self._counter), receiver, dgram))

    def _deliver(self, receiver: int, dgram: Datagram) -> None:
        member = self.members[receiver]
        self.trace.append(
            ("rx", round(self.clock, 9), receiver, dgram.type, dgram.writer_id, dgram.sequence, len(dgram.payload))
        )
        for outgoing in member.protocol_step(dgram, self.clock):
            self._transmit(receiver, outgoing, self.clock)

    def _next_member_time(self) -> float:
        t = _INF
        for member in self.members.values():
            t = min(t, member.next_event_time())
        for sink in self._sinks.values():
            t = min(t, sink.due_time())
        return t

    def step(self) -> None:
        """Advance the virtual clock to the next event and process it."""
        t_heap = self._heap[0][0] if self._heap else _INF
        t_member = self._next_member_time()
        t_next = min(t_heap, t_member)
        if t_next == _INF:
            raise SimStallError("no pending events")
        self.clock = max(self.clock, t_next)
        if t_heap <= t_member:
            _, _, receiver, dgram = heapq.heappop(self._heap)
            self._deliver(receiver, dgram)
        for member_id in sorted(self.members):
            member = self.members[member_id]
            if member.next_event_time() <= self.clock:
                for outgoing in member.poll(self.clock):
                    self._transmit(member_id, outgoing, self.clock)
        for key in sorted(self._sinks):
            sink = self._sinks[key]
            if sink.due_time() <= self.clock:
                sink.run(self.clock)

    def run_until(self, predicate: Callable[[], bool], max_virtual: float = 300.0) -> None:
        deadline = self.clock + max_virtual
        while not predicate():
            self._check_failures()
            if self.clock > deadline:
                raise SimStallError(f"condition not reached within {max_virtual} virtual seconds")
            self.step()

    def run_for(self, duration: float) -> None:
        target = self.clock + duration
        while True:
            t_heap = self._heap[0][0] if self._heap else _INF
            if min(t_heap, self._next_member_time()) > target:
                self.clock = target
                return
            self.step()

    def _check_failures(self) -> None:
        for member in self.members.values():
            if member.failed:
                raise MemberLostError(member.failed)

    # --- aggregate metrics --------------------------------------------------

    def retransmit_ratio(self) -> float:
        sent = sum(m.stats.data_sent for m in self.members.values())
        re = sum(m.stats.retransmitted for m in self.members.values())
        total = sent + re
        return re / total if total else 0.0


class RspSimEndpoint:
    """Application-facing handle for one member of a simulated group."""

    def __init__(self, group: RspSimGroup, member: RspMember):
        self.group = group
        self.member = member
        self._closed = False

    @property
    def id(self) -> int:
        return self.member.id

    def set_consume_rate(self, writer: int, rate: Optional[float]) -> None:
        """Limit how fast the simulated application reads `writer`'s stream."""
        self.group.sink(self.id, writer).rate = rate

    def pause_consumption(self, writer: int, paused: bool = True) -> None:
        self.group.sink(self.id, writer).paused = paused

    def send(self, data: bytes, max_virtual: float = 300.0) -> None:
        """Queue `data` into the send window, advancing the simulation while
        buffers are full; returns once everything is queued (not acked)."""
        if self._closed:
            raise RspError("endpoint closed")
        view = memoryview(data)
        offset = 0
        deadline = self.group.clock + max_virtual
        while offset < len(data):
            room = self.member.send_room
            if room > 0:
                take = min(room, len(data) - offset)
                self.member.try_enqueue(bytes(view[offset : offset + take]))
                offset += take
            else:
                if self.group.clock > deadline:
                    raise SimStallError("send stalled: window never freed")
                self.group.step()
                self.group._check_failures()

    def recv(self, writer: int, n: int, max_virtual: float = 300.0) -> bytes:
        """Blocking in-order read of the next n bytes of `writer`'s stream."""
        if self._closed:
            raise RspError("endpoint closed")
        if writer not in self.member.readers:
            raise RspError(f"writer {writer} is not a group member")
        sink = self.group.sink(self.id, writer)
        self.group.run_until(lambda: len(sink.buffer) >= n, max_virtual)
        return sink.take(n)

    def flush(self, max_virtual: float = 300.0) -> None:
        """Run the group until this member's stream is fully acknowledged."""
        self.group.run_until(lambda: self.member.write_idle, max_virtual)

    def close(self) -> None:
        self._closed = True


# spec-level operation aliases

def rsp_join(
    group: ConnectionDescription, cfg: RspConfig, transport: SimTransport, member_id: int
) -> RspSimEndpoint:
    return transport.join(group, cfg, member_id)


def rsp_send(endpoint: RspSimEndpoint, data: bytes) -> None:
    endpoint.send(data)


def rsp_recv(endpoint: RspSimEndpoint, writer: int, n: int) -> bytes:
    return endpoint.recv(writer, n)
