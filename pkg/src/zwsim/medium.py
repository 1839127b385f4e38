"""Deterministic discrete-event scheduler and lossy broadcast medium.

Time is virtual (integer microseconds internally, seconds at the API), so
an hour-long scenario runs in milliseconds. Events execute strictly in
(time, insertion order); with a fixed seed two runs produce byte-identical
traces.

Every transmitted frame passes through the real wire codec. Corruption is
modeled as an actual bit flip in the encoded bytes, so the receiver drops
the frame through its own checksum verification. A sniffer tap records
every transmission regardless of what happens at the addressed receiver;
its independent corruption draw only annotates the trace, mirroring a
packet debugger that occasionally captures garbage the receiver never saw.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable

from . import wire
from .crypto import Prng
from .sniff import Trace, TraceStatus


def to_us(seconds: float) -> int:
    return round(seconds * 1_000_000)


def to_s(us: int) -> float:
    return us / 1_000_000


class SchedulingError(Exception):
    """Event scheduled in the past."""


@dataclass
class MediumConfig:
    propagation_delay: float = 0.01
    loss_probability: float = 0.0
    crc_corruption_probability: float = 0.0

    def __post_init__(self):
        if self.propagation_delay < 0:
            raise ValueError("propagation delay must be non-negative")
        for name in ("loss_probability", "crc_corruption_probability"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {p}")


@dataclass
class SimReport:
    frames_sent: int = 0
    frames_delivered: int = 0
    frames_lost: int = 0
    frames_corrupted: int = 0
    events_triggered: int = 0


@dataclass(order=True)
class _Entry:
    time_us: int
    seq: int
    fn: Callable[[], None] = field(compare=False)


class Medium:
    """Connects all nodes; owns the event queue, the clock, and the tap."""

    def __init__(self, config: MediumConfig, prng: Prng, trace: Trace | None = None):
        self.config = config
        self.prng = prng
        self.trace = trace if trace is not None else Trace()
        self.now_us = 0
        self.counters = SimReport()
        self._heap: list[_Entry] = []
        self._seq = 0
        self._nodes: dict[int, object] = {}

    @property
    def now(self) -> float:
        return to_s(self.now_us)

    def register(self, node) -> None:
        if node.node_id in self._nodes:
            raise ValueError(f"node id {node.node_id} registered twice")
        self._nodes[node.node_id] = node

    def node(self, node_id: int):
        return self._nodes.get(node_id)

    def schedule(self, at: float, fn: Callable[[], None]) -> None:
        self._schedule_us(to_us(at), fn)

    def _schedule_us(self, at_us: int, fn: Callable[[], None]) -> None:
        if at_us < self.now_us:
            raise SchedulingError(
                f"cannot schedule at {to_s(at_us)}, clock is at {self.now}"
            )
        heapq.heappush(self._heap, _Entry(at_us, self._seq, fn))
        self._seq += 1

    def schedule_trigger(self, at: float, node_id: int, payload: bytes) -> None:
        def fire():
            node = self._nodes.get(node_id)
            self.counters.events_triggered += 1
            if node is None:
                return
            self._dispatch(node, lambda: node.on_trigger(payload, self.now))

        self.schedule(at, fire)

    def _schedule_timer(self, at: float, node, token: int) -> None:
        self._schedule_us(
            max(to_us(at), self.now_us),
            lambda: self._dispatch(node, lambda: node.on_timer(token, self.now)),
        )

    def _dispatch(self, node, fn: Callable[[], list]) -> None:
        frames = fn()
        for frame in frames or []:
            self.transmit(frame, origin=node.node_id)
        for at, token in node.take_timer_requests():
            self._schedule_timer(at, node, token)

    def transmit(self, frame: wire.MacFrame, origin: int | None = None,
                 attacker: bool = False) -> None:
        """Broadcast a frame; it reaches its destination one delay later."""
        origin_node = self._nodes.get(origin) if origin is not None else None
        if origin_node is not None and not origin_node.alive:
            return  # failed nodes never transmit
        encoded = wire.encode_frame(frame)
        self.counters.frames_sent += 1
        sent_at = self.now
        self._schedule_us(
            self.now_us + to_us(self.config.propagation_delay),
            lambda: self._resolve(frame, encoded, sent_at, attacker),
        )

    def _resolve(self, frame: wire.MacFrame, encoded: bytes, sent_at: float,
                 attacker: bool) -> None:
        notes = ["spoofed"] if attacker else []
        lost = self.prng.u01() < self.config.loss_probability
        corrupted = (not lost) and self.prng.u01() < self.config.crc_corruption_probability
        if corrupted:
            flip = self.prng.below(len(encoded) * 8)
            encoded = bytes(
                b ^ (0x80 >> (flip % 8)) if i == flip // 8 else b
                for i, b in enumerate(encoded)
            )
        # independent draw for the tap; annotation only
        if self.prng.u01() < self.config.crc_corruption_probability:
            notes.append("tap saw corrupt bytes")

        if lost:
            self.counters.frames_lost += 1
            self.trace.record(frame, TraceStatus.LOST, sent_at, "; ".join(notes))
            return

        receiver = self._nodes.get(frame.dst)
        try:
            received = wire.decode_frame(encoded)
        except wire.CrcError:
            self.counters.frames_corrupted += 1
            self.trace.record(frame, TraceStatus.CRC_ERROR, sent_at, "; ".join(notes))
            return
        self.counters.frames_delivered += 1
        if receiver is None or not receiver.alive:
            notes.append("no receiver")
            self.trace.record(frame, TraceStatus.DELIVERED, sent_at, "; ".join(notes))
            return
        result_holder = {}

        def deliver():
            result = receiver.on_frame(received, self.now)
            result_holder["status"] = result.status
            if result.note:
                notes.append(result.note)
            return result.frames

        self._dispatch(receiver, deliver)
        self.trace.record(frame, result_holder["status"], sent_at, "; ".join(notes))

    def run_until(self, t_end: float) -> SimReport:
        """Process every event with time <= t_end; clock ends at t_end."""
        end_us = to_us(t_end)
        while self._heap and self._heap[0].time_us <= end_us:
            entry = heapq.heappop(self._heap)
            assert entry.time_us >= self.now_us, "clock must be monotone"
            self.now_us = entry.time_us
            entry.fn()
        self.now_us = max(self.now_us, end_us)
        return self.counters
