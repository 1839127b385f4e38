"""State machines for the gateway and its devices.

The gateway owns a single secure-session slot: issuing a receiver nonce
starts a mandatory timer (3 to 20 seconds) during which no other nonce
request is serviced. Requests arriving meanwhile join a FIFO buffer and are
drained one per timer period, which is exactly the behaviour a spoofed
nonce-request flood weaponizes: the buffer keeps the gateway busy long
after the sender stops.

Devices come in two flavours. Legacy-class devices request a nonce per
event. Successor-class devices that hold a synchronized pre-agreed-nonce
generator can push one event straight through; afterwards (battery parts
drop generator state between wakes) they must re-establish synchronization
through the same gated nonce exchange.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

from . import wire
from .crypto import (
    CtrDrbg,
    NetworkKeys,
    Prng,
    S0Nonce,
    generate_s0_nonce,
    s0_encrypt,
    s0_mac,
    s0_open,
    make_iv,
    s2_encrypt,
    s2_open,
    span_entropy,
)
from .sniff import TraceStatus

NONCE_TIMEOUT_MIN = 3.0
NONCE_TIMEOUT_MAX = 20.0
DEFAULT_NONCE_TIMEOUT = 10.0  # the recommended waiting time
DEFAULT_QUEUE_CAPACITY = 64
DEFAULT_ENCAP_RETRY_INTERVAL = 5.0
DEFAULT_ENCAP_MAX_RETRIES = 20


class SecurityClass(Enum):
    S0 = "s0"
    S2 = "s2"


class NodeStatus(Enum):
    ALIVE = "alive"
    FAILED = "failed"


@dataclass
class NodeSpec:
    id: int
    security: SecurityClass
    status: NodeStatus = NodeStatus.ALIVE
    responds_to_nonce_get: bool = True

    def __post_init__(self):
        wire.validate_node_id(self.id)


@dataclass
class SpanState:
    """Per-peer nonce synchronization state.

    ``drbg`` is present exactly while synchronized. ``pending_receiver_half``
    holds the entropy offered in the last nonce report while the sender's
    half is still outstanding.
    """

    drbg: CtrDrbg | None = None
    pending_receiver_half: bytes | None = None

    @property
    def synced(self) -> bool:
        return self.drbg is not None


@dataclass
class NonceRecord:
    kind: str  # "s0" or "s2"
    issued_to: int
    deadline: float
    nonce: S0Nonce | None = None
    token: int = 0


class TimerRequest(NamedTuple):
    at: float
    token: int


class RxResult(NamedTuple):
    status: TraceStatus
    note: str
    frames: list


def validate_timeout(timeout: float) -> float:
    if not NONCE_TIMEOUT_MIN <= timeout <= NONCE_TIMEOUT_MAX:
        raise ValueError(
            f"nonce timeout must be within {NONCE_TIMEOUT_MIN:g}..{NONCE_TIMEOUT_MAX:g}"
            f" seconds, got {timeout:g}"
        )
    return timeout


class _TimerMixin:
    def _arm(self, at: float) -> int:
        self._epoch += 1
        self._timer_requests.append(TimerRequest(at, self._epoch))
        return self._epoch

    def _cancel_timers(self) -> None:
        self._epoch += 1

    def take_timer_requests(self) -> list[TimerRequest]:
        out, self._timer_requests = self._timer_requests, []
        return out


class Controller(_TimerMixin):
    """The gateway: answers nonce requests from included ids only."""

    node_id = wire.CONTROLLER_NODE_ID

    def __init__(
        self,
        home: int,
        keys: NetworkKeys,
        prng: Prng,
        included: list[NodeSpec],
        timeout: float = DEFAULT_NONCE_TIMEOUT,
        queue_capacity: int = DEFAULT_QUEUE_CAPACITY,
    ):
        self.home = home
        self.keys = keys
        self.prng = prng
        self.timeout = validate_timeout(timeout)
        self.queue_capacity = queue_capacity
        self.included: dict[int, NodeSpec] = {}
        for spec in included:
            if spec.id in self.included or spec.id == self.node_id:
                raise ValueError(f"duplicate node id {spec.id}")
            self.included[spec.id] = spec
        self.pending_queue: deque[tuple[str, int, float]] = deque()
        self.active: NonceRecord | None = None
        self.span_table: dict[int, SpanState] = {}
        self.delivered_events: list[tuple[float, int, bytes]] = []
        self.idle_transitions: list[float] = []
        self.max_queue_len = 0
        self.alive = True
        self._last_s2_seqn: dict[int, int] = {}
        self._seqn = 0
        self._epoch = 0
        self._timer_requests: list[TimerRequest] = []

    # -- frame builders ---------------------------------------------------

    def _next_seqn(self) -> int:
        self._seqn = (self._seqn + 1) & 0xFF
        return self._seqn

    def _ack(self, frame: wire.MacFrame) -> wire.MacFrame:
        return wire.MacFrame(
            home=self.home,
            src=self.node_id,
            dst=frame.src,
            payload=wire.MacAck(),
            seqn=frame.seqn,
            header_type=wire.HeaderType.ACK,
        )

    def _s0_report(self, dst: int, nonce: S0Nonce) -> wire.MacFrame:
        return wire.MacFrame(
            home=self.home,
            src=self.node_id,
            dst=dst,
            payload=wire.S0NonceReport(nonce=nonce.value),
            seqn=self._next_seqn(),
            ack_requested=True,
        )

    def _s2_report(self, dst: int, entropy: bytes) -> wire.MacFrame:
        return wire.MacFrame(
            home=self.home,
            src=self.node_id,
            dst=dst,
            payload=wire.S2NonceReport(sos=True, receiver_entropy=entropy),
            seqn=self._next_seqn(),
            ack_requested=True,
        )

    # -- slot management --------------------------------------------------

    def _service_next(self, now: float, out: list) -> None:
        """Pop the buffer head and occupy the slot with its nonce report."""
        kind, requester, _ = self.pending_queue.popleft()
        if kind == "s0":
            nonce = generate_s0_nonce(self.prng)
            out.append(self._s0_report(requester, nonce))
            self.active = NonceRecord("s0", requester, now + self.timeout, nonce=nonce)
        else:  # fresh entropy for an initial or forced resynchronization
            entropy = self.prng.take(16)
            self.span_table[requester] = SpanState(pending_receiver_half=entropy)
            out.append(self._s2_report(requester, entropy))
            self.active = NonceRecord("s2", requester, now + self.timeout)
        self.active.token = self._arm(self.active.deadline)

    def _clear_slot(self, now: float, out: list) -> None:
        self.active = None
        self._cancel_timers()
        if self.pending_queue:
            self._service_next(now, out)
        else:
            self.idle_transitions.append(now)

    def _enqueue(self, kind: str, src: int, now: float, out: list) -> tuple[TraceStatus, str]:
        if self.active is None:
            # slot idle implies an empty buffer; serve immediately
            self.pending_queue.append((kind, src, now))
            self._service_next(now, out)
            return TraceStatus.DELIVERED, ""
        if len(self.pending_queue) >= self.queue_capacity:
            return TraceStatus.QUEUED_BEHIND_SLOT, "queue full, dropped"
        self.pending_queue.append((kind, src, now))
        self.max_queue_len = max(self.max_queue_len, len(self.pending_queue))
        return TraceStatus.QUEUED_BEHIND_SLOT, ""

    # -- handlers ----------------------------------------------------------

    def on_frame(self, frame: wire.MacFrame, now: float) -> RxResult:
        payload = frame.payload
        if isinstance(payload, wire.MacAck):
            return RxResult(TraceStatus.DELIVERED, "", [])
        if frame.src == self.node_id:
            return RxResult(TraceStatus.DELIVERED, "anomaly: gateway id spoofed", [])
        spec = self.included.get(frame.src)
        if spec is None:
            # no reply of any kind for ids that were never included
            return RxResult(TraceStatus.IGNORED_NOT_INCLUDED, "", [])
        ack = [self._ack(frame)] if frame.ack_requested else []

        if isinstance(payload, wire.S0NonceGet):
            out = list(ack)
            status, note = self._enqueue("s0", frame.src, now, out)
            return RxResult(status, note, out)
        if isinstance(payload, wire.S2NonceGet):
            if spec.security is not SecurityClass.S2:
                return RxResult(TraceStatus.DELIVERED, "legacy-class id, no span", ack)
            # the old generator state is discarded on receipt, even if the
            # reply has to wait for the slot: anyone can desynchronize a
            # peer by asking in its name
            self.span_table[frame.src] = SpanState()
            out = list(ack)
            status, note = self._enqueue("s2", frame.src, now, out)
            return RxResult(status, note, out)
        if isinstance(payload, wire.S0MsgEncap):
            return self._on_s0_encap(frame, payload, now)
        if isinstance(payload, wire.S2MsgEncap):
            return self._on_s2_encap(frame, payload, now)
        if isinstance(payload, wire.AppEvent):
            self.delivered_events.append((now, frame.src, payload.data))
            return RxResult(TraceStatus.DELIVERED, "event (unsecured)", ack)
        return RxResult(TraceStatus.DELIVERED, "unknown command class, dropped", [])

    def _on_s0_encap(self, frame, payload, now: float) -> RxResult:
        active = self.active
        if (
            active is None
            or active.kind != "s0"
            or active.issued_to != frame.src
            or payload.receiver_nonce_id != active.nonce.id
        ):
            return RxResult(TraceStatus.DECRYPT_FAILED, "no matching nonce", [])
        plaintext = s0_open(
            self.keys,
            payload.sender_nonce,
            active.nonce,
            frame.src,
            frame.dst,
            wire.S0_MSG_ENCAP,
            payload.ciphertext,
            payload.mac,
        )
        if plaintext is None:
            # leave the nonce armed; a tampered frame must not consume it
            return RxResult(TraceStatus.DECRYPT_FAILED, "mac check failed", [])
        self.delivered_events.append((now, frame.src, plaintext))
        out = [self._ack(frame)] if frame.ack_requested else []
        self._clear_slot(now, out)
        return RxResult(TraceStatus.DELIVERED, "event", out)

    def _on_s2_encap(self, frame, payload, now: float) -> RxResult:
        spec = self.included[frame.src]
        if spec.security is not SecurityClass.S2:
            return RxResult(TraceStatus.DECRYPT_FAILED, "legacy-class id, no span", [])
        span = self.span_table.get(frame.src)

        if payload.sender_entropy is not None and span and span.pending_receiver_half:
            drbg = CtrDrbg.instantiate(
                span_entropy(payload.sender_entropy, span.pending_receiver_half)
            )
            nonce = drbg.generate()
            plaintext = s2_open(
                self.keys, nonce, frame.src, frame.dst, payload.seqn,
                payload.ciphertext, payload.auth_tag,
            )
            if plaintext is not None:
                span.drbg = drbg
                span.pending_receiver_half = None
                return self._deliver_s2(frame, payload, plaintext, now)
        elif span and span.synced:
            trial = span.drbg.copy()
            nonce = trial.generate()
            plaintext = s2_open(
                self.keys, nonce, frame.src, frame.dst, payload.seqn,
                payload.ciphertext, payload.auth_tag,
            )
            if plaintext is not None:
                span.drbg = trial
                return self._deliver_s2(frame, payload, plaintext, now)

        if payload.seqn == self._last_s2_seqn.get(frame.src):
            out = [self._ack(frame)] if frame.ack_requested else []
            return RxResult(TraceStatus.DELIVERED, "duplicate, re-acked", out)

        # resynchronization needed; the reply shares the secure-session slot
        if self.active is None:
            out: list = []
            self.pending_queue.append(("s2", frame.src, now))
            self._service_next(now, out)
            return RxResult(TraceStatus.DECRYPT_FAILED, "resync nonce report sent", out)
        if len(self.pending_queue) >= self.queue_capacity:
            return RxResult(TraceStatus.DECRYPT_FAILED, "resync dropped, queue full", [])
        self.pending_queue.append(("s2", frame.src, now))
        self.max_queue_len = max(self.max_queue_len, len(self.pending_queue))
        return RxResult(TraceStatus.DECRYPT_FAILED, "resync queued behind slot", [])

    def _deliver_s2(self, frame, payload, plaintext: bytes, now: float) -> RxResult:
        self.delivered_events.append((now, frame.src, plaintext))
        self._last_s2_seqn[frame.src] = payload.seqn
        out = [self._ack(frame)] if frame.ack_requested else []
        if (
            self.active is not None
            and self.active.kind == "s2"
            and self.active.issued_to == frame.src
        ):
            self._clear_slot(now, out)
        return RxResult(TraceStatus.DELIVERED, "event", out)

    def on_timer(self, token: int, now: float) -> list:
        """Nonce timer expiry: free the slot and serve the buffer head."""
        if self.active is None or self.active.token != token:
            return []
        out: list = []
        self._clear_slot(now, out)
        return out

    def on_trigger(self, payload: bytes, now: float) -> list:
        return []  # the gateway originates no events of its own


class Device(_TimerMixin):
    """A sensor-style node; one pending event at a time."""

    def __init__(
        self,
        spec: NodeSpec,
        home: int,
        keys: NetworkKeys,
        prng: Prng,
        request_retry_interval: float | None = None,
        request_max_retries: int = 0,
        encap_retry_interval: float = DEFAULT_ENCAP_RETRY_INTERVAL,
        encap_max_retries: int = DEFAULT_ENCAP_MAX_RETRIES,
    ):
        self.spec = spec
        self.home = home
        self.keys = keys
        self.prng = prng
        self.request_retry_interval = request_retry_interval
        self.request_max_retries = request_max_retries
        self.encap_retry_interval = encap_retry_interval
        self.encap_max_retries = encap_max_retries
        self.span = SpanState()
        self.pending_event: bytes | None = None
        self.abandoned_events = 0
        self._state = "idle"  # idle | awaiting_report | awaiting_ack
        self._last_encap: wire.MacFrame | None = None
        self._request_sends = 0
        self._encap_sends = 0
        self._seqn = 0
        self._epoch = 0
        self._timer_requests: list[TimerRequest] = []

    @property
    def node_id(self) -> int:
        return self.spec.id

    @property
    def alive(self) -> bool:
        return self.spec.status is NodeStatus.ALIVE

    def _next_seqn(self) -> int:
        self._seqn = (self._seqn + 1) & 0xFF
        return self._seqn

    def _frame(self, payload, ack_requested: bool = True) -> wire.MacFrame:
        return wire.MacFrame(
            home=self.home,
            src=self.node_id,
            dst=wire.CONTROLLER_NODE_ID,
            payload=payload,
            seqn=self._seqn,
            ack_requested=ack_requested,
        )

    def _ack(self, frame: wire.MacFrame) -> wire.MacFrame:
        return wire.MacFrame(
            home=self.home,
            src=self.node_id,
            dst=frame.src,
            payload=wire.MacAck(),
            seqn=frame.seqn,
            header_type=wire.HeaderType.ACK,
        )

    # -- event origination --------------------------------------------------

    def on_trigger(self, payload: bytes, now: float) -> list:
        if not self.alive:
            return []
        self._cancel_timers()
        self.pending_event = payload
        if self.spec.security is SecurityClass.S2 and self.span.synced:
            # pre-agreed nonce: encrypt and send without any exchange
            return [self._send_s2_encap(self.span.drbg, None, now)]
        self._state = "awaiting_report"
        self._request_sends = 1
        self._arm_request_timer(now)
        self._next_seqn()
        if self.spec.security is SecurityClass.S0:
            return [self._frame(wire.S0NonceGet())]
        return [self._frame(wire.S2NonceGet(seqn=self._seqn))]

    def _arm_request_timer(self, now: float) -> None:
        if self.request_retry_interval is not None:
            self._arm(now + self.request_retry_interval)

    def _send_s2_encap(self, drbg: CtrDrbg, entropy: bytes | None, now: float) -> wire.MacFrame:
        nonce = drbg.generate()
        seqn = self._next_seqn()
        ciphertext, tag = s2_encrypt(
            self.keys, nonce, self.node_id, wire.CONTROLLER_NODE_ID, seqn,
            self.pending_event,
        )
        frame = self._frame(
            wire.S2MsgEncap(
                seqn=seqn, sender_entropy=entropy, ciphertext=ciphertext, auth_tag=tag
            )
        )
        # generator state is spent on this event; the next one resyncs
        self.span.drbg = None
        self._state = "awaiting_ack"
        self._last_encap = frame
        self._encap_sends = 1
        self._arm(now + self.encap_retry_interval)
        return frame

    # -- handlers -------------------------------------------------------------

    def on_frame(self, frame: wire.MacFrame, now: float) -> RxResult:
        if not self.alive:
            return RxResult(TraceStatus.DELIVERED, "receiver failed", [])
        payload = frame.payload
        ack = [self._ack(frame)] if frame.ack_requested else []

        if isinstance(payload, wire.MacAck):
            if self._state == "awaiting_ack":
                self.pending_event = None
                self._last_encap = None
                self._state = "idle"
                self._cancel_timers()
            return RxResult(TraceStatus.DELIVERED, "", [])

        if isinstance(payload, wire.S0NonceReport):
            if (
                self.spec.security is not SecurityClass.S0
                or self._state != "awaiting_report"
                or self.pending_event is None
            ):
                return RxResult(TraceStatus.DELIVERED, "no pending event, ignored", ack)
            self._cancel_timers()
            sender_nonce = generate_s0_nonce(self.prng)
            receiver_nonce = S0Nonce(payload.nonce)
            iv = make_iv(sender_nonce, receiver_nonce)
            ciphertext = s0_encrypt(self.keys.encryption_key, iv, self.pending_event)
            mac = s0_mac(
                self.keys.authentication_key, iv, self.node_id,
                wire.CONTROLLER_NODE_ID, wire.S0_MSG_ENCAP, ciphertext,
            )
            self._next_seqn()
            encap = self._frame(
                wire.S0MsgEncap(
                    sender_nonce=sender_nonce.value,
                    ciphertext=ciphertext,
                    receiver_nonce_id=receiver_nonce.id,
                    mac=mac,
                )
            )
            self._state = "awaiting_ack"
            self._last_encap = encap
            self._encap_sends = 1
            self._arm(now + self.encap_retry_interval)
            return RxResult(TraceStatus.DELIVERED, "", ack + [encap])

        if isinstance(payload, wire.S2NonceReport):
            if self.spec.security is not SecurityClass.S2 or self.pending_event is None:
                return RxResult(TraceStatus.DELIVERED, "no pending event, ignored", ack)
            self._cancel_timers()
            sender_half = self.prng.take(16)
            drbg = CtrDrbg.instantiate(span_entropy(sender_half, payload.receiver_entropy))
            encap = self._send_s2_encap(drbg, sender_half, now)
            return RxResult(TraceStatus.DELIVERED, "resynchronized", ack + [encap])

        if isinstance(payload, (wire.S0NonceGet, wire.S2NonceGet)):
            if not self.spec.responds_to_nonce_get:
                return RxResult(TraceStatus.DELIVERED, "nonce requests disabled", [])
            if isinstance(payload, wire.S0NonceGet):
                self._next_seqn()
                reply = self._frame(
                    wire.S0NonceReport(nonce=generate_s0_nonce(self.prng).value)
                )
            else:
                self._next_seqn()
                reply = self._frame(
                    wire.S2NonceReport(sos=True, receiver_entropy=self.prng.take(16))
                )
            return RxResult(TraceStatus.DELIVERED, "", ack + [reply])

        return RxResult(TraceStatus.DELIVERED, "unsupported, dropped", ack)

    def on_timer(self, token: int, now: float) -> list:
        if token != self._epoch or not self.alive:
            return []
        if self._state == "awaiting_ack" and self._last_encap is not None:
            if self._encap_sends <= self.encap_max_retries:
                self._encap_sends += 1
                self._arm(now + self.encap_retry_interval)
                return [self._last_encap]
            self._abandon()
            return []
        if self._state == "awaiting_report":
            if self._request_sends <= self.request_max_retries:
                self._request_sends += 1
                self._arm_request_timer(now)
                if self.spec.security is SecurityClass.S0:
                    self._next_seqn()
                    return [self._frame(wire.S0NonceGet())]
                self._next_seqn()
                return [self._frame(wire.S2NonceGet(seqn=self._seqn))]
            self._abandon()
        return []

    def _abandon(self) -> None:
        self.pending_event = None
        self._last_encap = None
        self._state = "idle"
        self.abandoned_events += 1
        self._cancel_timers()
