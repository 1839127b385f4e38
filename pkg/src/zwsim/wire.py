"""MAC frame encoding and decoding for the simulated wire format.

Frame layout (integers big-endian):

    | offset | size | field    |                                        |
    |--------|------|----------|----------------------------------------|
    | 0      | 4    | home     | 32-bit network identifier              |
    | 4      | 1    | src      | sender node id                         |
    | 5      | 1    | flags    | bit 6: ack requested, low nibble:      |
    |        |      |          | header type (1 singlecast, 3 ack)      |
    | 6      | 1    | seqn     | sequence number                        |
    | 7      | 1    | length   | total frame length including checksum  |
    | 8      | 1    | dst      | receiver node id                       |
    | 9      | n    | payload  | command-class payload                  |
    | 9+n    | 1    | checksum | XOR over all preceding bytes, seed 0xFF|

The layout is simulator-native: it carries exactly the fields the protocol
logic depends on, not certified PHY framing. Command-class numbers follow
the publicly documented values (0x98 for the legacy security class, 0x9F
for its successor) so traces stay comparable with real captures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

MAX_FRAME_SIZE = 64
MIN_FRAME_SIZE = 10  # header (9 bytes) plus checksum, empty payload

CONTROLLER_NODE_ID = 1
MAX_NODE_ID = 232  # ids above 232 are reserved by the gateway

CC_SECURITY_S0 = 0x98
CC_SECURITY_S2 = 0x9F
CC_SENSOR = 0x30

S0_NONCE_GET = 0x40
S0_NONCE_REPORT = 0x80
S0_MSG_ENCAP = 0x81
S2_NONCE_GET = 0x01
S2_NONCE_REPORT = 0x02
S2_MSG_ENCAP = 0x03
SENSOR_REPORT = 0x03

_FLAG_ACK_REQUESTED = 0x40
_KNOWN_COMMAND_CLASSES = (CC_SECURITY_S0, CC_SECURITY_S2, CC_SENSOR)


class FrameError(Exception):
    """Base class for wire-format errors."""


class OversizeFrameError(FrameError):
    """Encoded frame would exceed MAX_FRAME_SIZE."""


class FrameDecodeError(FrameError):
    """Byte string is structurally not a frame."""


class CrcError(FrameError):
    """Checksum mismatch; the frame must be treated as dropped."""


class HeaderType(Enum):
    SINGLECAST = 0x01
    ACK = 0x03


def validate_node_id(value: int, what: str = "node id") -> int:
    if not isinstance(value, int) or not 1 <= value <= MAX_NODE_ID:
        raise ValueError(f"{what} must be in 1..{MAX_NODE_ID}, got {value!r}")
    return value


def _check_u8(value: int, what: str) -> int:
    if not isinstance(value, int) or not 0 <= value <= 0xFF:
        raise ValueError(f"{what} must be an 8-bit value, got {value!r}")
    return value


def checksum(data: bytes) -> int:
    """XOR fold over ``data`` with initial value 0xFF."""
    acc = 0xFF
    for b in data:
        acc ^= b
    return acc


@dataclass(frozen=True)
class S0NonceGet:
    label = "S0NonceGet"


@dataclass(frozen=True)
class S0NonceReport:
    nonce: bytes
    label = "S0NonceReport"

    def __post_init__(self):
        if len(self.nonce) != 8:
            raise ValueError(f"receiver nonce must be 8 bytes, got {len(self.nonce)}")


@dataclass(frozen=True)
class S0MsgEncap:
    sender_nonce: bytes
    ciphertext: bytes
    receiver_nonce_id: int
    mac: bytes
    label = "S0MsgEncap"

    def __post_init__(self):
        if len(self.sender_nonce) != 8:
            raise ValueError(f"sender nonce must be 8 bytes, got {len(self.sender_nonce)}")
        if len(self.mac) != 8:
            raise ValueError(f"mac must be 8 bytes, got {len(self.mac)}")
        _check_u8(self.receiver_nonce_id, "receiver nonce id")


@dataclass(frozen=True)
class S2NonceGet:
    seqn: int
    label = "S2NonceGet"

    def __post_init__(self):
        _check_u8(self.seqn, "seqn")


@dataclass(frozen=True)
class S2NonceReport:
    sos: bool
    receiver_entropy: bytes
    label = "S2NonceReport"

    def __post_init__(self):
        if len(self.receiver_entropy) != 16:
            raise ValueError(
                f"receiver entropy must be 16 bytes, got {len(self.receiver_entropy)}"
            )


@dataclass(frozen=True)
class S2MsgEncap:
    seqn: int
    sender_entropy: bytes | None
    ciphertext: bytes
    auth_tag: bytes
    label = "S2MsgEncap"

    def __post_init__(self):
        _check_u8(self.seqn, "seqn")
        if self.sender_entropy is not None and len(self.sender_entropy) != 16:
            raise ValueError(
                f"sender entropy must be 16 bytes, got {len(self.sender_entropy)}"
            )
        if len(self.auth_tag) != 8:
            raise ValueError(f"auth tag must be 8 bytes, got {len(self.auth_tag)}")


@dataclass(frozen=True)
class AppEvent:
    data: bytes = b""
    label = "AppEvent"


@dataclass(frozen=True)
class MacAck:
    label = "MacAck"


@dataclass(frozen=True)
class UnknownPayload:
    """Payload with an unrecognized command class, kept as raw bytes."""

    raw: bytes
    label = "Unknown"

    def __post_init__(self):
        # A known leading command class must parse as that class instead.
        if self.raw and self.raw[0] in _KNOWN_COMMAND_CLASSES:
            raise ValueError("raw payload collides with a known command class")


CommandPayload = (
    S0NonceGet
    | S0NonceReport
    | S0MsgEncap
    | S2NonceGet
    | S2NonceReport
    | S2MsgEncap
    | AppEvent
    | MacAck
    | UnknownPayload
)


@dataclass(frozen=True)
class MacFrame:
    home: int
    src: int
    dst: int
    payload: CommandPayload
    seqn: int = 0
    ack_requested: bool = False
    header_type: HeaderType = field(default=HeaderType.SINGLECAST)

    def __post_init__(self):
        if not isinstance(self.home, int) or not 0 <= self.home <= 0xFFFFFFFF:
            raise ValueError(f"home id must be a 32-bit value, got {self.home!r}")
        validate_node_id(self.src, "src")
        validate_node_id(self.dst, "dst")
        _check_u8(self.seqn, "seqn")
        if isinstance(self.payload, MacAck) != (self.header_type is HeaderType.ACK):
            raise ValueError("MacAck payload requires the ack header type and vice versa")

    @property
    def checksum(self) -> int:
        """Checksum byte of this frame's encoding."""
        return encode_frame(self)[-1]


def _encode_payload(payload: CommandPayload) -> bytes:
    if isinstance(payload, S0NonceGet):
        return bytes([CC_SECURITY_S0, S0_NONCE_GET])
    if isinstance(payload, S0NonceReport):
        return bytes([CC_SECURITY_S0, S0_NONCE_REPORT]) + payload.nonce
    if isinstance(payload, S0MsgEncap):
        return (
            bytes([CC_SECURITY_S0, S0_MSG_ENCAP])
            + payload.sender_nonce
            + payload.ciphertext
            + bytes([payload.receiver_nonce_id])
            + payload.mac
        )
    if isinstance(payload, S2NonceGet):
        return bytes([CC_SECURITY_S2, S2_NONCE_GET, payload.seqn])
    if isinstance(payload, S2NonceReport):
        flags = 0x01 if payload.sos else 0x00
        return bytes([CC_SECURITY_S2, S2_NONCE_REPORT, flags]) + payload.receiver_entropy
    if isinstance(payload, S2MsgEncap):
        ext = 0x01 if payload.sender_entropy is not None else 0x00
        out = bytes([CC_SECURITY_S2, S2_MSG_ENCAP, payload.seqn, ext])
        if payload.sender_entropy is not None:
            out += payload.sender_entropy
        return out + payload.ciphertext + payload.auth_tag
    if isinstance(payload, AppEvent):
        return bytes([CC_SENSOR, SENSOR_REPORT]) + payload.data
    if isinstance(payload, MacAck):
        return b""
    if isinstance(payload, UnknownPayload):
        return payload.raw
    raise TypeError(f"unsupported payload {payload!r}")


def _decode_payload(header_type: HeaderType, raw: bytes) -> CommandPayload:
    if header_type is HeaderType.ACK:
        if raw:
            raise FrameDecodeError("ack frames carry no payload")
        return MacAck()
    if not raw:
        return UnknownPayload(b"")
    cc = raw[0]
    if cc == CC_SECURITY_S0:
        if len(raw) < 2:
            raise FrameDecodeError("security command class without a command byte")
        cmd, body = raw[1], raw[2:]
        if cmd == S0_NONCE_GET:
            if body:
                raise FrameDecodeError("nonce request carries no body")
            return S0NonceGet()
        if cmd == S0_NONCE_REPORT:
            if len(body) != 8:
                raise FrameDecodeError(f"nonce report needs an 8-byte nonce, got {len(body)}")
            return S0NonceReport(nonce=body)
        if cmd == S0_MSG_ENCAP:
            if len(body) < 17:  # sender nonce + nonce id + mac
                raise FrameDecodeError("message encapsulation too short")
            return S0MsgEncap(
                sender_nonce=body[:8],
                ciphertext=body[8:-9],
                receiver_nonce_id=body[-9],
                mac=body[-8:],
            )
        raise FrameDecodeError(f"unknown security command 0x{cmd:02x}")
    if cc == CC_SECURITY_S2:
        if len(raw) < 2:
            raise FrameDecodeError("security command class without a command byte")
        cmd, body = raw[1], raw[2:]
        if cmd == S2_NONCE_GET:
            if len(body) != 1:
                raise FrameDecodeError("nonce request needs exactly a sequence byte")
            return S2NonceGet(seqn=body[0])
        if cmd == S2_NONCE_REPORT:
            if len(body) != 17:
                raise FrameDecodeError("nonce report needs flags plus 16 bytes of entropy")
            return S2NonceReport(sos=bool(body[0] & 0x01), receiver_entropy=body[1:])
        if cmd == S2_MSG_ENCAP:
            if len(body) < 2:
                raise FrameDecodeError("message encapsulation too short")
            seqn, ext = body[0], body[1]
            rest = body[2:]
            entropy = None
            if ext & 0x01:
                if len(rest) < 16:
                    raise FrameDecodeError("extension promises entropy that is missing")
                entropy, rest = rest[:16], rest[16:]
            if len(rest) < 8:
                raise FrameDecodeError("message encapsulation lacks an auth tag")
            return S2MsgEncap(
                seqn=seqn, sender_entropy=entropy, ciphertext=rest[:-8], auth_tag=rest[-8:]
            )
        raise FrameDecodeError(f"unknown security command 0x{cmd:02x}")
    if cc == CC_SENSOR:
        if len(raw) < 2 or raw[1] != SENSOR_REPORT:
            raise FrameDecodeError("unknown sensor command")
        return AppEvent(data=raw[2:])
    return UnknownPayload(raw=raw)


def encode_frame(frame: MacFrame) -> bytes:
    """Serialize ``frame``; deterministic, last byte is the checksum."""
    body = _encode_payload(frame.payload)
    total = MIN_FRAME_SIZE + len(body)
    if total > MAX_FRAME_SIZE:
        raise OversizeFrameError(
            f"frame of {total} bytes exceeds the {MAX_FRAME_SIZE}-byte limit"
        )
    flags = frame.header_type.value | (_FLAG_ACK_REQUESTED if frame.ack_requested else 0)
    head = frame.home.to_bytes(4, "big") + bytes(
        [frame.src, flags, frame.seqn, total, frame.dst]
    )
    data = head + body
    return data + bytes([checksum(data)])


def decode_frame(data: bytes) -> MacFrame:
    """Parse ``data`` back into a frame.

    Raises CrcError on checksum mismatch (the frame counts as corrupted on
    the air) and FrameDecodeError on structural problems.
    """
    if len(data) < MIN_FRAME_SIZE:
        raise FrameDecodeError(f"frame needs at least {MIN_FRAME_SIZE} bytes, got {len(data)}")
    if checksum(data[:-1]) != data[-1]:
        raise CrcError("checksum mismatch")
    home = int.from_bytes(data[0:4], "big")
    src, flags, seqn, length, dst = data[4:9]
    if length != len(data):
        raise FrameDecodeError(f"length byte says {length}, frame has {len(data)} bytes")
    try:
        header_type = HeaderType(flags & 0x0F)
    except ValueError:
        raise FrameDecodeError(f"unknown header type 0x{flags & 0x0F:02x}") from None
    payload = _decode_payload(header_type, data[9:-1])
    try:
        return MacFrame(
            home=home,
            src=src,
            dst=dst,
            payload=payload,
            seqn=seqn,
            ack_requested=bool(flags & _FLAG_ACK_REQUESTED),
            header_type=header_type,
        )
    except ValueError as exc:
        raise FrameDecodeError(str(exc)) from None
