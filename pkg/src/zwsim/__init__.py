"""Deterministic discrete-event simulator of Z-Wave-style secure messaging
and the nonce-request flooding attack that blocks it."""

from .wire import (
    MacFrame,
    HeaderType,
    encode_frame,
    decode_frame,
    checksum,
    CrcError,
    FrameDecodeError,
    OversizeFrameError,
)
from .crypto import (
    CtrDrbg,
    NetworkKeys,
    Prng,
    S0Nonce,
    derive_keys,
    generate_s0_nonce,
    make_iv,
    s0_encrypt,
    s0_mac,
    span_entropy,
)
from .medium import Medium, MediumConfig, SchedulingError
from .nodes import Controller, Device, NodeSpec, NodeStatus, SecurityClass, SpanState
from .sniff import Trace, TraceRecord, TraceStatus, export_csv, load_csv
from .scenario import Scenario, ScenarioError, load_scenario, run_scenario

__version__ = "0.1.0"
