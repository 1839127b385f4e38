"""Secure-messaging primitives for both security generations.

The legacy scheme requests a fresh 8-byte receiver nonce per message,
concatenates sender and receiver nonces into a 16-byte IV, encrypts with an
AES-128 output-feedback keystream, and authenticates with an 8-byte
truncated CBC-MAC. The MAC deliberately covers only src, dst, the command
byte, the ciphertext length, and the ciphertext, not the whole frame.

The successor scheme pre-agrees nonces: both peers seed an AES-128
counter-mode DRBG (NIST SP 800-90A profile without derivation function)
with 32 bytes of joint entropy and then draw 13-byte nonces in lockstep.
A message decrypts if and only if both generators are synchronized.
"""

from __future__ import annotations

from dataclasses import dataclass

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

_MASK64 = (1 << 64) - 1

KEY_DERIVATION_ENCRYPT_BLOCK = b"\xaa" * 16
KEY_DERIVATION_AUTH_BLOCK = b"\x55" * 16

S2_NONCE_LEN = 13
SPAN_ENTROPY_LEN = 32


def _aes_ecb(key: bytes, block: bytes) -> bytes:
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(block) + enc.finalize()


@dataclass(frozen=True)
class NetworkKeys:
    network_key: bytes
    encryption_key: bytes
    authentication_key: bytes


def derive_keys(network_key: bytes) -> NetworkKeys:
    """Expand the 16-byte network key into encryption and authentication keys.

    The two derived keys are AES encryptions of fixed constant blocks under
    the network key, matching the publicly documented legacy scheme.
    """
    if len(network_key) != 16:
        raise ValueError(f"network key must be 16 bytes, got {len(network_key)}")
    return NetworkKeys(
        network_key=network_key,
        encryption_key=_aes_ecb(network_key, KEY_DERIVATION_ENCRYPT_BLOCK),
        authentication_key=_aes_ecb(network_key, KEY_DERIVATION_AUTH_BLOCK),
    )


class Prng:
    """Counter-based 64-bit generator (split-mix).

    Chosen over stdlib generators so that identical seeds reproduce the
    identical byte stream in any language a trace consumer might use.
    """

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._state = self.seed
        self.position = 0

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        self.position += 1
        return z ^ (z >> 31)

    def take(self, n: int) -> bytes:
        out = bytearray()
        while len(out) < n:
            out += self.next_u64().to_bytes(8, "big")
        return bytes(out[:n])

    def u01(self) -> float:
        return self.next_u64() / 2**64

    def below(self, n: int) -> int:
        return self.next_u64() % n


@dataclass(frozen=True)
class S0Nonce:
    value: bytes

    def __post_init__(self):
        if len(self.value) != 8:
            raise ValueError(f"nonce must be 8 bytes, got {len(self.value)}")

    @property
    def id(self) -> int:
        return self.value[0]


def generate_s0_nonce(prng: Prng) -> S0Nonce:
    """Draw a fresh 8-byte receiver/sender nonce from the generator."""
    return S0Nonce(prng.take(8))


def make_iv(sender: S0Nonce, receiver: S0Nonce) -> bytes:
    """16-byte IV: sender nonce first, receiver nonce second."""
    return sender.value + receiver.value


def s0_encrypt(encryption_key: bytes, iv: bytes, data: bytes) -> bytes:
    """AES-128 output-feedback keystream; its own inverse for a fixed IV."""
    if len(iv) != 16:
        raise ValueError(f"iv must be 16 bytes, got {len(iv)}")
    stream = b""
    block = iv
    while len(stream) < len(data):
        block = _aes_ecb(encryption_key, block)
        stream += block
    return bytes(a ^ b for a, b in zip(data, stream))


def cbc_mac(key: bytes, iv: bytes, message: bytes) -> bytes:
    """Full-width CBC-MAC with the IV as initial chaining value.

    The message is zero-padded to a whole number of blocks; an empty
    message authenticates a single zero block.
    """
    if len(iv) != 16:
        raise ValueError(f"iv must be 16 bytes, got {len(iv)}")
    pad = 16 if not message else -len(message) % 16
    padded = message + b"\x00" * pad
    state = iv
    for off in range(0, len(padded), 16):
        block = padded[off : off + 16]
        state = _aes_ecb(key, bytes(a ^ b for a, b in zip(state, block)))
    return state


def s0_mac(
    authentication_key: bytes,
    iv: bytes,
    src: int,
    dst: int,
    command: int,
    ciphertext: bytes,
) -> bytes:
    """8-byte tag over src, dst, command byte, ciphertext length, ciphertext.

    Deliberately not the whole frame; unauthenticated header fields are
    what make sender spoofing possible in the first place.
    """
    if len(ciphertext) > 0xFF:
        raise ValueError("ciphertext too long for a single frame")
    covered = bytes([src, dst, command, len(ciphertext)]) + ciphertext
    return cbc_mac(authentication_key, iv, covered)[:8]


def _inc_block(block: bytes) -> bytes:
    return ((int.from_bytes(block, "big") + 1) & ((1 << 128) - 1)).to_bytes(16, "big")


@dataclass
class CtrDrbg:
    """AES-128 CTR_DRBG per NIST SP 800-90A, no derivation function.

    Minimal profile: 32-byte entropy input, no personalization string, no
    reseeding at simulation scale. Two instances seeded with the same
    entropy stay equal after any equal number of generate calls.
    """

    key: bytes
    counter_v: bytes
    generate_count: int = 0

    @classmethod
    def instantiate(cls, entropy: bytes) -> "CtrDrbg":
        if len(entropy) != SPAN_ENTROPY_LEN:
            raise ValueError(f"entropy must be {SPAN_ENTROPY_LEN} bytes, got {len(entropy)}")
        state = cls(key=b"\x00" * 16, counter_v=b"\x00" * 16)
        state._update(entropy)
        return state

    def _update(self, provided: bytes) -> None:
        temp = b""
        key, v = self.key, self.counter_v
        while len(temp) < 32:
            v = _inc_block(v)
            temp += _aes_ecb(key, v)
        temp = bytes(a ^ b for a, b in zip(temp[:32], provided))
        self.key, self.counter_v = temp[:16], temp[16:]

    def generate(self, n: int = S2_NONCE_LEN) -> bytes:
        """Return the next ``n`` bytes of generator output and advance."""
        temp = b""
        v = self.counter_v
        while len(temp) < n:
            v = _inc_block(v)
            temp += _aes_ecb(self.key, v)
        self.counter_v = v
        self._update(b"\x00" * 32)
        self.generate_count += 1
        return temp[:n]

    def copy(self) -> "CtrDrbg":
        return CtrDrbg(self.key, self.counter_v, self.generate_count)


def span_entropy(sender_half: bytes, receiver_half: bytes) -> bytes:
    """Joint 32-byte generator seed: sender half first."""
    if len(sender_half) != 16 or len(receiver_half) != 16:
        raise ValueError("entropy halves must be 16 bytes each")
    return sender_half + receiver_half


def _s2_iv(nonce: bytes) -> bytes:
    if len(nonce) != S2_NONCE_LEN:
        raise ValueError(f"nonce must be {S2_NONCE_LEN} bytes, got {len(nonce)}")
    return nonce + b"\x00" * (16 - S2_NONCE_LEN)


def s2_encrypt(
    keys: NetworkKeys, nonce: bytes, src: int, dst: int, seqn: int, data: bytes
) -> tuple[bytes, bytes]:
    """Encrypt under a pre-agreed nonce; returns (ciphertext, 8-byte tag).

    Keystream-plus-tag stand-in for the real AEAD: verification succeeds
    exactly when both peers hold the same next nonce, which is the only
    property the state machines rely on.
    """
    iv = _s2_iv(nonce)
    ciphertext = s0_encrypt(keys.encryption_key, iv, data)
    covered = bytes([src, dst, seqn, len(ciphertext)]) + ciphertext
    tag = cbc_mac(keys.authentication_key, iv, covered)[:8]
    return ciphertext, tag


def s2_open(
    keys: NetworkKeys,
    nonce: bytes,
    src: int,
    dst: int,
    seqn: int,
    ciphertext: bytes,
    tag: bytes,
) -> bytes | None:
    """Verify and decrypt; None when the tag does not match this nonce."""
    iv = _s2_iv(nonce)
    covered = bytes([src, dst, seqn, len(ciphertext)]) + ciphertext
    if cbc_mac(keys.authentication_key, iv, covered)[:8] != tag:
        return None
    return s0_encrypt(keys.encryption_key, iv, ciphertext)


def s0_open(
    keys: NetworkKeys,
    sender_nonce: bytes,
    receiver_nonce: S0Nonce,
    src: int,
    dst: int,
    command: int,
    ciphertext: bytes,
    mac: bytes,
) -> bytes | None:
    """Verify a legacy encapsulation and decrypt; None on a bad tag."""
    iv = make_iv(S0Nonce(sender_nonce), receiver_nonce)
    if s0_mac(keys.authentication_key, iv, src, dst, command, ciphertext) != mac:
        return None
    return s0_encrypt(keys.encryption_key, iv, ciphertext)
