"""Frame protection and wire codec for the UAV <-> ground-station link.

Payloads are encrypted with AES-128 in counter mode and authenticated by an
8-byte tag truncated from AES-128-CMAC over header || ciphertext. The wire
image follows the XBee API habit: a 0x7E sync byte, a big-endian length, and a
trailing one-byte checksum that only guards against transport corruption.
"""
from __future__ import annotations

import hmac
import math
import struct
from dataclasses import dataclass, field
from enum import Enum, IntEnum

from cryptography.hazmat.primitives import cmac
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import (
    BadChecksum,
    BadFrameType,
    BadLength,
    BadMic,
    BadSync,
    FrameTooShort,
    PayloadError,
    RekeyRequired,
    Replay,
)

SYNC = 0x7E
MIC_BYTES = 8
HEADER_BYTES = 9  # type u8, src u16, dst u16, counter u32
MIN_WIRE_BYTES = 1 + 2 + HEADER_BYTES + MIC_BYTES + 1
MAX_COUNTER = 0xFFFFFFFF
BROADCAST = 0xFFFF


class FrameType(IntEnum):
    COMMAND = 1
    TELEMETRY = 2
    KEY_CHANGE_REQUEST = 3
    KEY_CHANGE_ACK = 4


class Verdict(str, Enum):
    TRUSTED = "Trusted"
    FOREIGN = "Foreign"


def _key_bytes(key) -> bytes:
    raw = getattr(key, "bytes", key)
    if len(raw) != 16:
        raise ValueError("AES-128 needs a 16-byte key")
    return bytes(raw)


def _check_address(addr: int) -> int:
    if not 0 <= addr < BROADCAST:
        raise ValueError(f"address {addr:#06x} is not a node address")
    return addr


@dataclass(frozen=True)
class SecureFrame:
    src: int
    dst: int
    frame_counter: int
    frame_type: FrameType
    ciphertext: bytes
    mic: bytes

    def header(self) -> bytes:
        return struct.pack(">BHHI", self.frame_type, self.src, self.dst, self.frame_counter)


def nonce(src: int, dst: int, counter: int, frame_type: int) -> bytes:
    """Initial counter block: src || dst || counter || type || 7 zero bytes."""
    return struct.pack(">HHIB", src, dst, counter, frame_type) + bytes(7)


def _ctr(key: bytes, iv: bytes, data: bytes) -> bytes:
    if not data:
        return b""
    enc = Cipher(algorithms.AES(key), modes.CTR(iv)).encryptor()
    return enc.update(data) + enc.finalize()


def compute_mic(key, header: bytes, ciphertext: bytes) -> bytes:
    mac = cmac.CMAC(algorithms.AES(_key_bytes(key)))
    mac.update(header + ciphertext)
    return mac.finalize()[:MIC_BYTES]


def seal(plaintext: bytes, frame_type: FrameType, src: int, dst: int, counter: int, key) -> SecureFrame:
    """Encrypt and authenticate one payload. Pure; counter bookkeeping is the caller's."""
    if not 0 <= counter <= MAX_COUNTER:
        raise RekeyRequired(f"frame counter {counter} exhausted; install a new key")
    frame_type = FrameType(frame_type)
    _check_address(src)
    _check_address(dst)
    raw = _key_bytes(key)
    ciphertext = _ctr(raw, nonce(src, dst, counter, frame_type), bytes(plaintext))
    header = struct.pack(">BHHI", frame_type, src, dst, counter)
    return SecureFrame(src, dst, counter, frame_type, ciphertext, compute_mic(raw, header, ciphertext))


class ReplayGuard:
    """Highest counter accepted per source under the current key.

    One owner per link endpoint; reset whenever the key changes.
    """

    def __init__(self):
        self._last: dict[int, int] = {}

    def check(self, src: int, counter: int) -> None:
        last = self._last.get(src)
        if last is not None and counter <= last:
            raise Replay(f"counter {counter} from {src:#06x} not above {last}")

    def accept(self, src: int, counter: int) -> None:
        self._last[src] = counter

    def reset(self) -> None:
        self._last.clear()


def open_frame(frame: SecureFrame, key, expected_peer: int, guard: ReplayGuard | None = None):
    """Verify and decrypt; returns ``(plaintext, Verdict)``.

    BadMic and Replay are raised and the plaintext is withheld. A frame from an
    address other than ``expected_peer`` still decrypts and is returned with
    ``Verdict.FOREIGN`` so the failsafe layer can react to it.
    """
    raw = _key_bytes(key)
    expected = compute_mic(raw, frame.header(), frame.ciphertext)
    if not hmac.compare_digest(expected, frame.mic):
        raise BadMic(f"MIC mismatch on frame {frame.frame_counter} from {frame.src:#06x}")
    if guard is not None:
        guard.check(frame.src, frame.frame_counter)
    plaintext = _ctr(raw, nonce(frame.src, frame.dst, frame.frame_counter, frame.frame_type), frame.ciphertext)
    if guard is not None:
        guard.accept(frame.src, frame.frame_counter)
    verdict = Verdict.TRUSTED if frame.src == expected_peer else Verdict.FOREIGN
    return plaintext, verdict


def checksum(body: bytes) -> int:
    return 0xFF - (sum(body) & 0xFF)


def encode_frame(frame: SecureFrame) -> bytes:
    if len(frame.mic) != MIC_BYTES:
        raise ValueError("MIC must be 8 bytes")
    body = frame.header() + frame.ciphertext + frame.mic
    if len(body) > 0xFFFF:
        raise ValueError("frame body too long for a 16-bit length field")
    return bytes([SYNC]) + struct.pack(">H", len(body)) + body + bytes([checksum(body)])


def decode_frame(data: bytes) -> SecureFrame:
    data = bytes(data)
    if len(data) < MIN_WIRE_BYTES:
        raise FrameTooShort(f"{len(data)} bytes; a frame needs at least {MIN_WIRE_BYTES}")
    if data[0] != SYNC:
        raise BadSync(f"expected sync 0x7E, got {data[0]:#04x}")
    (length,) = struct.unpack_from(">H", data, 1)
    if length < HEADER_BYTES + MIC_BYTES or len(data) != 3 + length + 1:
        raise BadLength(f"length field {length} disagrees with {len(data)}-byte image")
    body = data[3:3 + length]
    if checksum(body) != data[-1]:
        raise BadChecksum(f"checksum {data[-1]:#04x} != {checksum(body):#04x}")
    ftype, src, dst, counter = struct.unpack_from(">BHHI", body)
    try:
        ftype = FrameType(ftype)
    except ValueError:
        raise BadFrameType(f"unknown frame type {ftype}") from None
    return SecureFrame(
        src=src,
        dst=dst,
        frame_counter=counter,
        frame_type=ftype,
        ciphertext=body[HEADER_BYTES:-MIC_BYTES],
        mic=body[-MIC_BYTES:],
    )


class LinkEndpoint:
    """Stateful side of one node: send counter and replay tracking under one key."""

    def __init__(self, address: int, key, peer: int):
        self.address = _check_address(address)
        self.peer = peer
        self.key = _key_bytes(key)
        self.next_counter = 0
        self.guard = ReplayGuard()
        self._used: set[int] = set()

    def send(self, frame_type: FrameType, payload: bytes, dst: int | None = None) -> SecureFrame:
        counter = self.next_counter
        if counter in self._used:
            raise AssertionError("frame counter reused under the current key")
        frame = seal(payload, frame_type, self.address, self.peer if dst is None else dst, counter, self.key)
        self._used.add(counter)
        self.next_counter += 1
        return frame

    def receive(self, frame: SecureFrame):
        return open_frame(frame, self.key, self.peer, self.guard)

    def install_key(self, key) -> None:
        """New key: counters restart at zero and replay state is cleared."""
        self.key = _key_bytes(key)
        self.next_counter = 0
        self.guard.reset()
        self._used.clear()


# --- command payloads -------------------------------------------------------

class CommandKind(IntEnum):
    GOTO = 1
    HOVER = 2
    RETURN_TO_LAUNCH = 3
    RESUME = 4


@dataclass(frozen=True)
class Command:
    kind: CommandKind
    index: int = 0
    x: float = 0.0
    y: float = 0.0

    def encode(self) -> bytes:
        if self.kind is CommandKind.GOTO:
            return struct.pack(">BHdd", self.kind, self.index, self.x, self.y)
        return bytes([self.kind])

    @classmethod
    def decode(cls, payload: bytes) -> "Command":
        if not payload:
            raise PayloadError("empty command payload")
        try:
            kind = CommandKind(payload[0])
        except ValueError:
            raise PayloadError(f"unknown command kind {payload[0]}") from None
        if kind is CommandKind.GOTO:
            if len(payload) != struct.calcsize(">BHdd"):
                raise PayloadError("Goto payload has the wrong length")
            _, index, x, y = struct.unpack(">BHdd", payload)
            if not (math.isfinite(x) and math.isfinite(y)):
                raise PayloadError("waypoint coordinates must be finite")
            return cls(kind, index, x, y)
        if len(payload) != 1:
            raise PayloadError(f"{kind.name} takes no arguments")
        return cls(kind)


@dataclass(frozen=True)
class Telemetry:
    x: float
    y: float
    mode: str

    def encode(self) -> bytes:
        name = self.mode.encode("ascii")
        return struct.pack(">ddB", self.x, self.y, len(name)) + name

    @classmethod
    def decode(cls, payload: bytes) -> "Telemetry":
        head = struct.calcsize(">ddB")
        if len(payload) < head:
            raise PayloadError("telemetry payload truncated")
        x, y, size = struct.unpack_from(">ddB", payload)
        if len(payload) != head + size:
            raise PayloadError("telemetry payload length mismatch")
        return cls(x, y, payload[head:].decode("ascii"))


@dataclass(frozen=True)
class KeyChangeAck:
    """Reply to a key-change request: the new record's reference tag and key."""

    reference: bytes
    new_key: bytes = field(repr=False)

    def encode(self) -> bytes:
        return self.reference + self.new_key

    @classmethod
    def decode(cls, payload: bytes) -> "KeyChangeAck":
        if len(payload) != 32:
            raise PayloadError("KeyChangeAck payload must be 32 bytes")
        return cls(payload[:16], payload[16:])
