"""Controller <-> worker message vocabulary and bit-exact wire encoding.

Framing: each message is a frame of `u32 payload_length (little-endian)`
followed by the payload. The payload is `u8 tag` followed by the body fields
in declared order, little-endian fixed-width integers, no padding.

Tags: 1=WorkerHandshake, 2=Action, 3=ActionResult, 4=InferenceRequest,
5=InferenceResponse.

Bodies::

    Action           u64 action_id | u8 kind | u32 model_id | u16 gpu_index
                     | i64 earliest | i64 latest | u16 batch_count
                     | u64 x count request_ids
                     | i64 expected_duration   (Infer only)
    ActionResult     u64 action_id | u8 status | i64 start | i64 end
                     | i64 device_duration
    InferenceRequest u64 request_id | u32 model_id | i64 slo | i64 arrival
                     | u64 input_size | u8 flags
                     | u32 len + bytes payload   (iff flags bit 0)
    InferenceResponse u64 request_id | u8 status | i64 latency | u8 cold_start
    WorkerHandshake  u32 worker_id | u32 gpu_count | u64 pages_total
                     | u32 model_count | u32 x n model_ids

Load/Unload carry an empty batch (count 0) and no expected_duration field; a
38-byte Unload frame is the smallest Action on the wire. Inference inputs are
represented by size only unless the request carries an opaque payload (used
for wire-stress tests; emulated workers ignore the contents either way).

Every invariant is re-checked on decode so that a controller and a worker
built independently either interoperate or fail loudly.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass, field
from enum import IntEnum

MAX_FRAME_BYTES = 64 * 1024 * 1024

TAG_HANDSHAKE = 1
TAG_ACTION = 2
TAG_RESULT = 3
TAG_REQUEST = 4
TAG_RESPONSE = 5


class ProtocolError(Exception):
    pass


class TruncatedFrame(ProtocolError):
    pass


class UnknownTag(ProtocolError):
    pass


class InvariantViolation(ProtocolError):
    pass


class ActionKind(IntEnum):
    LOAD = 1
    UNLOAD = 2
    INFER = 3


class ResultStatus(IntEnum):
    SUCCESS = 1
    REJECTED_TOO_LATE = 2
    OUT_OF_PAGES = 3
    MODEL_NOT_LOADED = 4
    MALFORMED_ACTION = 5


class ResponseStatus(IntEnum):
    OK = 1
    DENIED = 2
    TIMEOUT = 3


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise InvariantViolation(msg)


@dataclass(frozen=True)
class Action:
    action_id: int
    kind: ActionKind
    model_id: int
    earliest: int
    latest: int
    batch: tuple[int, ...] = ()
    gpu_index: int = 0
    expected_duration: int = 0   # Infer only; controller's prediction, for telemetry

    def __post_init__(self):
        _check(self.earliest <= self.latest, "earliest > latest")
        _check(0 <= self.gpu_index < 65536, "gpu_index out of range")
        if self.kind == ActionKind.INFER:
            _check(1 <= len(self.batch) < 65536, "Infer batch size out of range")
            _check(self.expected_duration >= 0, "negative expected_duration")
        else:
            _check(not self.batch, f"{self.kind.name} with non-empty batch")
            _check(self.expected_duration == 0,
                   f"{self.kind.name} carries expected_duration")

    @property
    def batch_size(self) -> int:
        return len(self.batch)


@dataclass(frozen=True)
class ActionResult:
    action_id: int
    status: ResultStatus
    start: int
    end: int
    device_duration: int

    def __post_init__(self):
        if self.status == ResultStatus.SUCCESS:
            _check(self.end >= self.start, "end < start")
        else:
            _check(self.device_duration == 0, "non-success with device_duration != 0")


@dataclass(frozen=True)
class InferenceRequest:
    request_id: int
    model_id: int
    slo: int                 # ns
    arrival: int = 0         # stamped by the controller on receipt
    input_size: int = 0      # bytes per request
    payload: bytes = b""     # optional opaque bytes for wire-stress tests

    def __post_init__(self):
        _check(self.slo > 0, "non-positive SLO")
        _check(self.input_size >= 0, "negative input_size")


@dataclass(frozen=True)
class InferenceResponse:
    request_id: int
    status: ResponseStatus
    latency: int
    cold_start: bool = False


@dataclass(frozen=True)
class WorkerHandshake:
    worker_id: int
    gpu_count: int
    pages_total: int                      # per GPU
    models_resident: tuple[int, ...] = () # host-memory models (all catalog ids)

    def __post_init__(self):
        _check(self.gpu_count >= 1, "gpu_count < 1")
        _check(self.pages_total > 0, "pages_total <= 0")


Message = Action | ActionResult | InferenceRequest | InferenceResponse | WorkerHandshake

_U32 = struct.Struct("<I")
_ACTION_HEAD = struct.Struct("<QBIHqqH")
_RESULT = struct.Struct("<QBqqq")
_REQUEST_HEAD = struct.Struct("<QIqqQB")
_RESPONSE = struct.Struct("<QBqB")
_HANDSHAKE_HEAD = struct.Struct("<IIQI")


def encode_message(msg: Message) -> bytes:
    if isinstance(msg, Action):
        body = _ACTION_HEAD.pack(msg.action_id, int(msg.kind), msg.model_id,
                                 msg.gpu_index, msg.earliest, msg.latest,
                                 len(msg.batch))
        if msg.batch:
            body += struct.pack(f"<{len(msg.batch)}Q", *msg.batch)
        if msg.kind == ActionKind.INFER:
            body += struct.pack("<q", msg.expected_duration)
        payload = bytes([TAG_ACTION]) + body
    elif isinstance(msg, ActionResult):
        payload = bytes([TAG_RESULT]) + _RESULT.pack(
            msg.action_id, int(msg.status), msg.start, msg.end, msg.device_duration)
    elif isinstance(msg, InferenceRequest):
        flags = 1 if msg.payload else 0
        body = _REQUEST_HEAD.pack(msg.request_id, msg.model_id, msg.slo,
                                  msg.arrival, msg.input_size, flags)
        if msg.payload:
            body += _U32.pack(len(msg.payload)) + msg.payload
        payload = bytes([TAG_REQUEST]) + body
    elif isinstance(msg, InferenceResponse):
        payload = bytes([TAG_RESPONSE]) + _RESPONSE.pack(
            msg.request_id, int(msg.status), msg.latency, 1 if msg.cold_start else 0)
    elif isinstance(msg, WorkerHandshake):
        body = _HANDSHAKE_HEAD.pack(msg.worker_id, msg.gpu_count, msg.pages_total,
                                    len(msg.models_resident))
        if msg.models_resident:
            body += struct.pack(f"<{len(msg.models_resident)}I", *msg.models_resident)
        payload = bytes([TAG_HANDSHAKE]) + body
    else:
        raise TypeError(f"not a protocol message: {type(msg).__name__}")
    return _U32.pack(len(payload)) + payload


class _Cursor:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, fmt: struct.Struct):
        end = self.pos + fmt.size
        if end > len(self.buf):
            raise TruncatedFrame("payload shorter than declared fields")
        vals = fmt.unpack_from(self.buf, self.pos)
        self.pos = end
        return vals

    def take_raw(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.buf):
            raise TruncatedFrame("payload shorter than declared fields")
        out = self.buf[self.pos:end]
        self.pos = end
        return out

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise InvariantViolation(f"{len(self.buf) - self.pos} trailing bytes")


def decode_payload(payload: bytes) -> Message:
    if not payload:
        raise TruncatedFrame("empty payload")
    tag = payload[0]
    cur = _Cursor(payload)
    cur.pos = 1
    try:
        if tag == TAG_ACTION:
            action_id, kind_raw, model_id, gpu_index, earliest, latest, count = \
                cur.take(_ACTION_HEAD)
            try:
                kind = ActionKind(kind_raw)
            except ValueError:
                raise InvariantViolation(f"unknown action kind {kind_raw}") from None
            batch = cur.take(struct.Struct(f"<{count}Q")) if count else ()
            expected = 0
            if kind == ActionKind.INFER:
                (expected,) = cur.take(struct.Struct("<q"))
            cur.done()
            return Action(action_id, kind, model_id, earliest, latest, tuple(batch),
                          gpu_index, expected)
        if tag == TAG_RESULT:
            action_id, status_raw, start, end, dev = cur.take(_RESULT)
            try:
                status = ResultStatus(status_raw)
            except ValueError:
                raise InvariantViolation(f"unknown result status {status_raw}") from None
            cur.done()
            return ActionResult(action_id, status, start, end, dev)
        if tag == TAG_REQUEST:
            request_id, model_id, slo, arrival, input_size, flags = cur.take(_REQUEST_HEAD)
            payload_bytes = b""
            if flags & 1:
                (n,) = cur.take(_U32)
                payload_bytes = cur.take_raw(n)
                if not payload_bytes:
                    raise InvariantViolation("payload flag set with empty payload")
            elif flags:
                raise InvariantViolation(f"unknown request flags {flags:#x}")
            cur.done()
            return InferenceRequest(request_id, model_id, slo, arrival, input_size,
                                    bytes(payload_bytes))
        if tag == TAG_RESPONSE:
            request_id, status_raw, latency, cold = cur.take(_RESPONSE)
            try:
                status = ResponseStatus(status_raw)
            except ValueError:
                raise InvariantViolation(f"unknown response status {status_raw}") from None
            cur.done()
            return InferenceResponse(request_id, status, latency, bool(cold))
        if tag == TAG_HANDSHAKE:
            worker_id, gpu_count, pages_total, count = cur.take(_HANDSHAKE_HEAD)
            models = cur.take(struct.Struct(f"<{count}I")) if count else ()
            cur.done()
            return WorkerHandshake(worker_id, gpu_count, pages_total, tuple(models))
    except struct.error as exc:
        raise TruncatedFrame(str(exc)) from None
    raise UnknownTag(f"unknown message tag {tag:#04x}")


def decode_message(frame: bytes) -> Message:
    """Decode one complete frame (length prefix included); rejects length
    mismatches and trailing bytes."""
    if len(frame) < 4:
        raise TruncatedFrame("frame shorter than length prefix")
    (length,) = _U32.unpack_from(frame)
    if length > MAX_FRAME_BYTES:
        raise InvariantViolation(f"declared payload {length} exceeds frame cap")
    if len(frame) < 4 + length:
        raise TruncatedFrame(f"frame declares {length} payload bytes, has {len(frame) - 4}")
    if len(frame) > 4 + length:
        raise InvariantViolation(f"{len(frame) - 4 - length} bytes after frame end")
    return decode_payload(frame[4:4 + length])


class FrameDecoder:
    """Incremental decoder for a byte stream: feed() chunks, iterate messages."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Message]:
        self._buf.extend(data)
        out = []
        while True:
            if len(self._buf) < 4:
                break
            (length,) = _U32.unpack_from(self._buf)
            if length > MAX_FRAME_BYTES:
                raise InvariantViolation(f"declared payload {length} exceeds frame cap")
            if len(self._buf) < 4 + length:
                break
            payload = bytes(self._buf[4:4 + length])
            del self._buf[:4 + length]
            out.append(decode_payload(payload))
        return out

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)


def send_message(sock: socket.socket, msg: Message) -> None:
    sock.sendall(encode_message(msg))


def recv_message(sock: socket.socket) -> Message | None:
    """Blocking read of one frame; None on clean EOF at a frame boundary."""
    head = _recv_exact(sock, 4)
    if head is None:
        return None
    (length,) = _U32.unpack(head)
    if length > MAX_FRAME_BYTES:
        raise InvariantViolation(f"declared payload {length} exceeds frame cap")
    payload = _recv_exact(sock, length)
    if payload is None:
        raise TruncatedFrame("connection closed mid-frame")
    return decode_payload(payload)


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise TruncatedFrame("connection closed mid-frame")
            return None
        buf.extend(chunk)
    return bytes(buf)
