"""Controller/worker wire protocol.

Every message is framed as a 4-byte big-endian length, covering the tag
byte and the payload, followed by a 1-byte tag and the payload.  Payloads
use the canonical value serialization from :mod:`mmr.serial`; task ids are
unsigned varints.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Optional, Union

from .errors import DecodeError
from .serial import _Reader, encode_value_into, write_varint

PROTOCOL_VERSION = 1

HELLO, TASK, PARTIAL, RESULT, CANCEL, SHUTDOWN = 1, 2, 3, 4, 5, 6

# refuse frames larger than this rather than trying to allocate them
MAX_FRAME = 1 << 30


@dataclass(frozen=True)
class Hello:
    version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class Task:
    task_id: int
    spec: object  # TaskSpec as a Value


@dataclass(frozen=True)
class Partial:
    task_id: int
    record: object  # ConditionRecord as a Value


@dataclass(frozen=True)
class Result:
    task_id: int
    result: object  # TaskResult as a Value


@dataclass(frozen=True)
class Cancel:
    task_id: int


@dataclass(frozen=True)
class Shutdown:
    pass


Message = Union[Hello, Task, Partial, Result, Cancel, Shutdown]

_TAGS = {Hello: HELLO, Task: TASK, Partial: PARTIAL, Result: RESULT, Cancel: CANCEL, Shutdown: SHUTDOWN}


def encode_body(msg: Message) -> bytes:
    """Tag byte plus payload (no length prefix)."""
    out = bytearray([_TAGS[type(msg)]])
    if isinstance(msg, Hello):
        write_varint(out, msg.version)
    elif isinstance(msg, Task):
        write_varint(out, msg.task_id)
        encode_value_into(out, msg.spec)
    elif isinstance(msg, Partial):
        write_varint(out, msg.task_id)
        encode_value_into(out, msg.record)
    elif isinstance(msg, Result):
        write_varint(out, msg.task_id)
        encode_value_into(out, msg.result)
    elif isinstance(msg, Cancel):
        write_varint(out, msg.task_id)
    return bytes(out)


def encode_message(msg: Message) -> bytes:
    body = encode_body(msg)
    return struct.pack(">I", len(body)) + body


def peek_task_id(body: bytes) -> Optional[int]:
    """Best-effort task id of a TASK/PARTIAL/RESULT/CANCEL body."""
    try:
        return _Reader(body, 1).varint()
    except DecodeError:
        return None


def decode_body(body: bytes) -> Message:
    if not body:
        raise DecodeError("empty frame")
    tag = body[0]
    r = _Reader(body, 1)
    try:
        if tag == HELLO:
            msg = Hello(r.varint())
        elif tag == SHUTDOWN:
            msg = Shutdown()
        elif tag == CANCEL:
            msg = Cancel(r.varint())
        elif tag in (TASK, PARTIAL, RESULT):
            task_id = r.varint()
            value = r.value()
            msg = {TASK: Task, PARTIAL: Partial, RESULT: Result}[tag](task_id, value)
        else:
            raise DecodeError(f"unknown message tag {tag}")
    except RecursionError:
        raise DecodeError("message nested too deeply") from None
    if r.pos != len(body):
        raise DecodeError(f"{len(body) - r.pos} trailing bytes in message")
    return msg


def decode_message(frame: bytes) -> Message:
    """Decode one complete frame (length prefix included)."""
    if len(frame) < 4:
        raise DecodeError("truncated frame header")
    (length,) = struct.unpack(">I", frame[:4])
    if length != len(frame) - 4:
        raise DecodeError("frame length does not match its prefix")
    return decode_body(frame[4:])


def _read_exact(stream: BinaryIO, n: int) -> Optional[bytes]:
    buf = bytearray()
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return bytes(buf)


def read_frame(stream: BinaryIO) -> Optional[bytes]:
    """Read one frame body (tag + payload); None on a clean end of stream."""
    header = _read_exact(stream, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length == 0 or length > MAX_FRAME:
        raise DecodeError(f"invalid frame length {length}")
    body = _read_exact(stream, length)
    if body is None:
        raise DecodeError("connection closed mid-frame")
    return body


def read_message(stream: BinaryIO) -> Optional[Message]:
    body = read_frame(stream)
    return None if body is None else decode_body(body)


def write_message(stream: BinaryIO, msg: Message) -> None:
    stream.write(encode_message(msg))
    stream.flush()
