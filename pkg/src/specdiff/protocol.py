"""Binary stdio protocol for external denoiser servers.

All integers are little-endian. One handshake, then request/response frames:

  handshake request   "DDRM" u32 version  u64 n  u32 channels  u32 side
  handshake reply     "DDRM" u32 version  u8 status          (0 = accepted)
  request frame       u8 1   u32 step  f64 sigma_t  i64 label  n x f32
  response frame      u8 2   u8 status  n x f32
  error frame         u8 3   u32 byte_length  UTF-8 message

A label of -1 means unconditional. Payloads are float32 by contract; the
request carries the VE-space state, the response the predicted clean signal.
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"DDRM"
VERSION = 1
FRAME_REQUEST = 1
FRAME_RESPONSE = 2
FRAME_ERROR = 3
NO_LABEL = -1

_HANDSHAKE_REQ = struct.Struct("<4sIQII")
_HANDSHAKE_REPLY = struct.Struct("<4sIB")
_REQUEST_HEAD = struct.Struct("<BIdq")
_RESPONSE_HEAD = struct.Struct("<BB")
_ERROR_HEAD = struct.Struct("<BI")


class ProtocolError(ValueError):
    """Peer sent bytes that violate the protocol, or reported an error frame."""


def encode_handshake_request(n: int, channels: int, side: int) -> bytes:
    return _HANDSHAKE_REQ.pack(MAGIC, VERSION, n, channels, side)


def decode_handshake_request(data: bytes):
    if len(data) != _HANDSHAKE_REQ.size:
        raise ProtocolError("short handshake request")
    magic, version, n, channels, side = _HANDSHAKE_REQ.unpack(data)
    if magic != MAGIC:
        raise ProtocolError("bad handshake magic")
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    return n, channels, side


def encode_handshake_reply(status: int = 0) -> bytes:
    return _HANDSHAKE_REPLY.pack(MAGIC, VERSION, status)


def decode_handshake_reply(data: bytes) -> int:
    if len(data) != _HANDSHAKE_REPLY.size:
        raise ProtocolError("short handshake reply")
    magic, version, status = _HANDSHAKE_REPLY.unpack(data)
    if magic != MAGIC:
        raise ProtocolError("bad handshake magic in reply")
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    return status


def payload_to_bytes(x) -> bytes:
    return np.ascontiguousarray(x, dtype="<f4").tobytes()


def payload_from_bytes(data: bytes, n: int) -> np.ndarray:
    if len(data) != 4 * n:
        raise ProtocolError("payload length mismatch")
    return np.frombuffer(data, dtype="<f4").copy()


def encode_request(step: int, sigma_t: float, label: int | None, payload) -> bytes:
    lab = NO_LABEL if label is None else int(label)
    return _REQUEST_HEAD.pack(FRAME_REQUEST, step, float(sigma_t), lab) + payload_to_bytes(payload)


def decode_request(data: bytes, n: int):
    """Parse a full request frame; returns (step, sigma_t, label, payload)."""
    if len(data) != _REQUEST_HEAD.size + 4 * n:
        raise ProtocolError("request frame length mismatch")
    kind, step, sigma_t, label = _REQUEST_HEAD.unpack_from(data)
    if kind != FRAME_REQUEST:
        raise ProtocolError(f"expected request frame, got type {kind}")
    payload = payload_from_bytes(data[_REQUEST_HEAD.size:], n)
    return step, sigma_t, (None if label == NO_LABEL else label), payload


def encode_response(payload, status: int = 0) -> bytes:
    return _RESPONSE_HEAD.pack(FRAME_RESPONSE, status) + payload_to_bytes(payload)


def encode_error(message: str) -> bytes:
    raw = message.encode("utf-8")
    return _ERROR_HEAD.pack(FRAME_ERROR, len(raw)) + raw


def request_size(n: int) -> int:
    return _REQUEST_HEAD.size + 4 * n


def handshake_request_size() -> int:
    return _HANDSHAKE_REQ.size


def handshake_reply_size() -> int:
    return _HANDSHAKE_REPLY.size


def response_head_size() -> int:
    return _RESPONSE_HEAD.size


def error_head_size() -> int:
    return _ERROR_HEAD.size


def decode_response_head(data: bytes):
    """First two bytes of a type-2 frame: (FRAME_RESPONSE, status)."""
    if len(data) != _RESPONSE_HEAD.size:
        raise ProtocolError("short response header")
    return _RESPONSE_HEAD.unpack(data)


def decode_error_tail(head: bytes, read_exact) -> str:
    """Given the 5-byte error header, pull the message via read_exact(k)."""
    kind, length = _ERROR_HEAD.unpack(head)
    if kind != FRAME_ERROR:
        raise ProtocolError(f"expected error frame, got type {kind}")
    if length > 1 << 20:
        raise ProtocolError("unreasonable error message length")
    return read_exact(length).decode("utf-8", errors="replace")
