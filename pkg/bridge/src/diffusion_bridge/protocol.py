"""Wire format for the denoiser bridge, server side.

Little-endian throughout. The session opens with one handshake exchange,
then alternates fixed-size request frames and response frames:

  handshake request   "DDRM" u32 version  u64 n  u32 channels  u32 side
  handshake reply     "DDRM" u32 version  u8 status            0 = accepted
  request             u8 1   u32 step  f64 sigma_t  i64 label  n x f32
  response            u8 2   u8 status  n x f32
  error               u8 3   u32 byte_length  UTF-8 message

Payloads are raw float32; a label of -1 stands for "unconditional".
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"DDRM"
VERSION = 1
TYPE_REQUEST = 1
TYPE_RESPONSE = 2
TYPE_ERROR = 3
UNCONDITIONAL = -1

HANDSHAKE_REQUEST_FMT = "<4sIQII"
HANDSHAKE_REPLY_FMT = "<4sIB"
REQUEST_HEAD_FMT = "<BIdq"
RESPONSE_HEAD_FMT = "<BB"
ERROR_HEAD_FMT = "<BI"

HANDSHAKE_REQUEST_SIZE = struct.calcsize(HANDSHAKE_REQUEST_FMT)
HANDSHAKE_REPLY_SIZE = struct.calcsize(HANDSHAKE_REPLY_FMT)
REQUEST_HEAD_SIZE = struct.calcsize(REQUEST_HEAD_FMT)


class FrameError(ValueError):
    """Bytes on the wire do not form a legal frame."""


def request_frame_size(n: int) -> int:
    return REQUEST_HEAD_SIZE + 4 * n


def parse_handshake_request(blob: bytes) -> tuple[int, int, int]:
    """Returns (n, channels, side); raises FrameError on any violation."""
    if len(blob) != HANDSHAKE_REQUEST_SIZE:
        raise FrameError("handshake request has the wrong size")
    magic, version, n, channels, side = struct.unpack(HANDSHAKE_REQUEST_FMT, blob)
    if magic != MAGIC:
        raise FrameError("handshake magic mismatch")
    if version != VERSION:
        raise FrameError(f"protocol version {version} is not supported")
    return int(n), int(channels), int(side)


def handshake_reply(status: int) -> bytes:
    return struct.pack(HANDSHAKE_REPLY_FMT, MAGIC, VERSION, status)


def parse_request(blob: bytes, n: int) -> tuple[int, float, int | None, np.ndarray]:
    """Returns (step, sigma_t, label, float32 payload of length n)."""
    if len(blob) != request_frame_size(n):
        raise FrameError("request frame has the wrong size")
    kind, step, sigma_t, label = struct.unpack_from(REQUEST_HEAD_FMT, blob)
    if kind != TYPE_REQUEST:
        raise FrameError(f"frame type {kind} where a request was expected")
    payload = np.frombuffer(blob, dtype="<f4", offset=REQUEST_HEAD_SIZE)
    return (int(step), float(sigma_t),
            None if label == UNCONDITIONAL else int(label), payload)


def response_frame(payload: np.ndarray, status: int = 0) -> bytes:
    head = struct.pack(RESPONSE_HEAD_FMT, TYPE_RESPONSE, status)
    return head + np.ascontiguousarray(payload, dtype="<f4").tobytes()


def error_frame(message: str) -> bytes:
    raw = message.encode("utf-8")
    return struct.pack(ERROR_HEAD_FMT, TYPE_ERROR, len(raw)) + raw


def request_frame(step: int, sigma_t: float, label: int | None,
                  payload: np.ndarray) -> bytes:
    """Client-side encoder, kept for loopback tests of this module."""
    head = struct.pack(REQUEST_HEAD_FMT, TYPE_REQUEST, step, float(sigma_t),
                       UNCONDITIONAL if label is None else int(label))
    return head + np.ascontiguousarray(payload, dtype="<f4").tobytes()


def handshake_request(n: int, channels: int, side: int) -> bytes:
    return struct.pack(HANDSHAKE_REQUEST_FMT, MAGIC, VERSION, n, channels, side)
