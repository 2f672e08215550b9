from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import pytest

from specdiff import protocol

GOLDEN = Path(__file__).parent / "golden"


def _payload(count, scale, shift):
    return np.arange(count, dtype=np.float32) * np.float32(scale) - np.float32(shift)


def test_handshake_request_matches_golden():
    want = (GOLDEN / "handshake_request.bin").read_bytes()
    assert protocol.encode_handshake_request(12, 3, 2) == want
    n, channels, side = protocol.decode_handshake_request(want)
    assert (n, channels, side) == (12, 3, 2)


def test_handshake_reply_matches_golden():
    want = (GOLDEN / "handshake_reply_ok.bin").read_bytes()
    assert protocol.encode_handshake_reply(0) == want
    assert protocol.decode_handshake_reply(want) == 0


def test_request_frame_matches_golden():
    want = (GOLDEN / "request_frame.bin").read_bytes()
    x = _payload(12, 0.25, 1.0).astype(float)
    assert protocol.encode_request(7, 0.5, None, x) == want
    step, sigma, label, payload = protocol.decode_request(want, 12)
    assert step == 7 and sigma == 0.5 and label is None
    assert np.array_equal(payload, _payload(12, 0.25, 1.0))


def test_response_frame_matches_golden():
    want = (GOLDEN / "response_frame.bin").read_bytes()
    x = _payload(12, 0.125, 0.5).astype(float)
    assert protocol.encode_response(x, 0) == want
    head = want[: protocol.response_head_size()]
    frame_type, status = protocol.decode_response_head(head)
    assert frame_type == protocol.FRAME_RESPONSE and status == 0


def test_error_frame_matches_golden():
    want = (GOLDEN / "error_frame.bin").read_bytes()
    assert protocol.encode_error("unsupported frame: σ") == want
    assert want[0] == protocol.FRAME_ERROR
    (length,) = struct.unpack_from("<I", want, 1)
    assert want[5:5 + length].decode("utf-8") == "unsupported frame: σ"


def test_request_label_roundtrip():
    x = np.zeros(4)
    for label in (None, 0, 17, 980):
        frame = protocol.encode_request(3, 1.25, label, x)
        _, _, got, _ = protocol.decode_request(frame, 4)
        assert got == label


def test_handshake_rejects_corruption():
    good = protocol.encode_handshake_request(8, 1, 2)
    with pytest.raises(protocol.ProtocolError):
        protocol.decode_handshake_request(b"XXXX" + good[4:])
    bad_version = good[:4] + struct.pack("<I", 9) + good[8:]
    with pytest.raises(protocol.ProtocolError):
        protocol.decode_handshake_request(bad_version)
    with pytest.raises(protocol.ProtocolError):
        protocol.decode_handshake_reply(b"DDRM")


def test_payload_roundtrip_preserves_all_bit_patterns():
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2**32, size=4096, dtype=np.uint64).astype(np.uint32)
    # force the special values in explicitly
    specials = np.array([
        0x00000000, 0x80000000,              # +0, -0
        0x7F800000, 0xFF800000,              # +inf, -inf
        0x7FC00001, 0x7F800001, 0xFFC00000,  # NaN flavors
        0x00000001, 0x007FFFFF,              # denormals
        0x3F800000, 0xBF800000,              # +-1
    ], dtype=np.uint32)
    bits[: specials.size] = specials
    floats = bits.view(np.float32)
    raw = protocol.payload_to_bytes(floats.astype(np.float32))
    back = protocol.payload_from_bytes(raw, bits.size)
    assert np.array_equal(back.astype(np.float32).view(np.uint32), bits)


def test_request_size_helpers_agree():
    x = np.zeros(5)
    assert len(protocol.encode_request(0, 0.0, None, x)) == protocol.request_size(5)
    assert len(protocol.encode_handshake_request(5, 1, 1)) == \
        protocol.handshake_request_size()
    assert len(protocol.encode_handshake_reply(0)) == protocol.handshake_reply_size()


def test_decode_request_wrong_length():
    frame = protocol.encode_request(1, 0.5, None, np.zeros(4))
    with pytest.raises(protocol.ProtocolError):
        protocol.decode_request(frame, 8)
    with pytest.raises(protocol.ProtocolError):
        protocol.decode_request(frame[:-1], 4)


def test_error_tail_guard_rejects_absurd_lengths():
    head = struct.pack("<BI", protocol.FRAME_ERROR, 2**24)

    def read_exact(count):
        return b"x" * count

    with pytest.raises(protocol.ProtocolError):
        protocol.decode_error_tail(head, read_exact)
