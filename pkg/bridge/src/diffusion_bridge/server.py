"""Serial request loop and the two predictor backends.

The echo backend never touches torch, so loopback conformance runs do not
pay the import. The checkpoint backend serves a TorchScript module with
integer attributes `channels` and `side`, a 1-D buffer `alphas_cumprod`,
and forward(x: (1, C, side, side) float32, t: int64 tensor) -> epsilon.

For a request at noise level sigma_t the reply is computed as

    x_vp = x_t / sqrt(1 + sigma_t^2)
    eps  = model(x_vp, step - 1)
    x0   = x_t - sigma_t * eps

which hands the client a clean-signal prediction in its own units. The
v1 checkpoint layout is unconditional; request labels are ignored.
"""
from __future__ import annotations

import math

import numpy as np

from . import protocol

SIGMA_MISMATCH_TOL = 1e-4


class PredictError(Exception):
    """A well-formed request the backend cannot serve."""


def read_exact(stream, count: int) -> bytes:
    """Read exactly count bytes unless the stream ends first."""
    chunks = []
    got = 0
    while got < count:
        chunk = stream.read(count - got)
        if not chunk:
            break
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


class EchoPredictor:
    """Loopback: the prediction is the request payload, bit for bit."""

    def accept(self, n: int, channels: int, side: int) -> str | None:
        if n <= 0 or n != channels * side * side:
            return f"geometry mismatch: n={n}, channels={channels}, side={side}"
        return None

    def predict(self, payload: np.ndarray, sigma_t: float, step: int,
                label: int | None) -> np.ndarray:
        return payload


class CheckpointPredictor:
    """Wraps a variance-preserving epsilon model behind the bridge contract."""

    def __init__(self, path: str, device: str = "cpu", stderr=None):
        import torch  # deferred: only this backend needs it

        self._torch = torch
        self._stderr = stderr
        self.device = device
        self.model = torch.jit.load(path, map_location=device).eval()
        self.channels = int(self.model.channels)
        self.side = int(self.model.side)
        table = self.model.alphas_cumprod.detach().to("cpu", torch.float64).numpy()
        if table.ndim != 1 or table.size == 0:
            raise ValueError("alphas_cumprod must be a nonempty 1-D buffer")
        if np.any(table <= 0) or np.any(table > 1):
            raise ValueError("alphas_cumprod entries must lie in (0, 1]")
        self.sigma_table = np.sqrt((1.0 - table) / table)

    def accept(self, n: int, channels: int, side: int) -> str | None:
        if channels != self.channels or side != self.side:
            return (f"model serves {self.channels}x{self.side}x{self.side}, "
                    f"client asked for {channels}x{side}x{side}")
        if n != channels * side * side:
            return f"n={n} does not match channels*side*side"
        return None

    def _warn(self, message: str) -> None:
        if self._stderr is not None:
            self._stderr.write(f"warning: {message}\n")
            self._stderr.flush()

    def predict(self, payload: np.ndarray, sigma_t: float, step: int,
                label: int | None) -> np.ndarray:
        if sigma_t == 0.0:
            return payload
        if not 1 <= step <= self.sigma_table.size:
            raise PredictError(
                f"step {step} outside the model's 1..{self.sigma_table.size} range")
        expected = float(self.sigma_table[step - 1])
        if abs(expected - sigma_t) > SIGMA_MISMATCH_TOL:
            self._warn(f"sigma_t {sigma_t:g} at step {step} differs from the "
                       f"checkpoint schedule value {expected:g}")
        torch = self._torch
        with torch.no_grad():
            x_t = torch.from_numpy(np.ascontiguousarray(payload, dtype=np.float32))
            x_t = x_t.reshape(1, self.channels, self.side, self.side).to(self.device)
            x_vp = x_t / math.sqrt(1.0 + sigma_t * sigma_t)
            t = torch.tensor([step - 1], dtype=torch.int64, device=self.device)
            eps = self.model(x_vp, t)
            if eps.shape != x_t.shape:
                raise PredictError(f"model returned shape {tuple(eps.shape)}")
            x0 = x_t - sigma_t * eps
        return x0.reshape(-1).to("cpu").numpy()


def serve(stdin, stdout, stderr, predictor) -> int:
    """One handshake, then strictly serial request handling until EOF."""
    blob = read_exact(stdin, protocol.HANDSHAKE_REQUEST_SIZE)
    if not blob:
        return 0
    try:
        n, channels, side = protocol.parse_handshake_request(blob)
        reason = predictor.accept(n, channels, side)
    except protocol.FrameError as exc:
        reason = str(exc)
    if reason is not None:
        stderr.write(f"handshake rejected: {reason}\n")
        stderr.flush()
        stdout.write(protocol.handshake_reply(1))
        stdout.flush()
        return 1
    stdout.write(protocol.handshake_reply(0))
    stdout.flush()

    frame_size = protocol.request_frame_size(n)
    while True:
        blob = read_exact(stdin, frame_size)
        if not blob:
            return 0
        if len(blob) < frame_size:
            stdout.write(protocol.error_frame("truncated frame before close"))
            stdout.flush()
            return 1
        try:
            step, sigma_t, label, payload = protocol.parse_request(blob, n)
            if not math.isfinite(sigma_t) or sigma_t < 0:
                raise protocol.FrameError(f"sigma_t {sigma_t} is not usable")
            reply = protocol.response_frame(
                predictor.predict(payload, sigma_t, step, label))
        except (protocol.FrameError, PredictError) as exc:
            reply = protocol.error_frame(str(exc))
        stdout.write(reply)
        stdout.flush()
