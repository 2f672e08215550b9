"""Denoisers: given x_t = x_0 + sigma_t * eps, predict E[x_0 | x_t].

Two analytic families (Gaussian and per-coordinate Gaussian mixture priors)
plus a client for external servers speaking the stdio bridge protocol.
"""
from __future__ import annotations

import os
import select
import shlex
import subprocess
import time
from pathlib import Path

import numpy as np

from . import protocol


class BridgeError(RuntimeError):
    """Base class for failures while talking to an external denoiser."""


class BridgeProtocolError(BridgeError):
    """The server violated the wire protocol or rejected the handshake."""


class BridgeExitError(BridgeError):
    """The server process exited while a reply was still owed."""


class BridgeTimeoutError(BridgeError):
    """The server did not reply within the configured timeout."""


def gaussian_mmse_predict(x_t, sigma_t: float, mu, tau: float) -> np.ndarray:
    """Posterior mean under an isotropic Gaussian prior N(mu, tau^2 I)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if sigma_t < 0:
        raise ValueError("sigma_t must be >= 0")
    x_t = np.asarray(x_t, dtype=float)
    s2, t2 = sigma_t * sigma_t, tau * tau
    return (s2 * np.asarray(mu, dtype=float) + t2 * x_t) / (s2 + t2)


def gmm_mmse_predict(x_t, sigma_t: float, weights, means, taus) -> np.ndarray:
    """Posterior mean under an i.i.d. per-coordinate Gaussian mixture prior.

    Responsibilities are computed in log space per coordinate; each
    component's conditional mean is the usual Gaussian shrinkage.
    """
    x_t = np.asarray(x_t, dtype=float)
    w = np.asarray(weights, dtype=float)
    mu = np.asarray(means, dtype=float)
    tau = np.asarray(taus, dtype=float)
    if not (w.shape == mu.shape == tau.shape) or w.ndim != 1 or w.size == 0:
        raise ValueError("weights, means, taus must be equal-length 1-D arrays")
    if np.any(w <= 0) or np.any(tau <= 0):
        raise ValueError("weights and taus must be positive")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("mixture weights must sum to 1")
    if sigma_t < 0:
        raise ValueError("sigma_t must be >= 0")
    s2 = sigma_t * sigma_t
    var_k = tau * tau + s2                                   # marginal variance of x_t per component
    log_resp = (np.log(w) - 0.5 * np.log(var_k))[None, :] \
        - 0.5 * (x_t[..., None] - mu[None, :]) ** 2 / var_k[None, :]
    log_resp -= log_resp.max(axis=-1, keepdims=True)
    resp = np.exp(log_resp)
    resp /= resp.sum(axis=-1, keepdims=True)
    cond_mean = (s2 * mu[None, :] + (tau * tau)[None, :] * x_t[..., None]) / var_k[None, :]
    return np.sum(resp * cond_mean, axis=-1)


class GaussianDenoiser:
    """Exact MMSE denoiser for an isotropic Gaussian prior."""

    def __init__(self, mu: float = 0.5, tau: float = 0.5):
        if tau <= 0:
            raise ValueError("tau must be positive")
        self.mu = float(mu)
        self.tau = float(tau)

    def predict_x0(self, x_t, sigma_t, step=None, label=None) -> np.ndarray:
        return gaussian_mmse_predict(x_t, sigma_t, self.mu, self.tau)


class GmmDenoiser:
    """Exact MMSE denoiser for an i.i.d. per-coordinate mixture prior."""

    def __init__(self, weights, means, taus):
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if total <= 0:
            raise ValueError("mixture weights must sum to a positive value")
        self.weights = w / total
        self.means = np.asarray(means, dtype=float)
        self.taus = np.asarray(taus, dtype=float)
        gmm_mmse_predict(np.zeros(1), 1.0, self.weights, self.means, self.taus)

    @classmethod
    def from_file(cls, path) -> "GmmDenoiser":
        """Load components from text lines: `weight mean tau`, '#' comments."""
        rows = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"expected 'weight mean tau', got: {line!r}")
            rows.append([float(v) for v in parts])
        if not rows:
            raise ValueError("mixture file has no components")
        arr = np.asarray(rows)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])

    def predict_x0(self, x_t, sigma_t, step=None, label=None) -> np.ndarray:
        return gmm_mmse_predict(x_t, sigma_t, self.weights, self.means, self.taus)


def _read_exact(fd: int, count: int, deadline: float, proc) -> bytes:
    """Read exactly count bytes from a pipe, raising the distinct failures."""
    chunks = []
    got = 0
    while got < count:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise BridgeTimeoutError("timed out waiting for the denoiser server")
        ready, _, _ = select.select([fd], [], [], min(remaining, 1.0))
        if not ready:
            if proc.poll() is not None:
                raise BridgeExitError(
                    f"denoiser server exited with code {proc.returncode}")
            continue
        chunk = os.read(fd, count - got)
        if not chunk:
            proc.poll()
            if proc.returncode is not None:
                raise BridgeExitError(
                    f"denoiser server exited with code {proc.returncode}")
            raise BridgeExitError("denoiser server closed its output stream")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


class BridgeDenoiser:
    """Client for an external denoiser subprocess on the stdio protocol.

    The command is launched once; a handshake fixes (n, channels, side) for
    the session and every prediction is one request/response round trip.
    """

    def __init__(self, command, n: int, channels: int, side: int,
                 timeout: float = 120.0):
        if isinstance(command, str):
            command = shlex.split(command)
        self.n = int(n)
        self.timeout = float(timeout)
        try:
            self._proc = subprocess.Popen(
                list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        except OSError as exc:
            raise BridgeExitError(f"could not launch denoiser server: {exc}") from exc
        self._fd = self._proc.stdout.fileno()
        try:
            self._send(protocol.encode_handshake_request(self.n, channels, side))
            reply = self._read(protocol.handshake_reply_size())
            status = protocol.decode_handshake_reply(reply)
            if status != 0:
                raise BridgeProtocolError(f"server rejected handshake (status {status})")
        except protocol.ProtocolError as exc:
            self.close()
            raise BridgeProtocolError(str(exc)) from exc
        except BridgeError:
            self.close()
            raise

    def _send(self, data: bytes) -> None:
        try:
            self._proc.stdin.write(data)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            code = self._proc.poll()
            raise BridgeExitError(f"denoiser server pipe closed (exit code {code})") from exc

    def _read(self, count: int) -> bytes:
        return _read_exact(self._fd, count, time.monotonic() + self.timeout, self._proc)

    def predict_x0(self, x_t, sigma_t, step=0, label=None) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=float)
        if x_t.shape != (self.n,):
            raise ValueError(f"expected a length-{self.n} state")
        self._send(protocol.encode_request(int(step), float(sigma_t), label, x_t))
        head = self._read(1)
        if head[0] == protocol.FRAME_RESPONSE:
            rest = self._read(protocol.response_head_size() - 1)
            _, status = protocol.decode_response_head(head + rest)
            payload = self._read(4 * self.n)
            if status != 0:
                raise BridgeProtocolError(f"server reported status {status}")
            return protocol.payload_from_bytes(payload, self.n).astype(float)
        if head[0] == protocol.FRAME_ERROR:
            rest = self._read(protocol.error_head_size() - 1)
            message = protocol.decode_error_tail(head + rest, self._read)
            raise BridgeProtocolError(f"server error: {message}")
        raise BridgeProtocolError(f"unexpected frame type {head[0]}")

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
