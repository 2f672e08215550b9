"""Noise ladders for the variance-exploding chain, plus VP conversions.

A schedule holds sigma_0 = 0 < sigma_1 < ... < sigma_T. Variance-preserving
models relate to it through alpha_bar = 1 / (1 + sigma^2): a VE state scales
into VP units by 1 / sqrt(1 + sigma^2) and back out by the reciprocal.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


def to_vp_alpha(sigma):
    """alpha_bar corresponding to a VE noise level."""
    sigma = np.asarray(sigma, dtype=float)
    return 1.0 / (1.0 + sigma * sigma)


def ve_to_vp(x, sigma):
    """Scale a VE-space quantity into VP units at noise level sigma."""
    return np.asarray(x, dtype=float) / np.sqrt(1.0 + float(sigma) ** 2)


def vp_to_ve(x, sigma):
    """Inverse of ve_to_vp."""
    return np.asarray(x, dtype=float) * np.sqrt(1.0 + float(sigma) ** 2)


@dataclass(frozen=True)
class SigmaSchedule:
    """Strictly increasing noise ladder anchored at sigma_0 = 0."""

    sigmas: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigmas, dtype=float)
        if s.ndim != 1 or s.size < 2:
            raise ValueError("schedule needs sigma_0 and at least one level")
        if s[0] != 0.0:
            raise ValueError("schedule must start at sigma_0 = 0")
        if np.any(np.diff(s) <= 0):
            raise ValueError("sigma levels must be strictly increasing")
        if not np.all(np.isfinite(s)):
            raise ValueError("sigma levels must be finite")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "sigmas", s)

    @property
    def top_index(self) -> int:
        return self.sigmas.shape[0] - 1

    def sigma(self, t: int) -> float:
        if not 0 <= t <= self.top_index:
            raise ValueError(f"timestep {t} outside [0, {self.top_index}]")
        return float(self.sigmas[t])

    @classmethod
    def from_sigmas(cls, levels) -> "SigmaSchedule":
        """Build from the nonzero levels; sigma_0 = 0 is prepended."""
        levels = np.asarray(levels, dtype=float)
        return cls(np.concatenate([[0.0], levels]))

    @classmethod
    def from_vp_alphas(cls, alpha_bars) -> "SigmaSchedule":
        """Convert a VP alpha_bar ladder (non-increasing, in (0, 1]) to sigmas."""
        ab = np.asarray(alpha_bars, dtype=float)
        if ab.ndim != 1 or ab.size == 0:
            raise ValueError("alpha_bars must be a nonempty 1-D array")
        if np.any(ab <= 0) or np.any(ab > 1):
            raise ValueError("alpha_bars must lie in (0, 1]")
        if np.any(np.diff(ab) >= 0):
            raise ValueError("alpha_bars must be strictly decreasing")
        return cls.from_sigmas(np.sqrt(1.0 / ab - 1.0))

    @classmethod
    def linear_beta(cls, beta_min: float = 1e-4, beta_max: float = 2e-2,
                    steps: int = 1000) -> "SigmaSchedule":
        """The common linear-beta VP ladder, converted to VE sigmas."""
        betas = np.linspace(beta_min, beta_max, steps)
        return cls.from_vp_alphas(np.cumprod(1.0 - betas))

    def subsample(self, k: int) -> list[int]:
        """k indices with stride floor(T/k), anchored so the last one is T."""
        t = self.top_index
        if not 1 <= k <= t:
            raise ValueError(f"subsample count must be in [1, {t}]")
        stride = t // k
        return [t - stride * (k - 1 - i) for i in range(k)]

    def save(self, path) -> None:
        """One sigma per line, full precision."""
        lines = "\n".join(repr(float(v)) for v in self.sigmas)
        Path(path).write_text(lines + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SigmaSchedule":
        text = Path(path).read_text(encoding="utf-8")
        values = [float(line) for line in text.split() if line.strip()]
        return cls(np.asarray(values))
