"""Posterior sampling chain run in the spectral basis of the degradation.

The state lives as xbar = V^T x. Unmeasured coordinates follow a plain
denoising diffusion update; measured ones blend the denoiser prediction
with the spectral measurement at a rate set by how the current noise level
compares to the per-coordinate measurement noise sigma_y / s_i.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linops import SvdOperator

STREAM_CHAIN = 0
STREAM_DEGRADE = 1

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream: int = STREAM_CHAIN) -> np.random.Generator:
    """Counter-based generator; streams with distinct tags never overlap."""
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class ProblemInstance:
    """One inverse problem: operator, measurement, and its spectral view."""

    def __init__(self, op: SvdOperator, y, sigma_y: float):
        if sigma_y < 0:
            raise ValueError("sigma_y must be >= 0")
        self.op = op
        self.y = np.asarray(y, dtype=float)
        self.sigma_y = float(sigma_y)
        self.ybar, self.levels = op.spectral_measurement(self.y, self.sigma_y)
        self.measured = op.singulars() > 0

    @property
    def n(self) -> int:
        return self.op.n

    def validate_sigma_top(self, sigma_top: float) -> None:
        """The chain must start at least as noisy as the noisiest measurement."""
        finite = self.levels[self.measured]
        if finite.size and sigma_top < finite.max() - 1e-12:
            raise ValueError(
                f"sigma_T = {sigma_top} is below the measurement noise level "
                f"{finite.max()} of some coordinate; increase the schedule top")


@dataclass(frozen=True)
class DdrmParams:
    """Chain hyperparameters. eta_b may be a number or "theorem"."""

    timesteps: tuple[int, ...]
    eta: float = 0.85
    eta_b: float | str = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "timesteps", tuple(int(t) for t in self.timesteps))

    def validate(self, schedule, problem: ProblemInstance) -> None:
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        ts = self.timesteps
        if not ts or any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("timesteps must be a nonempty ascending index list")
        if ts[0] < 1 or ts[-1] > schedule.top_index:
            raise ValueError("timesteps must lie within [1, top_index]")
        problem.validate_sigma_top(schedule.sigma(ts[-1]))
        if isinstance(self.eta_b, str):
            if self.eta_b != "theorem":
                raise ValueError(f"unknown eta_b mode {self.eta_b!r}")
            return
        eta_b = float(self.eta_b)
        if eta_b < 0:
            raise ValueError("eta_b must be >= 0")
        # a fixed eta_b > 1 can push the blended-branch variance negative;
        # reject upfront for every noise level the run will visit
        levels = np.unique(problem.levels[problem.measured])
        sigmas = [0.0] + [schedule.sigma(t) for t in ts]
        for sig in sigmas:
            for lev in levels:
                if sig >= lev and sig * sig - (lev * eta_b) ** 2 < -1e-12:
                    raise ValueError(
                        f"eta_b = {eta_b} gives negative variance at "
                        f"sigma_t = {sig}, measurement level {lev}")


def eta_b_theorem(sigma_t, sigma_y: float, s):
    """Blend weight making the blended branch exact for a flat prior.

    Satisfies (1 - eta_b)^2 / (sigma_t^2 - (sigma_y^2/s^2) eta_b^2) = 1/sigma_t^2.
    With sigma_y = 0 this is the constant 2.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("eta_b_theorem needs positive singular values")
    sigma_t = np.asarray(sigma_t, dtype=float)
    st2 = sigma_t * sigma_t
    denom = st2 + (sigma_y / s) ** 2
    return np.where(denom > 0, 2.0 * st2 / np.where(denom > 0, denom, 1.0), 2.0)


def _resolve_eta_b(params: DdrmParams, sigma_t: float, problem: ProblemInstance):
    if isinstance(params.eta_b, str):
        etab = np.ones(problem.n)
        pos = problem.measured
        s = problem.op.singulars()
        etab[pos] = eta_b_theorem(sigma_t, problem.sigma_y, s[pos])
        return etab
    return np.full(problem.n, float(params.eta_b))


def init_state(problem: ProblemInstance, sigma_top: float,
               rng: np.random.Generator, *, mean_null=None, noise=None) -> np.ndarray:
    """Draw xbar_T: measured coordinates around ybar, the rest around 0.

    mean_null replaces the zero center of unmeasured coordinates (used by the
    reference chain that conditions on the true signal).
    """
    problem.validate_sigma_top(sigma_top)
    n = problem.n
    z = np.asarray(noise, dtype=float) if noise is not None else rng.standard_normal(n)
    if z.shape != (n,):
        raise ValueError("noise must have length n")
    mean = np.zeros(n) if mean_null is None else np.asarray(mean_null, dtype=float).copy()
    std = np.full(n, float(sigma_top))
    pos = problem.measured
    mean[pos] = problem.ybar[pos]
    var = sigma_top ** 2 - problem.levels[pos] ** 2
    std[pos] = np.sqrt(np.maximum(var, 0.0))
    return mean + std * z


def step(xbar_next: np.ndarray, xbar_pred: np.ndarray, problem: ProblemInstance,
         sigma_t: float, sigma_next: float, params: DdrmParams,
         rng: np.random.Generator | None = None, *, noise=None) -> np.ndarray:
    """One transition from noise level sigma_next down to sigma_t.

    Three per-coordinate branches: unmeasured, measurement noisier than the
    current level (guided drift toward ybar), and measurement at least as
    clean (blend with ybar at rate eta_b).
    """
    n = problem.n
    xbar_next = np.asarray(xbar_next, dtype=float)
    xbar_pred = np.asarray(xbar_pred, dtype=float)
    if xbar_next.shape != (n,) or xbar_pred.shape != (n,):
        raise ValueError("state vectors must have length n")
    if not (np.all(np.isfinite(xbar_next)) and np.all(np.isfinite(xbar_pred))):
        raise ValueError("non-finite state entering the transition")
    if not 0 <= sigma_t < sigma_next:
        raise ValueError("need 0 <= sigma_t < sigma_next")
    z = np.asarray(noise, dtype=float) if noise is not None else rng.standard_normal(n)
    if z.shape != (n,):
        raise ValueError("noise must have length n")

    eta = params.eta
    root = np.sqrt(1.0 - eta * eta)
    levels = problem.levels
    ybar = problem.ybar
    unmeasured = ~problem.measured
    noisier = problem.measured & (levels > sigma_t)
    cleaner = problem.measured & (levels <= sigma_t)

    mean = np.empty(n)
    std = np.empty(n)

    mean[unmeasured] = xbar_pred[unmeasured] + root * sigma_t * (
        xbar_next[unmeasured] - xbar_pred[unmeasured]) / sigma_next
    std[unmeasured] = eta * sigma_t

    safe = np.where(noisier, levels, 1.0)
    drift = np.where(noisier, (ybar - xbar_pred) / safe, 0.0)
    mean[noisier] = xbar_pred[noisier] + root * sigma_t * drift[noisier]
    std[noisier] = eta * sigma_t

    etab = _resolve_eta_b(params, sigma_t, problem)
    mean[cleaner] = (1.0 - etab[cleaner]) * xbar_pred[cleaner] + etab[cleaner] * ybar[cleaner]
    var = sigma_t ** 2 - (levels[cleaner] * etab[cleaner]) ** 2
    if np.any(var < -1e-12 * max(sigma_t ** 2, 1e-300)):
        raise ValueError("negative variance in the blended branch")
    std[cleaner] = np.sqrt(np.maximum(var, 0.0))

    return mean + std * z


def q_init(problem: ProblemInstance, xbar0: np.ndarray, sigma_top: float,
           rng: np.random.Generator, *, noise=None) -> np.ndarray:
    """Reference-chain init: like init_state but centered on the true xbar0."""
    return init_state(problem, sigma_top, rng, mean_null=xbar0, noise=noise)


def q_step(xbar_next: np.ndarray, xbar0: np.ndarray, problem: ProblemInstance,
           sigma_t: float, sigma_next: float, params: DdrmParams,
           rng: np.random.Generator | None = None, *, noise=None) -> np.ndarray:
    """Reference-chain transition: the true xbar0 stands in for the prediction."""
    return step(xbar_next, xbar0, problem, sigma_t, sigma_next, params,
                rng, noise=noise)


def ilvr_step(prediction: np.ndarray, problem: ProblemInstance, sigma_t: float,
              rng: np.random.Generator | None = None, *,
              eps=None, eps_prime=None) -> np.ndarray:
    """Projection-based reference update (noiseless measurements only).

    x'_t = prediction + sigma_t eps;  y_t = H^+ y + sigma_t eps';
    x_t = x'_t - H^+ H x'_t + H^+ H y_t. Draws eps then eps' when not given.
    """
    if problem.sigma_y != 0:
        raise ValueError("the projection reference requires sigma_y = 0")
    op = problem.op
    n = op.n
    e1 = np.asarray(eps, dtype=float) if eps is not None else rng.standard_normal(n)
    e2 = np.asarray(eps_prime, dtype=float) if eps_prime is not None else rng.standard_normal(n)
    x_prop = np.asarray(prediction, dtype=float) + sigma_t * e1
    y_t = op.pseudo_inverse(problem.y) + sigma_t * e2

    def range_proj(v):
        vbar = op.apply_Vt(v)
        vbar[~problem.measured] = 0.0
        return op.apply_V(vbar)

    return x_prop - range_proj(x_prop) + range_proj(y_t)


def run(problem: ProblemInstance, denoiser, schedule, params: DdrmParams,
        rng: np.random.Generator | None = None, label=None) -> np.ndarray:
    """Full chain: init at the top level, step down to sigma_0 = 0.

    The denoiser sees the signal-space state and the current noise level; it
    is consulted once per transition, never for the init. Returns the final
    signal-space sample.
    """
    params.validate(schedule, problem)
    if rng is None:
        rng = make_rng(params.seed)
    ts = list(params.timesteps)
    op = problem.op
    xbar = init_state(problem, schedule.sigma(ts[-1]), rng)
    lows = [0] + ts[:-1]
    for t_hi, t_lo in zip(reversed(ts), reversed(lows)):
        x_hi = op.apply_V(xbar)
        pred = np.asarray(
            denoiser.predict_x0(x_hi, schedule.sigma(t_hi), t_hi, label), dtype=float)
        if pred.shape != (problem.n,) or not np.all(np.isfinite(pred)):
            raise ValueError("denoiser returned an invalid prediction")
        xbar_pred = op.apply_Vt(pred)
        xbar = step(xbar, xbar_pred, problem,
                    schedule.sigma(t_lo), schedule.sigma(t_hi), params, rng)
    return op.apply_V(xbar)
