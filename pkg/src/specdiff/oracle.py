"""Brute-force reference computations backing the conformance checks.

Everything here trades speed for independence: the SVD is a hand-rolled
one-sided Jacobi rather than a LAPACK call, and the posterior is solved in
whatever basis the caller likes, so the structured operators and the sampler
can be validated against routes that share none of their code.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_DENSE_ELEMENTS = 1_000_000


def probe_matrix(op) -> np.ndarray:
    """Materialize an operator's dense matrix by applying it to basis vectors."""
    h = np.empty((op.m, op.n))
    e = np.zeros(op.n)
    for j in range(op.n):
        e[j] = 1.0
        h[:, j] = op.apply(e)
        e[j] = 0.0
    return h


def _complete_basis(cols: np.ndarray, dim: int, count: int) -> np.ndarray:
    """Extend the orthonormal columns `cols` (dim x k) by `count` more."""
    have = [cols[:, j] for j in range(cols.shape[1])]
    out = []
    for cand in range(dim):
        if len(out) == count:
            break
        v = np.zeros(dim)
        v[cand] = 1.0
        for u in have:
            v -= (u @ v) * u
        # re-orthogonalize once; single pass Gram-Schmidt drifts
        for u in have:
            v -= (u @ v) * u
        norm = np.sqrt(v @ v)
        if norm > 1e-8:
            v /= norm
            have.append(v)
            out.append(v)
    if len(out) != count:
        raise RuntimeError("basis completion failed")
    return np.stack(out, axis=1)


def _jacobi_tall(a: np.ndarray, tol: float, max_sweeps: int):
    """One-sided Jacobi on a tall (m >= n) matrix: returns full (u, s, v)."""
    m, n = a.shape
    w = np.array(a, dtype=float)
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                wi = w[:, i]
                wj = w[:, j]
                alpha = wi @ wi
                beta = wj @ wj
                gamma = wi @ wj
                denom = np.sqrt(alpha * beta)
                if denom == 0.0 or abs(gamma) <= tol * denom:
                    continue
                off = max(off, abs(gamma) / denom)
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                if zeta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                w_i_new = c * wi - s * wj
                w_j_new = s * wi + c * wj
                w[:, i] = w_i_new
                w[:, j] = w_j_new
                v_i_new = c * v[:, i] - s * v[:, j]
                v_j_new = s * v[:, i] + c * v[:, j]
                v[:, i] = v_i_new
                v[:, j] = v_j_new
        if off == 0.0:
            break
    norms = np.sqrt(np.sum(w * w, axis=0))
    order = np.argsort(-norms, kind="stable")
    norms = norms[order]
    w = w[:, order]
    v = v[:, order]
    scale = norms[0] if norms.size and norms[0] > 0 else 1.0
    u_cols = []
    for j in range(n):
        if norms[j] > 1e-13 * scale:
            u_cols.append(w[:, j] / norms[j])
        else:
            norms[j] = 0.0
    u = np.empty((m, m))
    k = len(u_cols)
    if k:
        u[:, :k] = np.stack(u_cols, axis=1)
    if k < m:
        u[:, k:] = _complete_basis(u[:, :k], m, m - k)
    return u, norms, v


def dense_svd(a: np.ndarray, tol: float = 1e-14, max_sweeps: int = 60):
    """Full SVD of a small dense matrix by one-sided Jacobi rotations.

    Returns (u, s, v) with square orthogonal u (m x m) and v (n x n) and
    s of length min(m, n), descending. Guarded to test-scale inputs.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("dense_svd expects a 2-D array")
    m, n = a.shape
    if m * n > MAX_DENSE_ELEMENTS:
        raise ValueError(f"dense_svd size guard exceeded: {m}x{n}")
    if m >= n:
        return _jacobi_tall(a, tol, max_sweeps)
    u_t, s, v_t = _jacobi_tall(a.T, tol, max_sweeps)
    return v_t, s, u_t


def reconstruct(u: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """u @ diag_rect(s) @ v.T for square u, v and len(s) = min(m, n)."""
    k = s.shape[0]
    return (u[:, :k] * s) @ v[:, :k].T


@dataclass(frozen=True)
class DensePosterior:
    """Coordinate-wise posterior in the spectral basis of the operator."""

    mean: np.ndarray
    variance: np.ndarray

    def mean_signal(self, op) -> np.ndarray:
        return op.apply_V(self.mean)


def gaussian_posterior(op, y: np.ndarray, sigma_y: float, mu0, tau: float) -> DensePosterior:
    """Exact posterior for an isotropic Gaussian prior N(mu0, tau^2 I).

    Coordinates with zero singular value carry the prior; measured
    coordinates combine the prior with ybar at noise level sigma_y / s_i.
    sigma_y = 0 is exact conditioning (zero posterior variance).
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if sigma_y < 0:
        raise ValueError("sigma_y must be >= 0")
    s = op.singulars()
    mu_vec = np.full(op.n, float(mu0)) if np.isscalar(mu0) else np.asarray(mu0, dtype=float)
    if mu_vec.shape != (op.n,):
        raise ValueError("mu0 must be a scalar or a length-n vector")
    mubar = op.apply_Vt(mu_vec)
    ybar, _ = op.spectral_measurement(y, sigma_y)
    mean = mubar.copy()
    var = np.full(op.n, tau * tau)
    pos = s > 0
    if sigma_y == 0.0:
        mean[pos] = ybar[pos]
        var[pos] = 0.0
    else:
        prec = 1.0 / (tau * tau) + (s[pos] / sigma_y) ** 2
        mean[pos] = (mubar[pos] / (tau * tau) + ybar[pos] * (s[pos] / sigma_y) ** 2) / prec
        var[pos] = 1.0 / prec
    return DensePosterior(mean=mean, variance=var)


class RunningMoments:
    """Streaming per-coordinate mean/variance (Welford) for Monte Carlo checks."""

    def __init__(self, dim: int):
        self.count = 0
        self._mean = np.zeros(dim)
        self._m2 = np.zeros(dim)

    def push(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float)
        if x.shape != self._mean.shape:
            raise ValueError("sample dimension mismatch")
        self.count += 1
        delta = x - self._mean
        self._mean += delta / self.count
        self._m2 += delta * (x - self._mean)

    @property
    def mean(self) -> np.ndarray:
        return self._mean.copy()

    @property
    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.full_like(self._mean, np.nan)
        return self._m2 / (self.count - 1)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(self.variance / self.count)
