"""Matrix-free SVD factorizations of the supported degradation operators.

Signals are flat float64 vectors in planar channel-major layout: an image of
`channels` planes of side d ravels as (C, d, d) row-major. Every operator
exposes the factor actions (V, Vt, U, Ut) and the full length-n singular
spectrum sorted descending, keeping O(n) state for the structured kinds.
"""
from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

# singular values this far below the top are indistinguishable from the
# factorization's own rounding error; keeping them "measured" would inject
# 1/s-amplified float noise into downstream spectral state
SPECTRUM_FLOOR = 1e-12


def _as_vector(x, length: int, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != (length,):
        raise ValueError(f"{what} must have shape ({length},), got {arr.shape}")
    return arr


class SvdOperator(ABC):
    """A linear degradation H = U Sigma V^T exposed through factor actions.

    Subclasses fill in the orthogonal factor actions and the spectrum; the
    base class derives apply, the pseudo-inverse, and the spectral view of a
    measurement from them, so the pieces can never drift apart.
    """

    kind: str = "abstract"

    def __init__(self, m: int, n: int, singulars: np.ndarray):
        if m < 0 or n <= 0:
            raise ValueError("operator dimensions must be positive")
        self._m = int(m)
        self._n = int(n)
        s = np.zeros(n)
        s[: singulars.shape[0]] = singulars
        if np.any(s < 0):
            raise ValueError("singular values must be nonnegative")
        if np.any(np.diff(s) > 1e-15):
            raise ValueError("singular values must be sorted descending")
        if np.any(s[min(m, n):] != 0):
            raise ValueError("spectrum must be zero beyond index min(m, n)")
        s.setflags(write=False)
        self._singulars = s

    @property
    def m(self) -> int:
        return self._m

    @property
    def n(self) -> int:
        return self._n

    def singulars(self) -> np.ndarray:
        """Length-n spectrum, descending, zero-padded past rank."""
        return self._singulars

    @abstractmethod
    def apply_V(self, xbar: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def apply_Vt(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def apply_U(self, w: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def apply_Ut(self, y: np.ndarray) -> np.ndarray: ...

    def apply(self, x) -> np.ndarray:
        """H x, computed as U (Sigma (V^T x))."""
        xbar = self.apply_Vt(x)
        k = min(self._m, self._n)
        w = np.zeros(self._m)
        w[:k] = self._singulars[:k] * xbar[:k]
        return self.apply_U(w)

    def pseudo_inverse(self, y) -> np.ndarray:
        """Moore-Penrose H^+ y through the factors; zeroed spectrum stays zero."""
        w = self.apply_Ut(y)
        k = min(self._m, self._n)
        xbar = np.zeros(self._n)
        s = self._singulars[:k]
        nz = s > 0
        xbar[:k][nz] = w[:k][nz] / s[nz]
        return self.apply_V(xbar)

    def spectral_measurement(self, y, sigma_y: float):
        """Return (ybar, levels): Sigma^+ U^T y and per-coordinate noise levels.

        Unmeasured coordinates (s_i = 0) carry ybar 0 and level inf, which
        downstream consumers treat as "no information".
        """
        if sigma_y < 0:
            raise ValueError("sigma_y must be >= 0")
        w = self.apply_Ut(y)
        k = min(self._m, self._n)
        s = self._singulars
        ybar = np.zeros(self._n)
        nz = s[:k] > 0
        ybar[:k][nz] = w[:k][nz] / s[:k][nz]
        levels = np.full(self._n, np.inf)
        pos = s > 0
        levels[pos] = sigma_y / s[pos]
        return ybar, levels


class IdentityOperator(SvdOperator):
    """H = I; everything is the identity."""

    kind = "denoise"

    def __init__(self, n: int):
        super().__init__(n, n, np.ones(n))

    def apply_V(self, xbar):
        return _as_vector(xbar, self._n, "xbar")

    def apply_Vt(self, x):
        return _as_vector(x, self._n, "x")

    def apply_U(self, w):
        return _as_vector(w, self._m, "w")

    def apply_Ut(self, y):
        return _as_vector(y, self._m, "y")


class InpaintingOperator(SvdOperator):
    """Coordinate subsampling: V^T permutes kept entries first, U = I."""

    kind = "inpaint"

    def __init__(self, n: int, kept: np.ndarray):
        kept = np.asarray(kept, dtype=int)
        if kept.ndim != 1:
            raise ValueError("kept indices must be a 1-D index list")
        if kept.size and (kept.min() < 0 or kept.max() >= n):
            raise ValueError("kept indices out of range")
        if np.unique(kept).size != kept.size:
            raise ValueError("kept indices must be unique")
        m = kept.size
        dropped = np.setdiff1d(np.arange(n), kept)
        self._perm = np.concatenate([kept, dropped]) if m else dropped
        self._inv = np.empty(n, dtype=int)
        self._inv[self._perm] = np.arange(n)
        super().__init__(m, n, np.ones(m))

    def apply_Vt(self, x):
        return _as_vector(x, self._n, "x")[self._perm]

    def apply_V(self, xbar):
        return _as_vector(xbar, self._n, "xbar")[self._inv]

    def apply_U(self, w):
        return _as_vector(w, self._m, "w")

    def apply_Ut(self, y):
        return _as_vector(y, self._m, "y")


class GroupedMeanOperator(SvdOperator):
    """Disjoint weighted group means: per-group rank-one rows U Sigma V^T.

    The right factor is, per group, a Householder reflection taking e_1 to
    the unit weight vector, so only the reflection vector is stored and all
    actions stay O(n).
    """

    def __init__(self, kind: str, n: int, gather: np.ndarray, weights: np.ndarray):
        self.kind = kind
        g = weights.shape[0]
        if gather.size != n or gather.size % g or np.unique(gather).size != n:
            raise ValueError("gather index table does not tile the signal")
        groups = gather.size // g
        norm = float(np.sqrt(weights @ weights))
        if norm == 0:
            raise ValueError("group weights must be nonzero")
        self._gather = gather.reshape(groups, g)
        unit = weights / norm
        w = unit - np.eye(g)[0]
        wn = w @ w
        self._house = (w, wn) if wn > 1e-28 else None
        self._groups = groups
        self._gsize = g
        super().__init__(groups, n, np.full(groups, norm))

    def _reflect(self, z: np.ndarray) -> np.ndarray:
        # symmetric orthogonal factor: equals its own transpose/inverse
        if self._house is None:
            return z
        w, wn = self._house
        return z - (2.0 / wn) * np.outer(z @ w, w)

    def apply_Vt(self, x):
        x = _as_vector(x, self._n, "x")
        z = self._reflect(x[self._gather])
        out = np.empty(self._n)
        out[: self._groups] = z[:, 0]
        out[self._groups:] = z[:, 1:].ravel()
        return out

    def apply_V(self, xbar):
        xbar = _as_vector(xbar, self._n, "xbar")
        z = np.empty((self._groups, self._gsize))
        z[:, 0] = xbar[: self._groups]
        z[:, 1:] = xbar[self._groups:].reshape(self._groups, self._gsize - 1)
        out = np.empty(self._n)
        out[self._gather.ravel()] = self._reflect(z).ravel()
        return out

    def apply_U(self, w):
        return _as_vector(w, self._m, "w")

    def apply_Ut(self, y):
        return _as_vector(y, self._m, "y")


class SeparableOperator(SvdOperator):
    """Per-channel Kronecker product of two 1-D operators acting on rows/columns.

    H x per channel is vec(A_col X A_row^T); the SVD is assembled from the two
    per-axis dense SVDs (d x d apiece, within the O(n) budget) plus the sort
    permutation that makes the combined spectrum descending. Channels share
    the factors; their equal spectra interleave channel-minor so the global
    spectrum stays descending.
    """

    def __init__(self, kind: str, a_row: np.ndarray, a_col: np.ndarray,
                 channels: int, sv_threshold: float = 0.0):
        self.kind = kind
        if sv_threshold < 0:
            raise ValueError("sv_threshold must be >= 0")
        p_r, d_r = a_row.shape
        p_c, d_c = a_col.shape
        if d_r != d_c or p_r != p_c:
            raise ValueError("axis operators must agree on sizes")
        d, p = d_r, p_r
        u_c, s_c, vt_c = np.linalg.svd(a_col, full_matrices=True)
        u_r, s_r, vt_r = np.linalg.svd(a_row, full_matrices=True)
        s_c_full = np.zeros(d)
        s_c_full[:p] = s_c
        s_r_full = np.zeros(d)
        s_r_full[:p] = s_r
        s_kron = np.outer(s_c_full, s_r_full).ravel()
        order = np.argsort(-s_kron, kind="stable")
        s_sorted = s_kron[order]
        threshold = max(sv_threshold, SPECTRUM_FLOOR)
        if s_sorted[0] > 0:
            s_sorted = np.where(s_sorted < threshold * s_sorted[0], 0.0, s_sorted)

        # measurement-side permutation: sorted coordinates carrying a (a<p, b<p)
        # pair keep that pair's output slot; leftovers fill the unused slots
        m_ch = p * p
        a_idx, b_idx = np.divmod(order, d)
        measured = (a_idx < p) & (b_idx < p)
        perm_m = np.empty(m_ch, dtype=int)
        used = np.zeros(m_ch, dtype=bool)
        spare = []
        for rank in range(m_ch):
            if measured[rank]:
                slot = a_idx[rank] * p + b_idx[rank]
                perm_m[rank] = slot
                used[slot] = True
            else:
                # an exactly-zero measured pair got sorted past m; its output
                # slot is reassigned to this rank below
                spare.append(rank)
        pool = iter(np.flatnonzero(~used))
        for rank in spare:
            perm_m[rank] = next(pool)

        self._d, self._p, self._c = d, p, channels
        self._u_c, self._u_r = u_c, u_r
        self._v_c, self._v_r = vt_c.T, vt_r.T
        self._perm_n = order
        self._inv_n = np.argsort(order)
        self._perm_m = perm_m
        self._inv_m = np.argsort(perm_m)
        super().__init__(channels * m_ch, channels * d * d, np.repeat(s_sorted, channels))

    def apply_Vt(self, x):
        x = _as_vector(x, self._n, "x")
        d, c = self._d, self._c
        planes = x.reshape(c, d, d)
        w = (self._v_c.T @ planes) @ self._v_r
        return w.reshape(c, d * d)[:, self._perm_n].T.ravel()

    def apply_V(self, xbar):
        xbar = _as_vector(xbar, self._n, "xbar")
        d, c = self._d, self._c
        w = xbar.reshape(d * d, c).T[:, self._inv_n].reshape(c, d, d)
        return ((self._v_c @ w) @ self._v_r.T).ravel()

    def apply_Ut(self, y):
        y = _as_vector(y, self._m, "y")
        p, c = self._p, self._c
        planes = y.reshape(c, p, p)
        w = (self._u_c.T @ planes) @ self._u_r
        return w.reshape(c, p * p)[:, self._perm_m].T.ravel()

    def apply_U(self, w):
        w = _as_vector(w, self._m, "w")
        p, c = self._p, self._c
        z = w.reshape(p * p, c).T[:, self._inv_m].reshape(c, p, p)
        return ((self._u_c @ z) @ self._u_r.T).ravel()


class DenseOperator(SvdOperator):
    """Explicit-matrix operator for tests; factors come from a dense SVD."""

    kind = "dense"

    def __init__(self, h: np.ndarray):
        h = np.asarray(h, dtype=float)
        if h.ndim != 2:
            raise ValueError("dense operator needs a 2-D matrix")
        m, n = h.shape
        u, s, vt = np.linalg.svd(h, full_matrices=True)
        if s.size and s[0] > 0:
            s = np.where(s < SPECTRUM_FLOOR * s[0], 0.0, s)
        self._u = u
        self._v = vt.T
        super().__init__(m, n, s)

    def apply_Vt(self, x):
        return self._v.T @ _as_vector(x, self._n, "x")

    def apply_V(self, xbar):
        return self._v @ _as_vector(xbar, self._n, "xbar")

    def apply_Ut(self, y):
        return self._u.T @ _as_vector(y, self._m, "y")

    def apply_U(self, w):
        return self._u @ _as_vector(w, self._m, "w")


def _check_square_image(d: int, channels: int) -> int:
    if d <= 0 or channels <= 0:
        raise ValueError("image side and channel count must be positive")
    return channels * d * d


def build_denoising(d: int, channels: int) -> SvdOperator:
    """Identity degradation on a (channels, d, d) image."""
    return IdentityOperator(_check_square_image(d, channels))


def build_inpainting(d: int, channels: int, mask) -> SvdOperator:
    """Keep the flat signal coordinates listed in `mask`, drop the rest."""
    n = _check_square_image(d, channels)
    return InpaintingOperator(n, np.asarray(mask, dtype=int))


def build_block_sr(d: int, r: int, channels: int) -> SvdOperator:
    """r x r block averaging per channel; measurement side is (d/r, d/r)."""
    n = _check_square_image(d, channels)
    if r <= 0 or d % r:
        raise ValueError("d must be divisible by the block factor r")
    idx = np.arange(n).reshape(channels, d, d)
    blocks = idx.reshape(channels, d // r, r, d // r, r).transpose(0, 1, 3, 2, 4)
    gather = blocks.reshape(-1).astype(int)
    weights = np.full(r * r, 1.0 / (r * r))
    return GroupedMeanOperator("block_sr", n, gather, weights)


def build_colorization(d: int, channels: int = 3) -> SvdOperator:
    """Channel averaging per pixel (graying); requires 3 channels."""
    if channels != 3:
        raise ValueError("colorization needs exactly 3 channels")
    n = _check_square_image(d, channels)
    hw = d * d
    gather = (np.arange(hw)[:, None] * 1 + np.arange(3)[None, :] * hw).ravel()
    weights = np.full(3, 1.0 / 3.0)
    return GroupedMeanOperator("colorize", n, gather, weights)


def _conv_matrix(kernel: np.ndarray, d: int) -> np.ndarray:
    """Zero-padded same-size 1-D convolution as a d x d matrix."""
    kernel = np.asarray(kernel, dtype=float)
    if kernel.ndim != 1 or kernel.size == 0:
        raise ValueError("kernel must be a nonempty 1-D array")
    if kernel.size > d:
        raise ValueError("kernel longer than the image side")
    c = (kernel.size - 1) // 2
    a = np.zeros((d, d))
    for u, k in enumerate(kernel):
        a += k * np.eye(d, d, k=c - u)
    return a


def build_sep_blur(d: int, channels: int, row_kernel, col_kernel,
                   sv_threshold: float = 0.0) -> SvdOperator:
    """Separable blur: 1-D zero-padded convolutions along rows and columns.

    sv_threshold zeroes spectrum entries below threshold * s_max, turning
    near-null directions into explicitly unmeasured ones.
    """
    _check_square_image(d, channels)
    a_row = _conv_matrix(np.asarray(row_kernel, dtype=float), d)
    a_col = _conv_matrix(np.asarray(col_kernel, dtype=float), d)
    return SeparableOperator("sep_blur", a_row, a_col, channels, sv_threshold)


def _bicubic_weight(t: np.ndarray) -> np.ndarray:
    # Catmull-Rom cubic, a = -0.5
    at = np.abs(t)
    w = np.zeros_like(at)
    near = at <= 1.0
    far = (at > 1.0) & (at < 2.0)
    w[near] = 1.5 * at[near] ** 3 - 2.5 * at[near] ** 2 + 1.0
    w[far] = -0.5 * at[far] ** 3 + 2.5 * at[far] ** 2 - 4.0 * at[far] + 2.0
    return w


def _bicubic_axis_matrix(d: int, r: int) -> np.ndarray:
    """(d/r) x d strided sampling matrix for the bicubic kernel.

    Taps falling outside the signal are clipped and each row renormalized to
    unit sum, so constant signals are preserved everywhere.
    """
    p = d // r
    a = np.zeros((p, d))
    j = np.arange(d)
    for i in range(p):
        center = i * r + (r - 1) / 2.0
        w = _bicubic_weight((j - center) / r)
        total = w.sum()
        if total <= 0:
            raise ValueError("degenerate bicubic row")
        a[i] = w / total
    return a


def build_bicubic_sr(d: int, r: int, channels: int) -> SvdOperator:
    """Bicubic downsampling by integer factor r as a separable strided filter."""
    _check_square_image(d, channels)
    if r <= 0 or d % r:
        raise ValueError("d must be divisible by the downsampling factor r")
    a = _bicubic_axis_matrix(d, r)
    return SeparableOperator("bicubic_sr", a, a, channels)


def from_matrix(h) -> SvdOperator:
    """Wrap an explicit matrix (tests and small problems only)."""
    return DenseOperator(np.asarray(h, dtype=float))
