"""Band-limited wavelet phase-space basis.

Each cell function is the inverse Fourier transform of a momentum band of
half-width ``delta`` centred on ``K``, translated to a grid point
``r = n pi / delta``.  The functions are orthonormal across both band and
position index; overlaps here are evaluated analytically in momentum space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import H, HBAR

_SINC_SERIES_CUTOFF = 1e-4
_GRID_TOL = 1e-9

# per-axis weights of the discrete momentum-smearing function
M_DELTA_WEIGHTS = {0: 2.0 / 3.0, 1: 1.0 / 6.0, -1: 1.0 / 6.0}


class BasisError(ValueError):
    pass


@dataclass(frozen=True)
class CellSpec:
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise BasisError(f"delta must be positive, got {self.delta}")

    @property
    def l_c(self) -> float:
        return math.pi / self.delta


@dataclass(frozen=True)
class WaveletIndex:
    """Band centre ``K`` and cell centre ``r``, one entry per axis."""

    K: tuple
    r: tuple
    delta: float

    def __post_init__(self):
        K = tuple(float(k) for k in np.atleast_1d(self.K))
        r = tuple(float(x) for x in np.atleast_1d(self.r))
        if len(K) != len(r):
            raise BasisError("K and r must have the same number of axes")
        if not self.delta > 0:
            raise BasisError(f"delta must be positive, got {self.delta}")
        for x in r:
            grid_index(x, self.delta)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "r", r)

    @property
    def n(self) -> tuple:
        return tuple(grid_index(x, self.delta) for x in self.r)


def grid_index(r: float, delta: float) -> int:
    """Return ``n`` with ``r = n pi / delta``; reject off-grid positions."""
    q = r * delta / math.pi
    n = round(q)
    if abs(q - n) > _GRID_TOL * max(1.0, abs(q)):
        raise BasisError(f"r={r} is not on the grid n*pi/delta (delta={delta})")
    return int(n)


def _sinc_ratio(delta, s):
    """``sin(delta s)/s`` with the series branch near ``s = 0``."""
    s = np.asarray(s, dtype=float)
    z = delta * s
    small = np.abs(z) < _SINC_SERIES_CUTOFF
    safe = np.where(small, 1.0, s)
    out = np.where(small, delta * (1.0 - z**2 / 6.0 + z**4 / 120.0), np.sin(z) / safe)
    return out


def wavelet_1d(K, r, x, delta):
    """Cell function ``exp(iK(x-r)) sin(delta(x-r)) / ((x-r) sqrt(pi delta))``.

    Vectorized over ``x``.  At ``x = r`` the value is ``sqrt(delta/pi)``.
    """
    if not delta > 0:
        raise BasisError(f"delta must be positive, got {delta}")
    grid_index(r, delta)
    s = np.asarray(x, dtype=float) - r
    out = np.exp(1j * K * s) * _sinc_ratio(delta, s) / math.sqrt(math.pi * delta)
    return out[()] if out.ndim == 0 else out


def _overlap_axis(K1, n1, K2, n2, delta):
    # (1/2delta) * integral over the common band of exp(i k (r1 - r2)) dk
    lo = max(K1, K2) - delta
    hi = min(K1, K2) + delta
    if hi <= lo:
        return 0.0 + 0.0j
    m = n1 - n2
    if K1 == K2:
        # whole band: exp(iKd) sin(m pi)/(m pi) -> exact Kronecker delta
        return 1.0 + 0.0j if m == 0 else 0.0 + 0.0j
    if m == 0:
        return complex((hi - lo) / (2.0 * delta))
    d = m * math.pi / delta
    return (np.exp(1j * hi * d) - np.exp(1j * lo * d)) / (1j * d * 2.0 * delta)


def overlap(a: WaveletIndex, b: WaveletIndex, delta: float | None = None) -> complex:
    """Inner product ``<v_a, v_b>`` evaluated in the Fourier domain."""
    if a.delta != b.delta:
        raise BasisError(f"indices built on different delta ({a.delta} vs {b.delta})")
    if delta is not None and delta != a.delta:
        raise BasisError(f"delta={delta} does not match the indices ({a.delta})")
    if len(a.K) != len(b.K):
        raise BasisError("indices have different dimensionality")
    out = 1.0 + 0.0j
    for K1, n1, K2, n2 in zip(a.K, a.n, b.K, b.n):
        out *= _overlap_axis(K1, n1, K2, n2, a.delta)
        if out == 0:
            return 0.0 + 0.0j
    return complex(out)


def g_kernel(x, delta):
    """Band-limited delta surrogate ``prod_i sin(delta x_i)/(pi x_i)``.

    ``x`` has shape ``(..., 3)``; the value at the origin is ``(delta/pi)**3``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise BasisError("g_kernel expects 3-vectors")
    vals = _sinc_ratio(delta, x) / math.pi
    out = np.prod(vals, axis=-1)
    return out[()] if out.ndim == 0 else out


def g_zero(delta):
    return (delta / math.pi) ** 3


def g4_moment(delta):
    """Integral of ``g(x)**4`` over all space: ``(2 delta^3 / (3 pi^3))**3``."""
    return (2.0 * delta**3 / (3.0 * math.pi**3)) ** 3


def cell_geometry(delta):
    """Phase-cell spacings ``(pi/delta, 2 hbar delta)``; their product is ``h``."""
    if not delta > 0:
        raise BasisError(f"delta must be positive, got {delta}")
    return math.pi / delta, 2.0 * delta * HBAR


def cell_product_over_h(delta):
    dx, dp = cell_geometry(delta)
    return dx * dp / H


def m_delta_weight(Q, delta):
    """Discrete momentum-smearing weight for a band-label mismatch ``Q``.

    Components of ``Q`` are labels in {0, +delta, -delta}, where the nonzero
    labels denote the neighbouring band (physical offset ``2 delta``).
    Anything else has weight zero.
    """
    Q = np.atleast_1d(np.asarray(Q, dtype=float))
    if Q.shape != (3,):
        raise BasisError("Q must be a 3-vector")
    w = (delta / math.pi) ** 3
    for q in Q:
        k = q / delta
        step = round(k)
        if abs(k - step) > _GRID_TOL or step not in M_DELTA_WEIGHTS:
            return 0.0
        w *= M_DELTA_WEIGHTS[step]
    return w


class QuadratureError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual estimate {residual:.3e})")
        self.residual = residual


def _m_delta_double_sum(Q, delta, half_width, step):
    y = np.arange(-half_width, half_width + 0.5 * step, step)
    g1 = _sinc_ratio(delta, y) / math.pi
    # g(y' - y) on the uniform grid depends only on the index offset
    offsets = np.arange(-(len(y) - 1), len(y)) * step
    g3 = (_sinc_ratio(delta, offsets) / math.pi) ** 3
    idx = np.arange(len(y))
    diff = g3[idx[None, :] - idx[:, None] + len(y) - 1]  # [i, j] -> g(y_j - y_i)**3
    phase = np.exp(1j * Q * y)
    a = g1 * phase  # g(y) e^{iQy}
    b = g1 * np.conj(phase)  # g(y') e^{-iQy'}
    total = a @ diff @ b
    return total.real * step * step


def m_delta_oracle_1d(Q, delta=1.0, half_width=None, rtol=5e-3):
    """One-dimensional smearing integral by truncated double quadrature.

    Evaluates ``int dy int dy' g(y') g(y) g(y'-y)**3 exp(iq(y-y'))`` with the
    one-dimensional kernel ``g(y) = sin(delta y)/(pi y)`` on a uniform grid.
    ``Q`` uses the same labels as :func:`m_delta_weight`, so the physical
    wavenumber mismatch is ``q = 2 Q``.  The exact values are
    ``(delta/pi)**3 * (2/3, 1/6, 1/6)`` at labels ``(0, +delta, -delta)``.
    The integrand is band-limited, so the trapezoid rule is exact on the
    infinite line for a step below ``pi / (3 delta)``; the residual comes
    only from truncation and is estimated by halving the domain.
    """
    if half_width is None:
        half_width = 400.0 / delta
    step = math.pi / (4.0 * delta)
    q = 2.0 * Q
    full = _m_delta_double_sum(q, delta, half_width, step)
    half = _m_delta_double_sum(q, delta, 0.5 * half_width, step)
    residual = abs(full - half)
    scale = abs(full) if full != 0 else 1.0
    if residual > rtol * max(scale, (delta / math.pi) ** 3):
        raise QuadratureError("m_delta quadrature did not converge", residual)
    return full


def overlap_quadrature_1d(K1, r1, K2, r2, delta, half_width=None):
    """Position-space overlap of two 1-D cell functions on a truncated line.

    The product of two cell functions is band-limited to ``|k| <= 2 delta``
    around ``K2 - K1``, so the trapezoid rule with step ``pi / (4 delta)``
    carries no discretization error beyond truncation.  The truncation error
    of the norm is about ``1 / (pi delta W)`` for half-width ``W``; the
    default ``W = 1000 / delta`` keeps it near ``3e-4``.
    """
    if half_width is None:
        half_width = 1000.0 / delta
    step = math.pi / (4.0 * delta)
    centre = 0.5 * (r1 + r2)
    x = centre + np.arange(-half_width, half_width + 0.5 * step, step)
    v1 = wavelet_1d(K1, r1, x, delta)
    v2 = wavelet_1d(K2, r2, x, delta)
    return complex(np.sum(np.conj(v1) * v2) * step)
