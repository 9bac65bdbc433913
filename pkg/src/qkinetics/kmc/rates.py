"""Bose-enhanced transition rates of a collision channel.

Rates follow ``t-(n) = gamma n1 n2 (n3+1)(n4+1)`` for ``n -> n - e`` and
``t+(n) = gamma (n1+1)(n2+1) n3 n4`` for ``n -> n + e``.  When both
particles of a pair share one mode, the pair factors become the ladder
products ``n(n-1)`` and ``(n+1)(n+2)`` so that no occupation can go negative;
the identity ``t+(n - e) = t-(n)`` holds in every case.
"""

from __future__ import annotations

import numpy as np

from .lattice import CollisionChannel, OccupationConfig


def _remove_factor(n, i, j):
    # pair (i, j) loses one particle each
    if i == j:
        return n[..., i] * (n[..., i] - 1)
    return n[..., i] * n[..., j]


def _add_factor(n, i, j):
    if i == j:
        return (n[..., i] + 1) * (n[..., i] + 2)
    return (n[..., i] + 1) * (n[..., j] + 1)


def _occupations(config):
    if isinstance(config, OccupationConfig):
        return config.n
    return np.asarray(config, dtype=np.int64)


def _indices(ch):
    return ch.indices if isinstance(ch, CollisionChannel) else tuple(ch)


def rate_minus(config, ch, gamma: float = 1.0):
    """Rate of ``n -> n - e`` (modes 1, 2 depopulated)."""
    n = _occupations(config)
    i1, i2, i3, i4 = _indices(ch)
    return gamma * (_remove_factor(n, i1, i2) * _add_factor(n, i3, i4))


def rate_plus(config, ch, gamma: float = 1.0):
    """Rate of ``n -> n + e`` (modes 3, 4 depopulated)."""
    n = _occupations(config)
    i1, i2, i3, i4 = _indices(ch)
    return gamma * (_add_factor(n, i1, i2) * _remove_factor(n, i3, i4))


def rate_table(states, chan: np.ndarray, gamma: float = 1.0):
    """Plus and minus rates for every (state, channel); arrays of shape (S, C)."""
    n = np.atleast_2d(np.asarray(states, dtype=np.int64))
    i1, i2, i3, i4 = (chan[:, k] for k in range(4))
    same12 = i1 == i2
    same34 = i3 == i4
    n1, n2, n3, n4 = n[:, i1], n[:, i2], n[:, i3], n[:, i4]
    rem12 = np.where(same12, n1 * (n1 - 1), n1 * n2)
    add12 = np.where(same12, (n1 + 1) * (n1 + 2), (n1 + 1) * (n2 + 1))
    rem34 = np.where(same34, n3 * (n3 - 1), n3 * n4)
    add34 = np.where(same34, (n3 + 1) * (n3 + 2), (n3 + 1) * (n4 + 1))
    plus = gamma * (add12 * rem34).astype(float)
    minus = gamma * (rem12 * add34).astype(float)
    return plus, minus


def total_rate(config, chan: np.ndarray, gamma: float = 1.0) -> float:
    plus, minus = rate_table(_occupations(config), chan, gamma)
    return float(plus.sum() + minus.sum())
