"""Momentum mode lattice, occupation configurations and collision channels."""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ..constants import HBAR, SODIUM_MASS

MAX_CHANNELS = 2_000_000


class CapacityError(RuntimeError):
    """A requested table or state space exceeds its configured guard."""


@dataclass(frozen=True, eq=False)
class ModeLattice:
    """Integer momentum modes ``K = (2 pi / L) z`` in a single cell of side ``L``.

    Energies are held as integers ``|z|^2`` in units of
    ``epsilon0 = hbar^2 (2 pi / L)^2 / 2m``.
    """

    modes: np.ndarray
    L: float = 1e-5
    mass: float = SODIUM_MASS
    energies: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=np.int64).reshape(-1, 3)
        if len(modes) == 0:
            raise ValueError("lattice must contain at least one mode")
        if len({tuple(z) for z in modes.tolist()}) != len(modes):
            raise ValueError("mode indices must be unique")
        if not (self.L > 0 and self.mass > 0):
            raise ValueError("L and mass must be positive")
        modes.setflags(write=False)
        energies = np.sum(modes * modes, axis=1)
        energies.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "energies", energies)

    @classmethod
    def cube(cls, z_max: int, L: float = 1e-5, mass: float = SODIUM_MASS) -> "ModeLattice":
        r = range(-z_max, z_max + 1)
        modes = np.array(list(itertools.product(r, r, r)), dtype=np.int64)
        return cls(modes, L=L, mass=mass)

    def __len__(self):
        return len(self.modes)

    @property
    def k_unit(self) -> float:
        return 2.0 * math.pi / self.L

    @property
    def delta(self) -> float:
        # bands of width 2*delta tile the lattice spacing 2 pi / L
        return math.pi / self.L

    @property
    def epsilon0(self) -> float:
        return HBAR**2 * self.k_unit**2 / (2.0 * self.mass)

    @property
    def wavevectors(self) -> np.ndarray:
        return self.modes * self.k_unit

    @property
    def hbar_omega(self) -> np.ndarray:
        return self.energies * self.epsilon0

    def index_of(self, z) -> int:
        hits = np.flatnonzero(np.all(self.modes == np.asarray(z), axis=1))
        if len(hits) == 0:
            raise KeyError(f"mode {tuple(z)} not in lattice")
        return int(hits[0])

    def zero_mode(self) -> int | None:
        try:
            return self.index_of((0, 0, 0))
        except KeyError:
            return None

    def describe(self) -> dict:
        return {
            "L": self.L,
            "mass": self.mass,
            "n_modes": len(self),
            "modes": self.modes.tolist(),
        }


class OccupationConfig:
    """Occupation numbers with cached particle number, energy and momentum."""

    __slots__ = ("_n", "_lattice", "N", "E", "P")

    def __init__(self, n, lattice: ModeLattice):
        n = np.array(n, dtype=np.int64)
        if n.shape != (len(lattice),):
            raise ValueError(f"expected {len(lattice)} occupations, got shape {n.shape}")
        if np.any(n < 0):
            raise ValueError("occupations must be nonnegative")
        self._n = n
        self._lattice = lattice
        self._recompute()

    def _recompute(self):
        self.N = int(self._n.sum())
        self.E = int(self._n @ self._lattice.energies)
        self.P = tuple(int(p) for p in self._n @ self._lattice.modes)

    @property
    def n(self) -> np.ndarray:
        view = self._n.view()
        view.setflags(write=False)
        return view

    @property
    def lattice(self) -> ModeLattice:
        return self._lattice

    def copy(self) -> "OccupationConfig":
        return OccupationConfig(self._n, self._lattice)

    def apply(self, channel: "CollisionChannel", sign: int) -> "OccupationConfig":
        """Return the configuration after ``n + sign * e``."""
        new = self._n.copy()
        np.add.at(new, list(channel.indices), sign * np.array((1, 1, -1, -1)))
        if np.any(new < 0):
            raise ValueError("collision would produce a negative occupation")
        out = OccupationConfig.__new__(OccupationConfig)
        out._n, out._lattice = new, self._lattice
        out.N, out.E, out.P = self.N, self.E, self.P
        return out

    def caches_consistent(self) -> bool:
        cached = (self.N, self.E, self.P)
        self._recompute()
        return cached == (self.N, self.E, self.P)

    def key(self) -> tuple:
        return tuple(int(v) for v in self._n)

    def __eq__(self, other):
        return isinstance(other, OccupationConfig) and np.array_equal(self._n, other._n)

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"OccupationConfig(n={self.key()}, N={self.N}, E={self.E}, P={self.P})"


@dataclass(frozen=True, order=True)
class CollisionChannel:
    """Mode quadruple ``1 + 2 <-> 3 + 4``; the "+" direction fills modes 1 and 2."""

    indices: tuple

    @property
    def evector(self) -> dict:
        out: dict = defaultdict(int)
        for i in self.indices[:2]:
            out[i] += 1
        for i in self.indices[2:]:
            out[i] -= 1
        return dict(out)


def _canonical(i1, i2, i3, i4):
    p, q = tuple(sorted((i1, i2))), tuple(sorted((i3, i4)))
    return p + q if p <= q else q + p


def enumerate_channels(lattice: ModeLattice, max_channels: int = MAX_CHANNELS) -> list:
    """All distinct pair-exchange channels conserving momentum and energy exactly.

    Pairs are grouped by total (momentum, energy); every two distinct pairs in
    a group form one channel.  Each channel appears once, with its pairs
    sorted, the lexicographically smaller pair first.
    """
    modes = lattice.modes.tolist()
    energies = lattice.energies.tolist()
    groups = defaultdict(list)
    M = len(modes)
    for i in range(M):
        zi, ei = modes[i], energies[i]
        for j in range(i, M):
            zj = modes[j]
            key = (zi[0] + zj[0], zi[1] + zj[1], zi[2] + zj[2], ei + energies[j])
            groups[key].append((i, j))
    count = sum(len(g) * (len(g) - 1) // 2 for g in groups.values())
    if count > max_channels:
        raise CapacityError(f"{count} channels exceed the guard of {max_channels}")
    out = []
    for pairs in groups.values():
        for p, q in itertools.combinations(pairs, 2):
            out.append(CollisionChannel(_canonical(*p, *q)))
    out.sort()
    return out


def brute_force_channels(lattice: ModeLattice) -> set:
    """O(M^4) scan over ordered quadruples; canonical tuples of nontrivial channels."""
    z = lattice.modes
    e = lattice.energies
    M = len(z)
    found = set()
    for i1, i2, i3, i4 in itertools.product(range(M), repeat=4):
        if e[i1] + e[i2] != e[i3] + e[i4]:
            continue
        if np.any(z[i1] + z[i2] != z[i3] + z[i4]):
            continue
        if sorted((i1, i2)) == sorted((i3, i4)):
            continue
        found.add(_canonical(i1, i2, i3, i4))
    return found


def channel_array(channels) -> np.ndarray:
    if len(channels) == 0:
        return np.zeros((0, 4), dtype=np.int64)
    return np.array([c.indices for c in channels], dtype=np.int64)


def evector_matrix(channels, n_modes: int) -> np.ndarray:
    """Integer matrix whose rows are the "+" direction changes of each channel."""
    out = np.zeros((len(channels), n_modes), dtype=np.int64)
    for row, ch in enumerate(channels):
        for i, v in ch.evector.items():
            out[row, i] = v
    return out
