"""Trajectory drivers for the stochastic collision dynamics."""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import gillespie as _g
from .lattice import (
    CollisionChannel,
    ModeLattice,
    OccupationConfig,
    channel_array,
    enumerate_channels,
    evector_matrix,
)
from .rates import rate_table

_BLOCK = 1 << 16


class AbsorbingState(RuntimeError):
    """No collision can fire from the current configuration."""


def trajectory_rng(seed: int, index: int = 0) -> np.random.Generator:
    """PCG64 stream for trajectory ``index`` of a run seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


@dataclass(frozen=True, eq=False)
class ChannelTable:
    """Immutable channel data shared by all trajectories on one lattice."""

    lattice: ModeLattice
    channels: tuple
    chan: np.ndarray = field(repr=False)
    ptr: np.ndarray = field(repr=False)
    inc: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, lattice: ModeLattice, channels=None) -> "ChannelTable":
        if channels is None:
            channels = enumerate_channels(lattice)
        channels = tuple(channels)
        chan = channel_array(channels)
        ptr, inc = _g.incidence(chan, len(lattice))
        for a in (chan, ptr, inc):
            a.setflags(write=False)
        return cls(lattice, channels, chan, ptr, inc)

    def __len__(self):
        return len(self.channels)

    @cached_property
    def deltas(self) -> np.ndarray:
        """Dense event increments, shape ``(2C, M)``: row ``2c`` is ``+e_c``, row ``2c+1`` is ``-e_c``."""
        ev = evector_matrix(self.channels, len(self.lattice))
        out = np.empty((2 * len(self.channels), len(self.lattice)), dtype=np.int64)
        out[0::2] = ev
        out[1::2] = -ev
        out.setflags(write=False)
        return out


def _as_table(lattice, channels) -> ChannelTable:
    if isinstance(channels, ChannelTable):
        return channels
    return ChannelTable.build(lattice, channels)


class Trajectory:
    """Mutable state of one stochastic trajectory."""

    def __init__(self, table: ChannelTable, initial: OccupationConfig, gamma: float,
                 rng: np.random.Generator, t0: float = 0.0):
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        self.table = table
        self.gamma = float(gamma)
        self.rng = rng
        self.t = float(t0)
        self.n = np.array(initial.n, dtype=np.int64)
        self.rates, self.tree, self.total = _g.build_rates(self.n, table.chan)
        self.events = 0
        self._u = np.empty(0)
        self._pos = 0

    def _uniforms(self):
        if self._pos >= len(self._u):
            self._u = self.rng.random(2 * _BLOCK)
            self._pos = 0
        return self._u[self._pos:]

    def _run(self, t_stop, max_events, out_dt, out_code, record):
        done = 0
        while True:
            u = self._uniforms()
            ev, used, self.t, self.total, status = _g.advance(
                self.n, self.table.chan, self.table.ptr, self.table.inc,
                self.rates, self.tree, self.total, self.gamma, u, self.t, t_stop,
                max_events - done, out_dt[done:], out_code[done:], record,
            )
            self._pos += 2 * used
            done += ev
            self.events += ev
            if status != _g.NEED_UNIFORMS:
                return done, status

    def advance_to(self, t_stop: float) -> int:
        """Evolve to ``t_stop``; returns the kernel status code."""
        empty_f = np.empty(0)
        empty_i = np.empty(0, dtype=np.int64)
        _, status = self._run(t_stop, np.iinfo(np.int64).max, empty_f, empty_i, False)
        return status

    def run_events(self, k: int):
        """Fire up to ``k`` events; returns waiting times, event codes and status."""
        out_dt = np.empty(k)
        out_code = np.empty(k, dtype=np.int64)
        done, status = self._run(np.inf, k, out_dt, out_code, True)
        return out_dt[:done], out_code[:done], status

    def config(self) -> OccupationConfig:
        return OccupationConfig(self.n, self.table.lattice)


def kmc_step(config: OccupationConfig, channels, gamma: float, rng: np.random.Generator):
    """Single direct-method event computed from scratch.

    Returns ``(waiting_time, (channel, direction), new_config)`` where
    ``direction`` is +1 for ``n -> n + e`` and -1 for ``n -> n - e``.
    Draws the same two uniforms, in the same order, as the compiled kernel.
    """
    chan = channel_array(channels) if not isinstance(channels, np.ndarray) else channels
    plus, minus = rate_table(config.n, chan, 1.0)
    rates = np.empty(2 * chan.shape[0])
    rates[0::2] = plus[0]
    rates[1::2] = minus[0]
    total = rates.sum()
    if total <= 0:
        raise AbsorbingState("total rate is zero")
    u1, u2 = rng.random(2)
    dt = -np.log1p(-u1) / (gamma * total)
    code = int(np.searchsorted(np.cumsum(rates), u2 * total, side="right"))
    c, sign = code // 2, (1 if code % 2 == 0 else -1)
    channel = CollisionChannel(tuple(int(i) for i in chan[c]))
    return dt, (channel, sign), config.apply(channel, sign)


@dataclass
class KmcRun:
    seed: int
    gamma: float
    t_end: float
    sample_times: np.ndarray
    occupations: np.ndarray
    energies: np.ndarray
    modes: np.ndarray
    zero_index: int | None
    n_events: int
    status: str = "complete"
    absorbed_at: float | None = None
    trajectory_index: int = 0

    @property
    def N(self):
        return self.occupations.sum(axis=1)

    @property
    def E(self):
        return self.occupations @ self.energies

    @property
    def P(self):
        return self.occupations @ self.modes

    @property
    def n0(self):
        if self.zero_index is None:
            return np.zeros(len(self.sample_times), dtype=np.int64)
        return self.occupations[:, self.zero_index]

    @property
    def truncated(self) -> bool:
        return self.status != "complete"

    def rows(self, per_mode: bool = True):
        """Wide rows: time, N, E, P_x, P_y, P_z, n_0 and optionally n_<i>."""
        P = self.P
        for k, t in enumerate(self.sample_times):
            row = {
                "time": float(t),
                "N": int(self.N[k]),
                "E": int(self.E[k]),
                "P_x": int(P[k, 0]),
                "P_y": int(P[k, 1]),
                "P_z": int(P[k, 2]),
                "n_0": int(self.n0[k]),
            }
            if per_mode:
                for i, v in enumerate(self.occupations[k]):
                    row[f"n_{i}"] = int(v)
            yield row

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.sample_times, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(self.occupations, dtype=np.int64).tobytes())
        h.update(self.status.encode())
        return h.hexdigest()


def simulate(initial: OccupationConfig, lattice: ModeLattice, gamma: float, t_end: float,
             seed: int, sample_times=None, channels=None, trajectory_index: int = 0) -> KmcRun:
    """Run one trajectory from ``initial`` and record it at ``sample_times``.

    ``sample_times`` defaults to ``[0, t_end]``.  A trajectory that reaches a
    configuration with zero total rate keeps that configuration for the
    remaining samples and is flagged ``status="absorbed"``.
    """
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    table = _as_table(lattice, channels)
    if sample_times is None:
        sample_times = [0.0, t_end] if t_end > 0 else [0.0]
    sample_times = np.asarray(sample_times, dtype=float)
    if np.any(np.diff(sample_times) < 0) or np.any(sample_times < 0) or np.any(sample_times > t_end):
        raise ValueError("sample_times must be sorted and lie in [0, t_end]")
    traj = Trajectory(table, initial, gamma, trajectory_rng(seed, trajectory_index))
    occ = np.empty((len(sample_times), len(lattice)), dtype=np.int64)
    status, absorbed_at = "complete", None
    for k, ts in enumerate(sample_times):
        if absorbed_at is None:
            code = traj.advance_to(ts)
            if code == _g.ABSORBED:
                status, absorbed_at = "absorbed", traj.t
        occ[k] = traj.n
    return KmcRun(
        seed=seed, gamma=gamma, t_end=t_end, sample_times=sample_times, occupations=occ,
        energies=np.asarray(lattice.energies), modes=np.asarray(lattice.modes),
        zero_index=lattice.zero_mode(), n_events=traj.events, status=status,
        absorbed_at=absorbed_at, trajectory_index=trajectory_index,
    )


def ensemble(initial: OccupationConfig, lattice: ModeLattice, gamma: float, t_end: float,
             seed: int, n_traj: int, sample_times=None, channels=None, threads: int = 1):
    """Independent trajectories on streams ``(seed, 0..n_traj-1)``; list of runs."""
    table = _as_table(lattice, channels)

    def one(i):
        return simulate(initial, lattice, gamma, t_end, seed, sample_times, table, i)

    if threads <= 1:
        return [one(i) for i in range(n_traj)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(n_traj)))


def event_states(initial: OccupationConfig, table: ChannelTable, codes: np.ndarray) -> np.ndarray:
    """Configurations after each recorded event, shape ``(len(codes), M)``."""
    codes = np.asarray(codes, dtype=np.int64)
    sign = np.where(codes % 2 == 0, 1, -1)
    quads = table.chan[codes // 2]
    steps = np.zeros((len(codes), len(table.lattice)), dtype=np.int64)
    rows = np.arange(len(codes))
    for k, s in ((0, 1), (1, 1), (2, -1), (3, -1)):
        np.add.at(steps, (rows, quads[:, k]), s * sign)
    return np.asarray(initial.n, dtype=np.int64) + np.cumsum(steps, axis=0)


def occupation_histogram(initial: OccupationConfig, lattice: ModeLattice, gamma: float,
                         n_samples: int, seed: int, burn_in: int = 10_000, channels=None):
    """Time-weighted empirical distribution over visited configurations.

    Runs ``burn_in + n_samples + 1`` events; each post-burn-in configuration is
    weighted by its holding time.  Returns ``(states, weights)`` with weights
    summing to one.
    """
    table = _as_table(lattice, channels)
    traj = Trajectory(table, initial, gamma, trajectory_rng(seed))
    dts, codes, status = traj.run_events(burn_in + n_samples + 1)
    if status == _g.ABSORBED:
        raise AbsorbingState("trajectory was absorbed before collecting samples")
    states = event_states(initial, table, codes)
    held = states[burn_in:-1]
    weights = dts[burn_in + 1:]
    uniq, inverse = _unique_rows(held, initial.N)
    w = np.bincount(inverse, weights=weights, minlength=len(uniq))
    return uniq, w / w.sum()


def _unique_rows(states: np.ndarray, n_total: int):
    M = states.shape[1]
    radix = n_total + 1
    if M * np.log2(max(radix, 2)) < 62:
        # every occupation is at most N, so a mixed-radix code is injective
        weights = radix ** np.arange(M, dtype=np.int64)
        codes, first, inverse = np.unique(states @ weights, return_index=True, return_inverse=True)
        return states[first], inverse.ravel()
    uniq, inverse = np.unique(states, axis=0, return_inverse=True)
    return uniq, inverse.ravel()
