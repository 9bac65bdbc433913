"""Exact stationary distributions on a fixed (N, E, P) shell."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from ..constants import HBAR, KB
from .lattice import CapacityError, ModeLattice, OccupationConfig, channel_array
from .rates import rate_table

MAX_SHELL_STATES = 200_000


class DivergentDistribution(ValueError):
    """Grand canonical occupations would not be normalizable."""


def enumerate_shell(lattice: ModeLattice, N: int, E: int, P, limit: int = MAX_SHELL_STATES):
    """All occupation vectors with the given particle number, energy and momentum."""
    P = np.asarray(P, dtype=np.int64)
    e = lattice.energies.tolist()
    z = lattice.modes
    M = len(e)
    # modes with larger energy first prunes the energy budget early
    order = sorted(range(M), key=lambda i: -e[i])
    out = []
    cur = [0] * M

    def rec(k, n_left, e_left):
        if k == M - 1:
            i = order[k]
            if n_left * e[i] != e_left:
                return
            cur[i] = n_left
            if np.array_equal(np.asarray(cur) @ z, P):
                out.append(tuple(cur))
                if len(out) > limit:
                    raise CapacityError(f"shell has more than {limit} states")
            cur[i] = 0
            return
        i = order[k]
        top = n_left if e[i] == 0 else min(n_left, e_left // e[i])
        for c in range(top + 1):
            cur[i] = c
            rec(k + 1, n_left - c, e_left - c * e[i])
        cur[i] = 0

    if N < 0 or E < 0:
        return np.zeros((0, M), dtype=np.int64)
    rec(0, N, E)
    return np.array(out, dtype=np.int64).reshape(-1, M)


@dataclass
class StationaryDistribution:
    """Stationary probabilities on a shell, normalized within each component."""

    states: np.ndarray
    probs: np.ndarray
    labels: np.ndarray
    generator: sparse.csr_matrix

    @property
    def n_components(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def index_of(self, config) -> int:
        n = config.n if isinstance(config, OccupationConfig) else np.asarray(config)
        hits = np.flatnonzero(np.all(self.states == n, axis=1))
        if len(hits) == 0:
            raise KeyError("configuration not in shell")
        return int(hits[0])

    def component(self, label: int):
        mask = self.labels == label
        return self.states[mask], self.probs[mask]

    def component_of(self, config):
        return self.component(int(self.labels[self.index_of(config)]))

    def uniform_deviation(self) -> float:
        """Largest deviation from 1/size over all components."""
        dev = 0.0
        for lab in range(self.n_components):
            p = self.probs[self.labels == lab]
            dev = max(dev, float(np.max(np.abs(p - 1.0 / len(p)))))
        return dev

    def stationarity_residual(self) -> float:
        return float(np.max(np.abs(self.generator.T @ self.probs)))


def generator_matrix(states: np.ndarray, chan: np.ndarray, gamma: float = 1.0) -> sparse.csr_matrix:
    """Row-convention generator ``Q[i, j]`` = rate i -> j, rows summing to zero."""
    S = len(states)
    index = {tuple(s): k for k, s in enumerate(states.tolist())}
    plus, minus = rate_table(states, chan, gamma)
    ev = np.zeros((len(chan), states.shape[1]), dtype=np.int64)
    for c, (i1, i2, i3, i4) in enumerate(chan.tolist()):
        ev[c, i1] += 1
        ev[c, i2] += 1
        ev[c, i3] -= 1
        ev[c, i4] -= 1
    rows, cols, vals = [], [], []
    for table, sign in ((plus, 1), (minus, -1)):
        si, ci = np.nonzero(table > 0)
        targets = states[si] + sign * ev[ci]
        for s, c, tgt in zip(si.tolist(), ci.tolist(), targets.tolist()):
            j = index.get(tuple(tgt))
            if j is None:
                raise RuntimeError("collision left the shell; conservation is broken")
            rows.append(s)
            cols.append(j)
            vals.append(table[s, c])
    Q = sparse.coo_matrix((vals, (rows, cols)), shape=(S, S)).tocsr()
    Q = Q - sparse.diags(np.asarray(Q.sum(axis=1)).ravel())
    return Q.tocsr()


def _null_vector(Qc: sparse.csr_matrix) -> np.ndarray:
    m = Qc.shape[0]
    if m == 1:
        return np.ones(1)
    A = Qc.T.tolil()
    A[m - 1, :] = np.ones(m)
    b = np.zeros(m)
    b[-1] = 1.0
    p = spsolve(A.tocsc(), b)
    return np.atleast_1d(p)


def stationary_exact(lattice: ModeLattice, N: int, E: int, P, channels,
                     gamma: float = 1.0, limit: int = MAX_SHELL_STATES) -> StationaryDistribution:
    """Solve the generator's null space on each connected component of the shell."""
    states = enumerate_shell(lattice, N, E, P, limit)
    if len(states) == 0:
        raise ValueError(f"no configurations with N={N}, E={E}, P={tuple(P)}")
    chan = channel_array(channels) if not isinstance(channels, np.ndarray) else channels
    Q = generator_matrix(states, chan, gamma)
    adj = (Q - sparse.diags(Q.diagonal())) != 0
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    probs = np.empty(len(states))
    for lab in range(n_comp):
        idx = np.flatnonzero(labels == lab)
        probs[idx] = _null_vector(Q[idx][:, idx])
    return StationaryDistribution(states, probs, labels, Q)


def detailed_balance_residual(dist: StationaryDistribution, channels, gamma: float = 1.0) -> float:
    """Max over edges of ``|t+(n-e) w(n-e) - t-(n) w(n)|``."""
    chan = channel_array(channels) if not isinstance(channels, np.ndarray) else channels
    index = {tuple(s): k for k, s in enumerate(dist.states.tolist())}
    plus, minus = rate_table(dist.states, chan, gamma)
    worst = 0.0
    for s, c in zip(*np.nonzero(minus > 0)):
        i1, i2, i3, i4 = chan[c]
        src = dist.states[s].copy()
        np.add.at(src, [i1, i2], -1)
        np.add.at(src, [i3, i4], 1)
        j = index[tuple(src.tolist())]
        if dist.labels[j] != dist.labels[s]:
            continue
        flux = plus[j, c] * dist.probs[j] - minus[s, c] * dist.probs[s]
        worst = max(worst, abs(flux))
    return worst


def _drift_energy(lattice: ModeLattice, u_drift):
    u = np.zeros(3) if u_drift is None else np.asarray(u_drift, dtype=float)
    return HBAR * lattice.wavevectors @ u


def grand_canonical_normalizable(lattice: ModeLattice, mu: float, u_drift=None) -> bool:
    return bool(mu < np.min(lattice.hbar_omega - _drift_energy(lattice, u_drift)))


def grand_canonical_mode_factors(lattice: ModeLattice, T: float, mu: float, u_drift=None):
    """Per-mode Boltzmann factors ``exp(-(hbar w_i - mu - hbar K_i.u)/kT)``."""
    x = lattice.hbar_omega - mu - _drift_energy(lattice, u_drift)
    return np.exp(-x / (KB * T))


def grand_canonical_weight(config: OccupationConfig, T: float, mu: float, u_drift=None,
                           check: bool = True) -> float:
    """Unnormalized weight ``exp(-(E - mu N - u.P)/kT)`` of a configuration.

    With ``check`` set, raises :class:`DivergentDistribution` when the
    chemical potential makes the grand canonical sum diverge.
    """
    lat = config.lattice
    if check and not grand_canonical_normalizable(lat, mu, u_drift):
        raise DivergentDistribution(
            f"mu={mu:.3e} J is not below min(hbar w - hbar K.u); occupations diverge"
        )
    u = np.zeros(3) if u_drift is None else np.asarray(u_drift, dtype=float)
    E = config.E * lat.epsilon0
    P = HBAR * lat.k_unit * np.asarray(config.P, dtype=float)
    return float(np.exp(-(E - mu * config.N - u @ P) / (KB * T)))


def mean_occupation_rhs_exact(states, probs, mode: int, channels, gamma: float = 1.0) -> float:
    """Exact ``d<n_a>/dt`` under a distribution over configurations.

    Sums ``nu_a(c) (<t+_c> - <t-_c>)`` over channels, where ``nu_a(c)`` is the
    change of ``n_a`` in the "+" direction.  This is the gain-minus-loss form
    with every correlator taken from the distribution, not factorized.
    """
    chan = channel_array(channels) if not isinstance(channels, np.ndarray) else channels
    states = np.atleast_2d(np.asarray(states, dtype=np.int64))
    probs = np.asarray(probs, dtype=float).ravel()
    plus, minus = rate_table(states, chan, gamma)
    nu = ((chan[:, 0] == mode).astype(np.int64) + (chan[:, 1] == mode)
          - (chan[:, 2] == mode) - (chan[:, 3] == mode))
    mean_net = probs @ (plus - minus)
    return float(mean_net @ nu)
