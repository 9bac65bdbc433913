"""Factorized mean-occupation kinetics on the mode lattice.

The right-hand side reuses the stochastic model's channel list, so the
mean-field and master-equation dynamics share one conservation structure.
For channel ``c`` the scalar ``(n1+1)(n2+1) n3 n4 - n1 n2 (n3+1)(n4+1)``
(times ``gamma``) adds to modes 1 and 2 and subtracts from modes 3 and 4;
particle number and energy are therefore exact zeros of the vector field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .constants import KB
from .kmc.lattice import ModeLattice, channel_array
from .kmc.simulate import ChannelTable

NEGATIVITY_TOL = 1e-9
DRIFT_PER_TIME = 1e-8


class DivergentOccupation(ValueError):
    """Chemical potential at or above the lowest mode energy."""


class IntegrationError(RuntimeError):
    """Step size fell below the underflow floor."""


@dataclass(frozen=True)
class BathSpec:
    T: float
    mu: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")

    @property
    def kT(self) -> float:
        return KB * self.T


def be_occupation(x):
    """Bose-Einstein occupation for reduced energy ``x = (hbar w - mu)/kT > 0``."""
    with np.errstate(over="ignore"):  # exp overflow means an empty mode
        return 1.0 / np.expm1(x)


def be_field(lattice: ModeLattice, bath: BathSpec) -> np.ndarray:
    """Occupations ``[exp((hbar w - mu)/kT) - 1]^-1`` on every mode."""
    hw = lattice.hbar_omega
    if bath.mu >= hw.min():
        raise DivergentOccupation(
            f"mu={bath.mu:.3e} J is not below the lowest mode energy {hw.min():.3e} J"
        )
    return be_occupation((hw - bath.mu) / bath.kT)


def _chan(channels):
    if isinstance(channels, ChannelTable):
        return channels.chan
    if isinstance(channels, np.ndarray):
        return channels
    return channel_array(channels)


def uu_rhs(n, channels, gamma: float = 1.0) -> np.ndarray:
    """Per-mode rate of change of the mean occupations."""
    n = np.asarray(n, dtype=float)
    chan = _chan(channels)
    if chan.shape[0] == 0:
        return np.zeros_like(n)
    n1, n2, n3, n4 = (n[chan[:, k]] for k in range(4))
    net = gamma * ((n1 + 1.0) * (n2 + 1.0) * n3 * n4 - n1 * n2 * (n3 + 1.0) * (n4 + 1.0))
    M = len(n)
    out = np.bincount(chan[:, 0], net, M) + np.bincount(chan[:, 1], net, M)
    out -= np.bincount(chan[:, 2], net, M) + np.bincount(chan[:, 3], net, M)
    return out


def _rate_scale(n, chan, gamma):
    # crude per-mode stiffness bound used to pick the default step
    a = np.abs(n) + 1.0
    prod = a[chan[:, 0]] * a[chan[:, 1]] * a[chan[:, 2]] * a[chan[:, 3]]
    M = len(n)
    s = np.zeros(M)
    for k in range(4):
        s += np.bincount(chan[:, k], prod / a[chan[:, k]], M)
    return gamma * 2.0 * s.max(initial=0.0)


@dataclass
class UUTrajectory:
    times: np.ndarray
    fields: np.ndarray
    N: np.ndarray
    E: np.ndarray
    steps: int
    halvings: int
    dt_min: float
    status: str = "complete"
    extra: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.fields[-1]

    def relative_drift(self):
        dN = np.max(np.abs(self.N - self.N[0])) / max(abs(self.N[0]), 1e-300)
        dE = np.max(np.abs(self.E - self.E[0])) / max(abs(self.E[0]), 1e-300)
        return float(dN), float(dE)


def _rk4(n, dt, chan, gamma):
    k1 = uu_rhs(n, chan, gamma)
    k2 = uu_rhs(n + 0.5 * dt * k1, chan, gamma)
    k3 = uu_rhs(n + 0.5 * dt * k2, chan, gamma)
    k4 = uu_rhs(n + dt * k3, chan, gamma)
    return n + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_uu(field0, table: ChannelTable, t_end: float, gamma: float = 1.0,
                 dt: float | None = None, n_samples: int = 101) -> UUTrajectory:
    """Classic RK4 with step halving driven by conservation drift and positivity.

    A step is rejected and halved when the relative change of particle number
    or energy exceeds ``1e-8`` per unit time, or when any occupation drops
    below ``-1e-9``.  After an accepted step the step size recovers towards
    its initial value.  Raises :class:`IntegrationError` if the step falls
    below ``1e-12 * t_end``.
    """
    n = np.array(field0, dtype=float)
    if np.any(n < -NEGATIVITY_TOL):
        raise ValueError("initial field has negative occupations")
    chan = _chan(table)
    energies = np.asarray(table.lattice.energies, dtype=float)
    dt0 = dt if dt is not None else 0.2 / max(_rate_scale(n, chan, gamma), 1e-300)
    dt0 = min(dt0, t_end) if t_end > 0 else dt0
    sample_times = np.linspace(0.0, t_end, n_samples) if t_end > 0 else np.zeros(1)
    fields = np.empty((len(sample_times), len(n)))
    fields[0] = n
    N0, E0 = n.sum(), n @ energies
    t, h, steps, halvings, h_min = 0.0, dt0, 0, 0, dt0
    floor = 1e-12 * t_end
    for k in range(1, len(sample_times)):
        target = sample_times[k]
        while t < target:
            step = min(h, target - t)
            trial = _rk4(n, step, chan, gamma)
            dN = abs(trial.sum() - n.sum()) / max(abs(N0), 1e-300)
            dE = abs(trial @ energies - n @ energies) / max(abs(E0), 1e-300)
            bad = (max(dN, dE) > DRIFT_PER_TIME * step
                   or np.any(trial < -NEGATIVITY_TOL) or not np.all(np.isfinite(trial)))
            if bad:
                h = 0.5 * step
                halvings += 1
                h_min = min(h_min, h)
                if h < floor:
                    raise IntegrationError(
                        f"step underflow at t={t:.6g}: dt={h:.3e} < {floor:.3e}"
                    )
                continue
            n = trial
            t += step
            steps += 1
            h = min(2.0 * h, dt0)
        fields[k] = n
    Ns = fields.sum(axis=1)
    Es = fields @ energies
    return UUTrajectory(sample_times, fields, Ns, Es, steps, halvings, h_min)


def _reduced_moments(energies, beta, alpha):
    with np.errstate(over="ignore"):
        occ = 1.0 / np.expm1(beta * energies + alpha)
    return occ.sum(), occ @ energies


def fit_be_parameters(energies, N: float, E: float, tol: float = 1e-13):
    """Reduced ``(beta, alpha)`` with ``n_i = 1/(exp(beta e_i + alpha) - 1)`` matching (N, E).

    ``beta`` is the inverse temperature in units of the energy scale of
    ``energies`` and ``alpha = -mu/kT``.  Nested bisection: for each trial
    ``beta`` the occupation sum is monotone in ``alpha``; the mean energy per
    particle is then monotone in ``beta``.
    """
    e = np.asarray(energies, dtype=float)
    e_min = e.min()
    if not N > 0:
        raise ValueError("N must be positive")
    target = E / N
    if not (e_min < target < e.mean()):
        raise ValueError(
            f"mean energy {target:.6g} outside the thermal range ({e_min:.6g}, {e.mean():.6g})"
        )

    def alpha_for(beta):
        # alpha = -beta e_min + exp(s); N decreases monotonically in s
        def f(s):
            return _reduced_moments(e, beta, -beta * e_min + math.exp(s))[0] - N
        lo, hi = -60.0, 10.0
        while f(hi) > 0:
            hi += 10.0
        return -beta * e_min + math.exp(bisect(f, lo, hi, xtol=1e-14, maxiter=500))

    def g(log_beta):
        beta = math.exp(log_beta)
        Nm, Em = _reduced_moments(e, beta, alpha_for(beta))
        return Em / Nm - target

    lb = bisect(g, -20.0, 10.0, xtol=tol, maxiter=500)
    beta = math.exp(lb)
    return beta, alpha_for(beta)


def fit_be_bath(lattice: ModeLattice, N: float, E_reduced: float) -> BathSpec:
    """Bath whose Bose-Einstein field has total number ``N`` and energy ``E_reduced`` (units epsilon0)."""
    beta, alpha = fit_be_parameters(lattice.energies, N, E_reduced)
    kT = lattice.epsilon0 / beta
    return BathSpec(T=kT / KB, mu=-alpha * kT)
