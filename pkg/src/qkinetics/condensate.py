"""Condensate-band moment dynamics against a thermalized bath.

The non-condensate modes are held at a Bose-Einstein distribution with
temperature ``T`` and chemical potential ``mu <= 0``.  Only the first two
moments of the condensate field are evolved: the mean amplitude ``phi`` and
the mean density ``rho_bar``, both spatially homogeneous.  Energy-conserving
delta functions are handled two ways: on the mode lattice by an energy window
``eta`` (integer lattice energies make any window below one quantum exact),
and in the continuum by the analytic reduction ``K1 . K2 = 0`` with Jacobian
``m / (hbar K1 K2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .basis import QuadratureError, g4_moment, g_kernel, g_zero
from .constants import HBAR, contact_coupling
from .kmc.lattice import ModeLattice
from .meanfield import BathSpec, be_occupation

RHO_CEILING_FACTOR = 1e6


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class BathKernelSample:
    x: np.ndarray
    g_plus: float
    g_minus: float
    T: float
    mu: float
    triads: int
    eta: float
    advisory: str | None = None

    @property
    def kms_residual(self) -> float:
        """Relative deviation of ``g_plus / g_minus`` from ``exp(mu/kT)``."""
        if self.g_minus == 0:
            return 0.0
        ratio = math.exp(self.mu / BathSpec(self.T, self.mu).kT)
        return abs(self.g_plus / self.g_minus - ratio) / ratio


@dataclass
class CondensateState:
    phi: complex
    rho_bar: float

    def __post_init__(self):
        if self.rho_bar < 0:
            raise ValueError("rho_bar must be nonnegative")
        self.phi = complex(self.phi)


def _check_bath(bath: BathSpec):
    if bath.mu > 0:
        raise DomainError(f"mu must be <= 0 for the condensate bath, got {bath.mu}")


def bath_occupations(lattice: ModeLattice, bath: BathSpec) -> np.ndarray:
    """Bose-Einstein occupations of the ``K != 0`` modes (zero on the condensate mode)."""
    _check_bath(bath)
    hw = lattice.hbar_omega
    out = np.zeros(len(lattice))
    nz = lattice.energies > 0
    out[nz] = be_occupation((hw[nz] - bath.mu) / bath.kT)
    return out


def triads(lattice: ModeLattice, eta: float | None = None):
    """Ordered index triples ``(i, j, k)`` of nonzero modes with ``K_k = K_i + K_j``.

    Only triples with ``|hbar(w_i + w_j - w_k)| <= eta`` are kept; ``eta``
    defaults to half the lattice energy quantum.
    """
    if eta is None:
        eta = 0.5 * lattice.epsilon0
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    lookup = {tuple(z): i for i, z in enumerate(lattice.modes.tolist())}
    e = lattice.energies
    nz = np.flatnonzero(e > 0)
    out = []
    for i in nz.tolist():
        zi = lattice.modes[i]
        for j in nz.tolist():
            k = lookup.get(tuple((zi + lattice.modes[j]).tolist()))
            if k is None or e[k] == 0:
                continue
            if abs(int(e[i]) + int(e[j]) - int(e[k])) * lattice.epsilon0 <= eta:
                out.append((i, j, k))
    return np.array(out, dtype=np.int64).reshape(-1, 3), eta


def triad_sums(lattice: ModeLattice, bath: BathSpec, eta: float | None = None):
    """Return ``(S_plus, S_minus, count, eta)`` for the bath feeding/loss sums."""
    tri, eta = triads(lattice, eta)
    n = bath_occupations(lattice, bath)
    if len(tri) == 0:
        return 0.0, 0.0, 0, eta
    n1, n2, n3 = n[tri[:, 0]], n[tri[:, 1]], n[tri[:, 2]]
    s_plus = float(np.sum(n1 * n2 * (n3 + 1.0)))
    s_minus = float(np.sum((n1 + 1.0) * (n2 + 1.0) * n3))
    return s_plus, s_minus, len(tri), eta


def bath_kernels(x, lattice: ModeLattice, bath: BathSpec, u: float,
                 eta: float | None = None) -> BathKernelSample:
    """Feeding and loss kernels ``G(+)``, ``G(-)`` at displacement ``x``.

    With ``K3 = K1 + K2`` enforced on the lattice the plane-wave phase is
    identically one, so both kernels are ``(pi u^2/hbar^2) g(x)^3`` times
    the triad sums.
    """
    x = np.asarray(x, dtype=float)
    s_plus, s_minus, count, eta = triad_sums(lattice, bath, eta)
    pref = math.pi * u**2 / HBAR**2 * float(g_kernel(x, lattice.delta)) ** 3
    advisory = None if count else "no triads inside the energy window; kernels are zero"
    return BathKernelSample(x, pref * s_plus, pref * s_minus, bath.T, bath.mu, count, eta, advisory)


def kernel_moment(lattice: ModeLattice, bath: BathSpec, u: float, eta: float | None = None) -> float:
    """``int d^3x G(+)(x) g(x)``, the constant driving the density equation."""
    s_plus, _, _, _ = triad_sums(lattice, bath, eta)
    return math.pi * u**2 / HBAR**2 * s_plus * g4_moment(lattice.delta)


# -- continuum gain/loss ------------------------------------------------------

def continuum_prefactor(kT: float, m: float, u: float) -> float:
    """``(u^2 / 2 hbar^2 pi^5) * 8 pi^2 (m/hbar) (m kT/hbar^2)^2`` in 1/s.

    Converts the reduced double integral over ``x_i = hbar w_i / kT`` into the
    six-dimensional momentum integral with its energy delta resolved.
    """
    return u**2 / (2.0 * HBAR**2 * math.pi**5) * 8.0 * math.pi**2 * (m / HBAR) * (m * kT / HBAR**2) ** 2


def _double_integral(f, upper=80.0, rtol=1e-8):
    val, err = integrate.dblquad(f, 0.0, upper, 0.0, upper, epsabs=0.0, epsrel=rtol)
    if not np.isfinite(val) or err > 1e3 * rtol * max(abs(val), 1e-300):
        raise QuadratureError("radial double integral did not converge", err)
    return val, err


def thermal_triad_integral(mu_over_kT: float) -> float:
    """``int_0^inf int_0^inf n(x1) n(x2) (1 + n(x1 + x2)) dx1 dx2`` for BE occupations."""
    if mu_over_kT >= 0:
        raise DomainError("the thermal triad integral diverges for mu >= 0")

    def n(x):
        return be_occupation(x - mu_over_kT)

    val, _ = _double_integral(lambda x2, x1: n(x1) * n(x2) * (1.0 + n(x1 + x2)))
    return val


def gain_minus_loss_rate(bath: BathSpec, a: float, m: float) -> float:
    """Net amplitude growth rate of a homogeneous condensate in a thermal bath (1/s).

    Nonpositive for ``mu < 0`` and exactly zero at ``mu = 0``.
    """
    _check_bath(bath)
    if bath.mu == 0:
        return 0.0
    u = contact_coupling(a, m)
    r = bath.mu / bath.kT
    return math.expm1(r) * continuum_prefactor(bath.kT, m, u) * thermal_triad_integral(r)


# -- moment equations ---------------------------------------------------------

@dataclass
class DensitySeries:
    times: np.ndarray
    rho: np.ndarray
    stationary: float | None
    rate: float
    drive: float
    status: str = "complete"
    ceiling: float | None = None


def stationary_rho(bath: BathSpec, delta: float) -> float:
    """Stationary density ``g(0) / (1 - exp(mu/kT))`` for ``mu < 0``."""
    if bath.mu >= 0:
        raise DomainError("no stationary density for mu >= 0")
    return g_zero(delta) / -math.expm1(bath.mu / bath.kT)


def _rho_closed_form(rho0, drive, decay, stationary, t):
    if decay == 0:
        return rho0 + drive * t
    return stationary + (rho0 - stationary) * np.exp(-decay * t)


def _rho_integral(rho0, drive, decay, stationary, t):
    # int_0^t rho(s) ds
    if decay == 0:
        return rho0 * t + 0.5 * drive * t * t
    return stationary * t + (rho0 - stationary) * (-np.expm1(-decay * t)) / decay


def integrate_rho(state0: CondensateState, bath: BathSpec, lattice: ModeLattice, u: float,
                  t_end: float | None = None, n_samples: int = 201, eta: float | None = None,
                  ceiling_factor: float = RHO_CEILING_FACTOR) -> DensitySeries:
    """Mean condensate density under the shape-ansatz closure.

    The vector field ``2 C [(exp(mu/kT) - 1) rho / g(0) + 1]`` is affine in
    ``rho`` with ``C = int G(+) g``, so it is propagated with its exact
    solution.  For ``mu < 0`` ``t_end`` defaults to 40 relaxation times.  At
    ``mu = 0`` the density grows linearly without bound; the series stops at
    the first sample above ``ceiling_factor * g(0)`` with status
    ``"unbounded_growth"``.
    """
    _check_bath(bath)
    C = kernel_moment(lattice, bath, u, eta)
    g0 = g_zero(lattice.delta)
    drive = 2.0 * C
    decay = -2.0 * C * math.expm1(bath.mu / bath.kT) / g0
    stationary = g0 / -math.expm1(bath.mu / bath.kT) if bath.mu < 0 else None
    ceiling = ceiling_factor * g0
    if t_end is None:
        if decay > 0:
            t_end = 40.0 / decay
        elif drive > 0:
            t_end = 2.0 * (ceiling - state0.rho_bar) / drive
        else:
            t_end = 1.0
    times = np.linspace(0.0, t_end, n_samples)
    rho = _rho_closed_form(state0.rho_bar, drive, decay, stationary, times)
    status = "complete"
    if bath.mu == 0:
        over = np.flatnonzero(rho > ceiling)
        if len(over):
            cut = over[0] + 1
            times, rho = times[:cut], rho[:cut]
            status = "unbounded_growth"
    return DensitySeries(times, rho, stationary, decay, drive, status, ceiling)


@dataclass
class AmplitudeSeries:
    times: np.ndarray
    phi: np.ndarray
    rho: np.ndarray
    growth_rate: float
    rotation_rate: float
    extra: dict = field(default_factory=dict)

    @property
    def modulus(self):
        return np.abs(self.phi)


def integrate_phi(state0: CondensateState, bath: BathSpec, lattice: ModeLattice, a: float,
                  t_end: float | None = None, n_samples: int = 201, eta: float | None = None,
                  gain_loss: bool = True, rotation: bool = True) -> AmplitudeSeries:
    """Mean condensate amplitude under the Gaussian closure.

    ``d phi/dt = -i [u g(0) sum n_K + 2 u rho(t)] phi / hbar + Gamma phi``
    with ``rho(t)`` the co-evolving density and ``Gamma`` the continuum
    gain-minus-loss rate.  The homogeneous nonlinear term integrates the
    kernel ``g`` over all space, which gives exactly one.  The equation is
    linear in ``phi`` with a scalar generator, so ``phi(t)`` is evaluated
    from its exact exponential solution.
    """
    _check_bath(bath)
    u = contact_coupling(a, lattice.mass)
    gamma = gain_minus_loss_rate(bath, a, lattice.mass) if gain_loss else 0.0
    n_bath = bath_occupations(lattice, bath)
    omega_th = u * g_zero(lattice.delta) * n_bath.sum() / HBAR if rotation else 0.0

    C = kernel_moment(lattice, bath, u, eta)
    g0 = g_zero(lattice.delta)
    drive = 2.0 * C
    decay = -2.0 * C * math.expm1(bath.mu / bath.kT) / g0
    stationary = g0 / -math.expm1(bath.mu / bath.kT) if bath.mu < 0 else None
    if t_end is None:
        t_end = 30.0 / abs(gamma) if gamma != 0 else 1.0
    times = np.linspace(0.0, t_end, n_samples)
    rho = _rho_closed_form(state0.rho_bar, drive, decay, stationary, times)
    phase = omega_th * times
    if rotation:
        phase = phase + 2.0 * u / HBAR * _rho_integral(state0.rho_bar, drive, decay, stationary, times)
    phi = state0.phi * np.exp(gamma * times) * np.exp(-1j * phase)
    return AmplitudeSeries(times, phi, rho, gamma, omega_th)


# -- gain criterion for non-equilibrium baths ----------------------------------

@dataclass
class ConvexityReport:
    pairs: np.ndarray
    margins: np.ndarray
    verdict: str

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)


def convexity_gain_check(F, omega, atol: float = 1e-12) -> ConvexityReport:
    """Sign of ``F(w1) + F(w2) - F(w1 + w2)`` over grid pairs with ``w1 + w2`` on the grid.

    ``F`` is the log-ratio ``log(n/(1+n))`` tabulated on ``omega`` (or a
    callable).  The verdict is ``"gain"`` when every margin is positive,
    ``"loss"`` when every margin is negative, ``"neutral"`` when all vanish
    within ``atol`` and ``"mixed"`` otherwise.
    """
    omega = np.asarray(omega, dtype=float)
    Fv = np.asarray(F(omega) if callable(F) else F, dtype=float)
    if Fv.shape != omega.shape or not np.all(np.isfinite(Fv)):
        raise ValueError("F must be finite and tabulated on the omega grid")
    order = np.argsort(omega)
    w, Fs = omega[order], Fv[order]
    pairs, margins = [], []
    for i in range(len(w)):
        for j in range(i, len(w)):
            s = w[i] + w[j]
            k = np.searchsorted(w, s)
            for kk in (k - 1, k):
                if 0 <= kk < len(w) and math.isclose(w[kk], s, rel_tol=1e-12, abs_tol=1e-300):
                    pairs.append((order[i], order[j], order[kk]))
                    margins.append(Fs[i] + Fs[j] - Fs[kk])
                    break
    margins = np.array(margins)
    pairs = np.array(pairs, dtype=np.int64).reshape(-1, 3)
    if len(margins) == 0:
        verdict = "neutral"
    elif np.all(np.abs(margins) <= atol):
        verdict = "neutral"
    elif np.all(margins > atol):
        verdict = "gain"
    elif np.all(margins < -atol):
        verdict = "loss"
    else:
        verdict = "mixed"
    return ConvexityReport(pairs, margins, verdict)


def quadratic_log_ratio(lam: float):
    """``F(x) = -x - lam x^2`` in reduced energy ``x = hbar w / kT``.

    ``lam`` is the dimensionless curvature ``lambda kT / hbar^2``.
    """
    return lambda x: -x - lam * np.asarray(x) ** 2


def equilibrium_log_ratio(mu_over_kT: float = 0.0):
    return lambda x: mu_over_kT - np.asarray(x)


def tabulated_log_ratio(x_grid, nbar):
    """Log-ratio interpolated from occupations tabulated on reduced energies."""
    x_grid = np.asarray(x_grid, dtype=float)
    nbar = np.asarray(nbar, dtype=float)
    if np.any(nbar <= 0):
        raise ValueError("tabulated occupations must be positive")
    F = np.log(nbar) - np.log1p(nbar)
    return lambda x: np.interp(x, x_grid, F)


def _occupation_from_log_ratio(Fx):
    # n = 1/(exp(-F) - 1); very negative F underflows cleanly to n = 0
    with np.errstate(over="ignore"):
        return 1.0 / np.expm1(-Fx)


def net_gain_integrand(F, x1, x2):
    """``n1 n2 (1+n3) - (1+n1)(1+n2) n3`` at ``x3 = x1 + x2``, from the log-ratio ``F``.

    Written as ``n1 n2 (1+n3) (1 - exp(F3 - F1 - F2))`` so that a linear
    ``F`` gives an exact zero.
    """
    F1, F2, F3 = F(x1), F(x2), F(x1 + x2)
    margin = F1 + F2 - F3
    if margin == 0:
        return 0.0
    n1, n2, n3 = (_occupation_from_log_ratio(v) for v in (F1, F2, F3))
    return n1 * n2 * (1.0 + n3) * -math.expm1(-margin)


def net_gain_nonequilibrium(F, kT: float, m: float, u: float, upper: float = 80.0) -> float:
    """Forward-minus-backward feeding rate of the condensate from a stationary bath (1/s).

    ``F`` is the log-ratio ``log(n/(1+n))`` as a function of reduced energy
    ``x = hbar w / kT``; use :func:`tabulated_log_ratio` for tabulated
    occupations.
    """
    val, _ = _double_integral(lambda x2, x1: net_gain_integrand(F, x1, x2), upper)
    return continuum_prefactor(kT, m, u) * val


def quadratic_family_net_gain(lam: float, kT: float, m: float, u: float, upper: float = 80.0) -> float:
    """Net gain for ``F = -x - lam x^2`` in its exponential-enhancement form.

    Uses ``(1+n1)(1+n2) n3 (exp(2 lam x1 x2) - 1)``, which equals the
    forward-minus-backward integrand for this family.
    """
    F = quadratic_log_ratio(lam)

    def f(x2, x1):
        F1, F2, F3 = F(x1), F(x2), F(x1 + x2)
        m = 2.0 * lam * x1 * x2
        if m <= 0:
            return 0.0
        # log of (1+n1)(1+n2) n3 (e^m - 1), with log(1+n) = -log(1 - e^F)
        log_occ = F3 - sum(math.log(-math.expm1(v)) for v in (F1, F2, F3))
        return math.exp(log_occ + m + math.log(-math.expm1(-m)))

    val, _ = _double_integral(f, upper)
    return continuum_prefactor(kT, m, u) * val
