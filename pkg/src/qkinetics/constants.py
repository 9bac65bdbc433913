"""Physical constants (SI) and reference species data."""

import math

from scipy import constants as _c

HBAR = _c.hbar
H = _c.h
KB = _c.k
AMU = _c.atomic_mass

SODIUM_MASS = 22.98976928 * AMU
SODIUM_SCATTERING_LENGTH = 4.9e-9


def contact_coupling(a, m):
    """Contact interaction strength ``u = 4 pi hbar^2 a / m`` in J m^3."""
    return 4.0 * math.pi * HBAR**2 * a / m
