"""Quantum kinetic simulation of a dilute Bose gas in a wavelet phase-space basis.

Subpackages and modules:

* :mod:`qkinetics.basis` band-limited cell functions, the kernel ``g`` and
  the momentum-smearing weights.
* :mod:`qkinetics.kmc` exact stochastic simulation of the single-cell
  collision master equation and its exact stationary states.
* :mod:`qkinetics.meanfield` factorized mean-occupation kinetics.
* :mod:`qkinetics.condensate` condensate moments against a thermal bath.
* :mod:`qkinetics.regime` validity margins for given gas parameters.
* :mod:`qkinetics.cli` the ``qkinetics`` command.
"""

from . import basis, condensate, kmc, meanfield, regime
from .constants import SODIUM_MASS, SODIUM_SCATTERING_LENGTH, contact_coupling

__all__ = [
    "SODIUM_MASS",
    "SODIUM_SCATTERING_LENGTH",
    "basis",
    "condensate",
    "contact_coupling",
    "kmc",
    "meanfield",
    "regime",
]
