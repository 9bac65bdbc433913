"""Length scales and validity margins for the kinetic description of a dilute Bose gas."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from .constants import H, KB, contact_coupling

DEFAULT_FACTOR = 10.0


@dataclass(frozen=True)
class GasParameters:
    m: float
    a: float
    T: float
    rho: float
    l_c: float

    def __post_init__(self):
        for name in ("m", "a", "T", "rho", "l_c"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a finite positive number, got {v!r}")

    @property
    def u(self) -> float:
        return contact_coupling(self.a, self.m)


def thermal_wavelength(m: float, T: float) -> float:
    """``h / sqrt(2 m k T)``."""
    if m <= 0 or T <= 0:
        raise ValueError("m and T must be positive")
    return H / math.sqrt(2.0 * m * KB * T)


def scattering_cross_section(a: float) -> float:
    """Identical-boson s-wave cross-section ``8 pi a^2``."""
    return 8.0 * math.pi * a * a


def mean_free_path(rho: float, a: float) -> float:
    """``1 / (sqrt(2) rho sigma)``; the sqrt(2) is the relative-speed thermal average."""
    if rho <= 0 or a <= 0:
        raise ValueError("rho and a must be positive")
    return 1.0 / (math.sqrt(2.0) * rho * scattering_cross_section(a))


def weak_condensation_length(a: float, rho: float) -> float:
    """``sqrt(pi / (8 a rho))``."""
    return math.sqrt(math.pi / (8.0 * a * rho))


def weak_condensation_density(a: float, l_c: float) -> float:
    """Density at which the cell size equals the weak-condensation length."""
    return math.pi / (8.0 * a * l_c * l_c)


def _classify(ratio: float, want: str, factor: float) -> str:
    # want="large": pass if ratio >= factor; want="small": pass if ratio <= 1/factor
    r = ratio if want == "large" else 1.0 / ratio
    if r >= factor:
        return "pass"
    if r >= 1.0 / factor:
        return "marginal"
    return "fail"


@dataclass(frozen=True)
class Condition:
    name: str
    description: str
    ratio: float
    want: str
    verdict: str

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


@dataclass
class RegimeReport:
    params: GasParameters
    lambda_T: float
    lambda_mfp: float
    xi: float
    k_diag: float
    critical_cell_size: float
    weak_condensation_density: float
    factor: float
    conditions: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def condition(self, name: str) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.conditions if c.name != "cell_exceeds_xi")

    def to_dict(self) -> dict:
        d = {
            "params": asdict(self.params),
            "lambda_T": self.lambda_T,
            "lambda_mfp": self.lambda_mfp,
            "xi": self.xi,
            "k_diag": self.k_diag,
            "critical_cell_size": self.critical_cell_size,
            "weak_condensation_density": self.weak_condensation_density,
            "factor": self.factor,
            "conditions": [asdict(c) for c in self.conditions],
            "notes": list(self.notes),
        }
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, **kw)

    def table(self) -> str:
        rows = [
            ("thermal wavelength lambda_T", f"{self.lambda_T:.4e} m"),
            ("mean free path lambda_mfp", f"{self.lambda_mfp:.4e} m"),
            ("weak-condensation length xi", f"{self.xi:.4e} m"),
            ("critical cell size (a lambda_mfp lambda_T)^(1/3)", f"{self.critical_cell_size:.4e} m"),
            ("boundary density at l_c", f"{self.weak_condensation_density:.4e} m^-3"),
            ("k_diag = a lambda_mfp lambda_T / l_c^3", f"{self.k_diag:.4e}"),
        ]
        for c in self.conditions:
            rows.append((f"{c.description}", f"{c.ratio:.4e}  [{c.verdict}]"))
        w = max(len(r[0]) for r in rows)
        lines = [f"{k.ljust(w)}  {v}" for k, v in rows]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


def regime_report(params: GasParameters, factor: float = DEFAULT_FACTOR,
                  lambda_mfp: float | None = None) -> RegimeReport:
    """Evaluate every validity margin for ``params``.

    ``lambda_mfp`` overrides the cross-section estimate when a measured mean
    free path is available.  Strong inequalities pass when the ratio clears
    ``factor``; a ratio within a factor of ``factor`` of one is "marginal".
    """
    if not factor > 1:
        raise ValueError("factor must exceed 1")
    p = params
    lam_T = thermal_wavelength(p.m, p.T)
    lam = mean_free_path(p.rho, p.a) if lambda_mfp is None else float(lambda_mfp)
    if not lam > 0:
        raise ValueError("lambda_mfp must be positive")
    xi = weak_condensation_length(p.a, p.rho)
    k_diag = p.a * lam * lam_T / p.l_c**3
    conds = [
        Condition("cell_vs_thermal", "l_c / lambda_T (want >> 1)", p.l_c / lam_T, "large",
                  _classify(p.l_c / lam_T, "large", factor)),
        Condition("mfp_vs_thermal", "lambda_mfp / lambda_T (want >> 1)", lam / lam_T, "large",
                  _classify(lam / lam_T, "large", factor)),
        Condition("mfp_vs_cell", "lambda_mfp / l_c (want >> 1)", lam / p.l_c, "large",
                  _classify(lam / p.l_c, "large", factor)),
        Condition("k_diagonal", "a lambda_mfp lambda_T / l_c^3 (want << 1)", k_diag, "small",
                  _classify(k_diag, "small", factor)),
        Condition("weak_condensation", "l_c / xi (weak condensation: <= 1)", p.l_c / xi, "at_most_one",
                  "pass" if p.l_c <= xi else "fail"),
        Condition("cell_exceeds_xi", "l_c / xi (displayed inequality: >> 1)", p.l_c / xi, "large",
                  _classify(p.l_c / xi, "large", factor)),
    ]
    notes = [
        "the displayed cell-size inequality reads l_c >> xi, while the quoted density bound "
        "follows from l_c <= xi; both readings are reported and 'cell_exceeds_xi' is "
        "excluded from all_pass",
    ]
    if lambda_mfp is not None:
        notes.append("lambda_mfp supplied by the caller, not computed from rho and a")
    return RegimeReport(
        params=p, lambda_T=lam_T, lambda_mfp=lam, xi=xi, k_diag=k_diag,
        critical_cell_size=(p.a * lam * lam_T) ** (1.0 / 3.0),
        weak_condensation_density=weak_condensation_density(p.a, p.l_c),
        factor=factor, conditions=conds, notes=notes,
    )
