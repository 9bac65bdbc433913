"""Command-line driver: ``qkinetics <subcommand> [--config FILE] [flags]``.

Every run writes plot-ready long-format CSV plus ``manifest.json`` into
``--out``.  Exit codes: 0 success, 2 configuration error, 3 capacity guard,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import platform
import secrets
import sys
import time
from datetime import datetime, timezone
from importlib import metadata

import numpy as np
import yaml

from . import basis, condensate, meanfield, regime
from .config import FIELD_TYPES, SUBCOMMANDS, ConfigError, RunConfig, parse_config
from .constants import KB, contact_coupling
from .kmc import (
    AbsorbingState,
    CapacityError,
    ChannelTable,
    ModeLattice,
    OccupationConfig,
    ensemble,
    trajectory_rng,
)

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_NUMERICAL = 0, 2, 3, 4

_COMMON = ("subcommand", "seed", "out", "threads")


class NumericalFailure(RuntimeError):
    pass


def _version(dist: str) -> str:
    try:
        return metadata.version(dist)
    except metadata.PackageNotFoundError:
        return "unknown"


def _versions() -> dict:
    return {
        "qkinetics": _version("artifact"),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": _version("scipy"),
        "numba": _version("numba"),
        "pyyaml": yaml.__version__,
    }


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _lattice(cfg: RunConfig) -> ModeLattice:
    if cfg.modes is not None:
        return ModeLattice(np.array(cfg.modes, dtype=np.int64), L=cfg.L, mass=cfg.m)
    return ModeLattice.cube(cfg.z_max, L=cfg.L, mass=cfg.m)


# -- subcommands --------------------------------------------------------------

def run_kmc(cfg: RunConfig, out: str) -> tuple[dict, dict]:
    lattice = _lattice(cfg)
    table = ChannelTable.build(lattice)
    if cfg.initial is not None:
        if len(cfg.initial) != len(lattice):
            raise ConfigError(f"initial: expected {len(lattice)} occupations, got {len(cfg.initial)}")
        n0 = np.array(cfg.initial, dtype=np.int64)
    else:
        n0 = np.where(lattice.energies == 1, 2, 0).astype(np.int64)
    initial = OccupationConfig(n0, lattice)
    times = np.linspace(0.0, cfg.t_end, cfg.n_samples)
    runs = ensemble(initial, lattice, cfg.gamma, cfg.t_end, cfg.seed, cfg.n_traj,
                    sample_times=times, channels=table, threads=cfg.threads)
    path = os.path.join(out, "timeseries.csv")

    def rows():
        for run in runs:
            for rec in run.rows(per_mode=cfg.per_mode):
                t = rec.pop("time")
                for key, val in rec.items():
                    yield run.trajectory_index, t, key, val

    _write_csv(path, ["trajectory", "time", "observable", "value"], rows())
    conserved = all(
        np.all(r.N == initial.N) and np.all(r.E == initial.E) and np.all(r.P == np.asarray(initial.P))
        for r in runs
    )
    diag = {
        "n_modes": len(lattice),
        "n_channels": len(table),
        "initial": n0.tolist(),
        "conservation_exact": bool(conserved),
        "trajectories": [
            {"index": r.trajectory_index, "events": r.n_events, "status": r.status,
             "absorbed_at": r.absorbed_at, "digest": r.digest()}
            for r in runs
        ],
    }
    print(f"kmc: {len(runs)} trajectories, {sum(r.n_events for r in runs)} events, "
          f"{len(table)} channels on {len(lattice)} modes")
    return diag, {"timeseries.csv": path}


def run_uu(cfg: RunConfig, out: str) -> tuple[dict, dict]:
    lattice = _lattice(cfg)
    table = ChannelTable.build(lattice)
    kT = cfg.kT_reduced * lattice.epsilon0
    bath = meanfield.BathSpec(T=kT / KB, mu=cfg.mu_over_kT * kT)
    try:
        field0 = meanfield.be_field(lattice, bath)
    except meanfield.DivergentOccupation as exc:
        raise ConfigError(f"mu_over_kT: {exc}") from None
    if cfg.perturbation > 0:
        rng = trajectory_rng(cfg.seed)
        field0 = field0 * (1.0 + cfg.perturbation * rng.uniform(-1.0, 1.0, len(field0)))
    traj = meanfield.integrate_uu(field0, table, cfg.t_end, cfg.gamma, n_samples=cfg.n_samples)
    path = os.path.join(out, "timeseries.csv")

    def rows():
        for k, t in enumerate(traj.times):
            yield t, "N", traj.N[k]
            yield t, "E", traj.E[k]
            if cfg.per_mode:
                for i, v in enumerate(traj.fields[k]):
                    yield t, f"n_{i}", v

    _write_csv(path, ["time", "observable", "value"], rows())
    dN, dE = traj.relative_drift()
    diag = {
        "n_modes": len(lattice),
        "n_channels": len(table),
        "steps": traj.steps,
        "halvings": traj.halvings,
        "dt_min": traj.dt_min,
        "relative_drift_N": dN,
        "relative_drift_E": dE,
        "max_change_from_initial": float(np.max(np.abs(traj.final - field0))),
        "initial_is_equilibrium": cfg.perturbation == 0,
    }
    print(f"uu: {traj.steps} steps, drift N {dN:.2e}, E {dE:.2e}, "
          f"max |n(t_end) - n(0)| = {diag['max_change_from_initial']:.3e}")
    return diag, {"timeseries.csv": path}


def run_condensate(cfg: RunConfig, out: str) -> tuple[dict, dict]:
    lattice = _lattice(cfg)
    bath = meanfield.BathSpec(T=cfg.T, mu=cfg.mu_over_kT * KB * cfg.T)
    u = contact_coupling(cfg.a, cfg.m)
    state0 = condensate.CondensateState(complex(cfg.phi0_re, cfg.phi0_im), cfg.rho0)
    kern = condensate.bath_kernels(np.zeros(3), lattice, bath, u, cfg.eta)
    rho = condensate.integrate_rho(state0, bath, lattice, u, cfg.t_end, cfg.n_samples, cfg.eta)
    phi = condensate.integrate_phi(state0, bath, lattice, cfg.a, cfg.t_end, cfg.n_samples, cfg.eta)
    if not (np.all(np.isfinite(phi.phi)) and np.all(np.isfinite(rho.rho))):
        raise NumericalFailure("condensate: non-finite values in the moment trajectories")
    path = os.path.join(out, "timeseries.csv")

    def rows():
        for t, p in zip(phi.times, phi.phi):
            yield t, "phi_re", p.real
            yield t, "phi_im", p.imag
            yield t, "phi_abs", abs(p)
        for t, r in zip(rho.times, rho.rho):
            yield t, "rho_bar", r

    _write_csv(path, ["time", "observable", "value"], rows())
    diag = {
        "triads": kern.triads,
        "eta": kern.eta,
        "g_plus_origin": kern.g_plus,
        "g_minus_origin": kern.g_minus,
        "kms_residual": kern.kms_residual,
        "advisory": kern.advisory,
        "gain_minus_loss_rate": phi.growth_rate,
        "rotation_rate": phi.rotation_rate,
        "rho_status": rho.status,
        "rho_stationary": rho.stationary,
        "rho_ceiling": rho.ceiling,
        "rho_final": float(rho.rho[-1]),
        "phi_abs_final": float(abs(phi.phi[-1])),
    }
    print(f"condensate: {kern.triads} triads, gain-loss rate {phi.growth_rate:.4e} 1/s, "
          f"rho status {rho.status}")
    return diag, {"timeseries.csv": path}


def run_regime(cfg: RunConfig, out: str) -> tuple[dict, dict]:
    params = regime.GasParameters(cfg.m, cfg.a, cfg.T, cfg.rho, cfg.l_c)
    rep = regime.regime_report(params, cfg.factor, cfg.lambda_mfp)
    print(rep.table())
    jpath = os.path.join(out, "regime.json")
    with open(jpath, "w", encoding="utf-8") as fh:
        fh.write(rep.to_json() + "\n")
    cpath = os.path.join(out, "regime.csv")
    rows = [("lambda_T", rep.lambda_T), ("lambda_mfp", rep.lambda_mfp), ("xi", rep.xi),
            ("k_diag", rep.k_diag), ("critical_cell_size", rep.critical_cell_size),
            ("weak_condensation_density", rep.weak_condensation_density)]
    rows += [(f"ratio_{c.name}", c.ratio) for c in rep.conditions]
    rows += [(f"verdict_{c.name}", c.verdict) for c in rep.conditions]
    _write_csv(cpath, ["observable", "value"], rows)
    diag = {"all_pass": rep.all_pass, "k_diag": rep.k_diag}
    return diag, {"regime.json": jpath, "regime.csv": cpath}


def run_basis_check(cfg: RunConfig, out: str) -> tuple[dict, dict]:
    delta = math.pi / cfg.L
    bands = (-2.0 * delta, 0.0, 2.0 * delta)
    cells = [n * math.pi / delta for n in range(-3, 4)]
    idx = [basis.WaveletIndex((K,), (r,), delta) for K in bands for r in cells]
    worst = 0.0
    for i, a in enumerate(idx):
        for j, b in enumerate(idx):
            worst = max(worst, abs(basis.overlap(a, b) - (1.0 if i == j else 0.0)))
    norm_q = basis.overlap_quadrature_1d(0.0, 0.0, 0.0, 0.0, delta).real
    neigh_q = abs(basis.overlap_quadrature_1d(0.0, 0.0, 0.0, math.pi / delta, delta))
    w0 = basis.m_delta_oracle_1d(0.0, delta)
    wp = basis.m_delta_oracle_1d(1.0 * delta, delta)
    wm = basis.m_delta_oracle_1d(-1.0 * delta, delta)
    results = {
        "fourier_overlap_max_error": worst,
        "quadrature_norm_error": abs(norm_q - 1.0),
        "quadrature_neighbour_overlap": neigh_q,
        "m_delta_ratio_plus": wp / w0,
        "m_delta_ratio_minus": wm / w0,
        "m_delta_sum_over_g0": (w0 + wp + wm) / basis.g_zero(delta),
        "cell_product_over_h": basis.cell_product_over_h(delta),
        "g_zero": basis.g_zero(delta),
    }
    checks = {
        "fourier_overlap_exact": worst == 0.0,
        "quadrature_norm_1e-3": results["quadrature_norm_error"] < 1e-3,
        "quadrature_orthogonality_1e-3": neigh_q < 1e-3,
        "m_delta_ratios_2pct": all(abs(results[k] / 0.25 - 1.0) < 0.02
                                   for k in ("m_delta_ratio_plus", "m_delta_ratio_minus")),
    }
    path = os.path.join(out, "basis_check.csv")
    _write_csv(path, ["observable", "value"],
               list(results.items()) + [(f"check_{k}", v) for k, v in checks.items()])
    for k, v in checks.items():
        print(f"{'PASS' if v else 'FAIL'}  {k}")
    if not all(checks.values()):
        raise NumericalFailure("basis-check: " + ", ".join(k for k, v in checks.items() if not v))
    return {"results": results, "checks": checks}, {"basis_check.csv": path}


RUNNERS = {
    "kmc": run_kmc,
    "uu": run_uu,
    "condensate": run_condensate,
    "regime": run_regime,
    "basis-check": run_basis_check,
}


def run(cfg: RunConfig) -> int:
    """Execute a validated configuration; returns the process exit code."""
    if cfg.seed is None:
        cfg.seed = secrets.randbits(63)
        print(f"seed: {cfg.seed} (generated)")
    out = os.path.abspath(cfg.out)
    started = time.perf_counter()
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    try:
        os.makedirs(out, exist_ok=True)
        diag, outputs = RUNNERS[cfg.subcommand](cfg, out)
    except ConfigError as exc:
        print(f"{cfg.subcommand}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CapacityError, basis.BasisError) as exc:
        code = EXIT_CAPACITY if isinstance(exc, CapacityError) else EXIT_CONFIG
        print(f"{cfg.subcommand}: {exc}", file=sys.stderr)
        return code
    except (condensate.DomainError, meanfield.DivergentOccupation, ValueError) as exc:
        print(f"{cfg.subcommand}: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (meanfield.IntegrationError, basis.QuadratureError, AbsorbingState,
            NumericalFailure, FloatingPointError) as exc:
        print(f"{cfg.subcommand}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    manifest = {
        "subcommand": cfg.subcommand,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "versions": _versions(),
        "started_utc": stamp,
        "wall_time_s": time.perf_counter() - started,
        "diagnostics": diag,
        "outputs": {name: {"path": os.path.basename(p), "sha256": _sha256(p)}
                    for name, p in outputs.items()},
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=_json_default)
        fh.write("\n")
    print(f"wrote {', '.join(sorted(outputs))} and manifest.json to {out}")
    return EXIT_OK


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkinetics", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    helps = {
        "kmc": "stochastic trajectories of the single-cell master equation",
        "uu": "mean-occupation (Uehling-Uhlenbeck) kinetics on the mode lattice",
        "condensate": "condensate amplitude and density moments against a thermal bath",
        "regime": "validity-regime length scales and margins",
        "basis-check": "orthonormality and smearing-weight checks of the cell basis",
    }
    for name in SUBCOMMANDS:
        p = subs.add_parser(name, help=helps[name])
        p.add_argument("--config", help="YAML file with configuration keys")
        p.add_argument("--seed", help="unsigned 64-bit seed (generated and printed if absent)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", help="worker threads for trajectory ensembles")
        for key in FIELD_TYPES:
            if key in _COMMON:
                continue
            p.add_argument("--" + key.replace("_", "-"), dest=key, metavar="VALUE",
                           help=f"{key} ({FIELD_TYPES[key].__name__})")
    return parser


def _overrides(ns: argparse.Namespace) -> dict:
    out = {}
    for key in FIELD_TYPES:
        if key == "subcommand":
            continue
        raw = getattr(ns, key, None)
        if raw is None:
            continue
        try:
            out[key] = yaml.safe_load(raw) if key != "out" else raw
        except yaml.YAMLError:
            raise ConfigError(f"{key}: cannot parse flag value {raw!r}") from None
    return out


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = parse_config(ns.subcommand, ns.config, _overrides(ns))
    except ConfigError as exc:
        print(f"{ns.subcommand}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
