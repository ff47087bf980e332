"""Command-line driver: simulate, hj, converge, verify, measure, moments.

Configuration is one YAML file with nested sections; unknown keys are
rejected (exit 2).  Runtime failures exit 3 with a machine-readable error
JSON on stdout; `verify` exits 1 when an invariant fails.  Formats are
documented in docs/formats.md.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__, harness, hjsolver, io, measures, moments
from .integrator import EvolveError, IntegratorConfig, evolve
from .particles import InvalidState, ParticleState

log = logging.getLogger("annihilate")

_SCHEMA: dict[str, set[str]] = {
    "integrator": {
        "t_end", "abs_tol", "rel_tol", "cluster_gap", "max_step", "safety",
        "n_samples",
    },
    "scheme": {"L", "h", "rho", "cfl", "t_end"},
    "experiment": {
        "datum", "ns", "offset", "t_end", "n_snapshots", "ref_L", "ref_h",
        "ref_rho", "ref_cfl", "abs_tol", "rel_tol", "scan_points", "seed",
    },
    "simulate": {"positions", "charges", "coupling"},
    "hj": {"initial", "snapshots"},
    "verify": {"seed", "sizes", "runs", "t_end"},
    "measure": {"family", "ns", "threshold"},
    "moments": {"positions"},
}


class ConfigError(ValueError):
    pass


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    for section, content in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        if content is None:
            raw[section] = {}
            continue
        if not isinstance(content, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        unknown = set(content) - _SCHEMA[section]
        if unknown:
            raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    return raw


def _integrator_config(section: dict) -> IntegratorConfig:
    t_end = float(section.get("t_end", 1.0))
    n_samples = int(section.get("n_samples", 11))
    samples = tuple(np.linspace(0.0, t_end, n_samples)[1:])
    kwargs = {}
    for key in ("abs_tol", "rel_tol", "cluster_gap", "max_step", "safety"):
        if key in section:
            kwargs[key] = float(section[key])
    return IntegratorConfig(t_end=t_end, sample_times=samples, **kwargs)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "message": message}))
    return code


def cmd_simulate(args, cfg: dict) -> int:
    section = cfg.get("simulate", {})
    if "positions" not in section or "charges" not in section:
        return _fail(2, "config", "simulate needs positions and charges")
    out = _out_dir(args)
    chash = io.config_hash(cfg)
    try:
        state = ParticleState(
            positions=np.asarray(section["positions"], dtype=float),
            charges=np.asarray(section["charges"], dtype=int),
            coupling=float(section.get("coupling", -1.0)),
        )
        icfg = _integrator_config(cfg.get("integrator", {}))
        traj = evolve(state, icfg)
    except (InvalidState, EvolveError, ValueError) as exc:
        return _fail(3, "simulation", str(exc))
    io.write_trajectory_csv(out / "trajectory.csv", traj.times, traj.states, chash)
    io.write_events_jsonl(out / "events.jsonl", traj.events, chash)
    log.info("wrote %s events to %s", len(traj.events), out)
    return 0


def cmd_hj(args, cfg: dict) -> int:
    section = cfg.get("scheme", {})
    hj_section = cfg.get("hj", {})
    out = _out_dir(args)
    chash = io.config_hash(cfg)
    try:
        scfg = hjsolver.SchemeConfig(
            L=float(section.get("L", 4.0)),
            h=float(section.get("h", 1 / 128)),
            rho=float(section.get("rho", 1 / 16)),
            cfl=float(section.get("cfl", 0.8)),
            t_end=float(section.get("t_end", 0.25)),
        )
        datum = harness.CATALOG[hj_section.get("initial", "sigmoid")]
        snaps = hj_section.get("snapshots", 5)
        times = np.linspace(0.0, scfg.t_end, int(snaps))
        frames = hjsolver.solve_hj(datum.u0, scfg, times)
    except (KeyError, ValueError) as exc:
        return _fail(3, "hj", str(exc))
    for k, fr in enumerate(frames):
        io.write_xy_csv(out / f"hj_{k:03d}.csv", fr.xs, fr.values, chash)
    return 0


def cmd_converge(args, cfg: dict) -> int:
    section = cfg.get("experiment", {})
    out = _out_dir(args)
    chash = io.config_hash(cfg)
    try:
        spec = harness.ExperimentSpec(
            datum=section.get("datum", "sigmoid"),
            ns=tuple(section.get("ns", (8, 16, 32, 64, 128))),
            offset=float(section.get("offset", 0.5)),
            t_end=float(section.get("t_end", 0.25)),
            n_snapshots=int(section.get("n_snapshots", 6)),
            ref_L=float(section.get("ref_L", 4.0)),
            ref_h=float(section.get("ref_h", 1 / 256)),
            ref_rho=float(section.get("ref_rho", 1 / 16)),
            ref_cfl=float(section.get("ref_cfl", 0.8)),
            abs_tol=float(section.get("abs_tol", 1e-12)),
            rel_tol=float(section.get("rel_tol", 1e-9)),
            scan_points=int(section.get("scan_points", 2**15)),
            seed=int(section.get("seed", args.seed)),
        )
        result = harness.run_convergence(spec, threads=args.threads)
    except (KeyError, ValueError) as exc:
        return _fail(3, "converge", str(exc))
    io.write_convergence_csv(out / "convergence.csv", result, chash)
    for k, (t, fr) in enumerate(result.ref_frames):
        io.write_xy_csv(out / f"reference_{k:03d}.csv", fr.xs, fr.values, chash)
    bad = [r for r in result.rows if r.error]
    if bad:
        return _fail(3, "converge", f"{len(bad)} ladder rows failed")
    return 0


def cmd_verify(args, cfg: dict) -> int:
    section = cfg.get("verify", {})
    out = _out_dir(args)
    report = harness.run_property_suite(
        seed=int(section.get("seed", args.seed)),
        sizes=tuple(section.get("sizes", (4, 6, 8, 12, 16, 24, 32))),
        runs=int(section.get("runs", 100)),
        t_end=float(section.get("t_end", 1.0)),
    )
    (out / "properties.json").write_text(report.to_json() + "\n")
    for name, chk in sorted(report.checks.items()):
        log.info("%-28s %s margin=%.3e", name, "PASS" if chk.passed else "FAIL", chk.margin)
    return 0 if report.all_passed else 1


def cmd_measure(args, cfg: dict) -> int:
    section = cfg.get("measure", {})
    out = _out_dir(args)
    chash = io.config_hash(cfg)
    family = section.get("family", "dipole")
    ns = [int(n) for n in section.get("ns", (4, 8, 16, 32, 64))]
    threshold = float(section.get("threshold", 0.05))
    zero = measures.SignedAtomicMeasure(locations=np.array([1e6]), weights=np.array([0.0]))
    mus = []
    for n in ns:
        if family == "dipole":
            mu = measures.SignedAtomicMeasure(
                locations=np.array([0.0, 1.0 / n]), weights=np.array([-1.0, 1.0])
            )
        elif family == "lipschitz_cdf":
            # atoms of a smooth ramp sampled at spacing 1/n
            locs = np.linspace(0.0, 1.0, n, endpoint=False)
            mu = measures.SignedAtomicMeasure(locations=locs, weights=np.full(n, 1.0 / n))
        else:
            return _fail(3, "measure", f"unknown family {family!r}")
        mus.append(mu)
        io.write_measure_csv(out / f"measure_{family}_{n:04d}.csv", mu, chash)
    omega = (lambda r: abs(r)) if family == "lipschitz_cdf" else (lambda r: 2.0 * abs(r))
    s_list, aec_ok = measures.aec_modulus(mus, omega, threshold=threshold)
    proxies = [measures.narrow_distance_proxy(mu, zero) for mu in mus]
    sup_cdf = [measures.cdf(mu).sup_norm() for mu in mus]
    payload = {
        "family": family,
        "ns": ns,
        "aec_defects": s_list,
        "aec_passed": aec_ok,
        "narrow_proxy": proxies,
        "cdf_sup": sup_cdf,
    }
    (out / "measure_report.json").write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def cmd_moments(args, cfg: dict) -> int:
    section = cfg.get("moments", {})
    if "positions" not in section:
        return _fail(2, "config", "moments needs positions")
    x = np.asarray(section["positions"], dtype=float)
    M = moments.moments(x)
    rec = moments.reconstruct_positions(M)
    print(json.dumps({"moments": M.tolist(), "reconstructed": rec.tolist()}))
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "hj": cmd_hj,
    "converge": cmd_converge,
    "verify": cmd_verify,
    "measure": cmd_measure,
    "moments": cmd_moments,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="annihilate", description=__doc__)
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", default=None, help="YAML config path")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--version", action="version", version=__version__)
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=os.environ.get("ANNIHILATE_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _load_config(args.config)
    except ConfigError as exc:
        return _fail(2, "config", str(exc))
    return _COMMANDS[args.command](args, cfg)


if __name__ == "__main__":
    sys.exit(main())
