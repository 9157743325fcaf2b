"""Command-line front end: simulate, discover, transform, predict, noise-sweep.

Every command writes plain CSV/JSON under ``--out``.  Settings are resolved
as CLI flags over the ``--config`` file (JSON or TOML) over the preset.

Exit codes: 0 success, 2 configuration or input error, 3 simulation
failure, 4 inference degeneracy.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .data import (
    DatasetError,
    FieldDataset,
    NoiseSpec,
    TrajectoryDataset,
    add_noise,
    load_dataset,
    save_dataset,
    smooth_dataset,
)
from .dictionary import PRESETS, DictionaryConfig, DictionaryError
from .discovery import DiscoveredLagrangian, DiscoveryError, discover, relative_l2_error
from .sbl import Hyperparameters
from .systems import ALIASES, SimulationError, SystemSpec, paper_spec, simulate, true_lagrangian
from .transforms import (
    TransformError,
    equations_of_motion,
    generalize_chain,
    hamiltonian_drift,
    legendre_transform,
    posterior_predict_band,
    predict,
)

__all__ = ["main", "RunConfig", "noise_sweep", "sweep_table", "NOISE_LEVELS", "ConfigError"]

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_SIMULATION, EXIT_DEGENERATE = 0, 2, 3, 4
NOISE_LEVELS = (0.0, 0.02, 0.05, 0.10, 0.15)
SHORT_NAMES = {v: k for k, v in ALIASES.items() if k in PRESETS}


class ConfigError(ValueError):
    pass


class DegenerateError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Configuration


def read_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            return tomllib.loads(text)
        return json.loads(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc


@dataclass
class RunConfig:
    """Resolved settings shared by all commands."""

    system: SystemSpec | None = None
    noise: NoiseSpec = field(default_factory=lambda: NoiseSpec(0.0, 0))
    dictionary: DictionaryConfig | None = None
    sbl: Hyperparameters = field(default_factory=Hyperparameters)
    output_dir: Path = Path(".")
    seed: int = 0
    smooth: str = "auto"

    @classmethod
    def resolve(cls, args: argparse.Namespace) -> "RunConfig":
        cfg: dict[str, Any] = read_config(args.config) if args.config else {}
        known = {"system", "noise", "dictionary", "sbl", "output_dir", "seed", "smooth"}
        extra = sorted(set(cfg) - known)
        if extra:
            raise ConfigError(f"unknown config blocks {extra}; valid: {sorted(known)}")
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))

        system = None
        block = cfg.get("system")
        if isinstance(block, str):
            block = {"name": block}
        block = dict(block or {})
        name = getattr(args, "system", None) or block.get("name")
        if name is not None:
            if name not in ALIASES:
                raise ConfigError(f"unknown system {name!r}; valid: {sorted(ALIASES)}")
            block["name"] = name
            for key in ("T", "dt"):
                val = getattr(args, key, None)
                if val is not None:
                    block[key] = val
            system = SystemSpec.from_mapping(block) if len(block) > 1 else paper_spec(name)

        nblock = dict(cfg.get("noise", {}) or {})
        zeta = getattr(args, "noise", None)
        zeta = float(nblock.get("level_zeta", 0.0)) if zeta is None else zeta
        noise = NoiseSpec(zeta, int(nblock.get("seed", seed)) if args.seed is None else seed)

        dblock = cfg.get("dictionary")
        preset = getattr(args, "dictionary", None)
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"unknown dictionary preset {preset!r}; valid: {sorted(PRESETS)}")
            dictionary = PRESETS[preset]
        elif dblock:
            dictionary = DictionaryConfig.from_mapping(dblock)
        elif system is not None:
            dictionary = PRESETS[SHORT_NAMES[system.name]]
        else:
            dictionary = None

        sbl = Hyperparameters.from_mapping(cfg.get("sbl", {}) or {})
        for flag, key in (("samples", "n_samples"), ("burnin", "n_burnin")):
            val = getattr(args, flag, None)
            if val is not None:
                sbl = replace(sbl, **{key: val})
        sbl = sbl.with_seed(seed)

        out = Path(args.out if args.out is not None else cfg.get("output_dir", "."))
        smooth = getattr(args, "smooth", None) or str(cfg.get("smooth", "auto"))
        return cls(system, noise, dictionary, sbl, out, seed, smooth)


def _smooth(d, how: str):
    """Apply the smoothing choice to noisy data; clean data is left alone."""
    if how in ("none", "0", "off") or not d.meta.get("noise_zeta"):
        return d
    if how == "auto":
        return smooth_dataset(d)
    try:
        return smooth_dataset(d, int(how))
    except ValueError as exc:
        raise ConfigError(f"bad --smooth value {how!r}: {exc}") from exc


# --------------------------------------------------------------------------
# Output helpers


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")
    return path


def _write_csv(path: Path, header: Sequence[str], rows) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _truth_for(name: str | None, system: SystemSpec | None) -> dict[str, float] | None:
    if name is None:
        return None
    if name not in ALIASES:
        raise ConfigError(f"unknown --truth system {name!r}; valid: {sorted(ALIASES)}")
    if system is not None and system.name is ALIASES[name]:
        return true_lagrangian(system)
    return true_lagrangian(paper_spec(name))


def summary_table(dl: DiscoveredLagrangian, truth: Mapping[str, float] | None = None) -> str:
    """Term, mean +- std and (optionally) the true value, one row per merged term."""
    lines = []
    head = f"{'term':<16} {'mean':>16} {'std':>12} {'pip':>6}"
    if truth:
        head += f" {'true':>14}"
    lines.append(head)
    lines.append("-" * len(head))
    for t in dl.total:
        row = f"{t.function_id:<16} {t.coefficient_mean:>16.6g} {t.coefficient_std:>12.3g} {t.pip:>6.3f}"
        if truth:
            tv = truth.get(t.function_id)
            row += f" {tv:>14.6g}" if tv is not None else f" {'--':>14}"
        lines.append(row)
    if truth:
        missing = sorted(set(truth) - dl.support())
        for fid in missing:
            lines.append(f"{fid:<16} {'(missed)':>16} {'':>12} {'':>6} {truth[fid]:>14.6g}")
        lines.append(f"relative L2 error: {relative_l2_error(dl, truth):.4f} %")
        lines.append(f"support correct: {dl.support() == set(truth)}")
    for w in dl.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# Data acquisition


def _dataset(args, cfg: RunConfig):
    if getattr(args, "data", None):
        d = load_dataset(args.data)
        if cfg.noise.level_zeta > 0:
            d = add_noise(d, cfg.noise)
        return d
    if cfg.system is None:
        raise ConfigError("give --data or --system")
    d = simulate(cfg.system)
    if cfg.noise.level_zeta > 0:
        d = add_noise(d, cfg.noise)
    return d


def _discover(d, cfg: RunConfig, *, keep_chains=False, truth=None) -> DiscoveredLagrangian:
    if cfg.dictionary is None:
        raise ConfigError("no dictionary: give --dictionary, a config block or --system")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        dl = discover(_smooth(d, cfg.smooth), cfg.dictionary, cfg.sbl, keep_chains=keep_chains, truth=truth)
    if dl.n_dof and len(dl.degenerate_dofs()) == dl.n_dof:
        raise DegenerateError("every DOF came back degenerate: " + "; ".join(dl.warnings))
    return dl


# --------------------------------------------------------------------------
# Commands


def cmd_simulate(args, cfg: RunConfig) -> int:
    if cfg.system is None:
        raise ConfigError("simulate needs --system")
    d = _dataset(args, cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.output_dir / (args.name or f"{SHORT_NAMES[cfg.system.name]}.csv")
    save_dataset(d, path)
    print(f"wrote {path}: N={d.n_samples} m={d.n_dof} dt={d.dt!r}")
    return EXIT_OK


def cmd_discover(args, cfg: RunConfig) -> int:
    d = _dataset(args, cfg)
    if cfg.dictionary is None and isinstance(d, (TrajectoryDataset, FieldDataset)):
        sysname = d.meta.get("system")
        if sysname in ALIASES:
            cfg.dictionary = PRESETS[SHORT_NAMES[ALIASES[sysname]]]
    truth = _truth_for(args.truth, cfg.system)
    dl = _discover(d, cfg, keep_chains=args.chain, truth=truth)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    dl.save(out / "lagrangian.json")
    # The kinetic term is the regression target and enters every DOF with certainty.
    rows = []
    for i, pips in enumerate(dl.pip_table):
        rows.append((dl.per_dof[i][0].function_id, i + 1, repr(1.0)))
        rows.extend((fid, i + 1, repr(p)) for fid, p in pips)
    _write_csv(out / "pip.csv", ["id", "dof", "pip"], rows)
    if args.chain:
        with (out / "chain.jsonl").open("w", encoding="utf-8") as fh:
            for i, chain in enumerate(dl.chains):
                if chain is not None:
                    chain.dump_jsonl(fh, dof=i + 1)
    text = summary_table(dl, truth)
    (out / "summary.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def _load_lagrangian(path) -> DiscoveredLagrangian:
    try:
        return DiscoveredLagrangian.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load Lagrangian {path}: {exc}") from exc


def cmd_transform(args, cfg: RunConfig) -> int:
    dl = _load_lagrangian(args.lagrangian)
    h = legendre_transform(dl)
    eom = equations_of_motion(dl)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "hamiltonian.txt").write_text(h.text() + "\n", encoding="utf-8")
    _write_json(out / "hamiltonian.json", h.to_json())
    (out / "eom.txt").write_text(eom.text() + "\n", encoding="utf-8")
    _write_json(out / "eom.json", eom.to_json())
    print("H =", h.text())
    print(eom.text())
    if args.data or cfg.system is not None:
        d = load_dataset(args.data) if args.data else simulate(cfg.system)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            drift = hamiltonian_drift(h, d)
        _write_csv(out / "energy_drift.csv", ["t", "H"],
                   ((repr(float(t)), repr(float(v))) for t, v in zip(d.times, drift.series)))
        kind = "relative" if drift.relative else "absolute"
        print(f"max {kind} drift of H: {drift.max_drift:.3e}")
    return EXIT_OK


def _save_traj(d, path: Path):
    save_dataset(d, path)


def cmd_predict(args, cfg: RunConfig) -> int:
    dl = _load_lagrangian(args.lagrangian)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    truth_spec = cfg.system
    if args.generalize:
        dl = generalize_chain(dl, args.generalize)
        base = truth_spec or paper_spec("chain")
        n = args.generalize
        params = dict(base.params, n=n)
        x0 = tuple(np.linspace(0.1, 1.0, n)) if len(base.x0) != n else base.x0
        truth_spec = replace(base, params=params, x0=x0, v0=(0.0,) * n,
                             T=args.T if args.T is not None else base.T)
    if truth_spec is None:
        raise ConfigError("predict needs --system (initial condition and ground truth)")
    T = args.T if args.T is not None else 2.0 * truth_spec.T
    dt = truth_spec.dt
    # one extra sample so the truth also ends at t = T, like the prediction
    truth_spec = replace(truth_spec, T=T + dt)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        truth = simulate(truth_spec)
    x0 = np.asarray(truth.states[0])
    v0 = np.asarray(truth.velocities[0] if isinstance(truth, TrajectoryDataset) else truth.velocity_field()[0])
    sub = int(truth.meta.get("substeps_used", truth_spec.substeps))
    eom = equations_of_motion(dl)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        point = predict(eom, x0, v0, T, dt, substeps=sub)
    result: dict[str, Any] = {"T": T, "dt": dt, "n_dof": eom.n_dof}
    if args.draws > 0:
        band = posterior_predict_band(dl, x0, v0, T, dt, args.draws, cfg.seed, substeps=sub)
        for tag, traj in zip(("mean", "lower", "upper"), band):
            _save_traj(traj, out / f"{tag}.csv")
        result.update(n_draws=args.draws, n_diverged=band.n_diverged)
        n = min(truth.n_samples, band.lower.n_samples)
        ts = np.asarray(truth.states[:n])
        inside = (ts >= band.lower.states[:n]) & (ts <= band.upper.states[:n])
        result["band_coverage"] = float(np.mean(np.all(inside, axis=1)))
    else:
        _save_traj(point, out / "mean.csv")
    _save_traj(point, out / "prediction.csv")
    _save_traj(truth, out / "truth.csv")
    n = min(truth.n_samples, point.n_samples)
    err = np.linalg.norm(point.states[:n] - truth.states[:n]) / np.linalg.norm(truth.states[:n])
    result["relative_l2_error"] = float(100.0 * err)
    if "blowup_time" in point.meta:
        result["blowup_time"] = point.meta["blowup_time"]
    _write_json(out / "prediction.json", result)
    print(f"relative L2 trajectory error: {result['relative_l2_error']:.4f} %")
    if "band_coverage" in result:
        print(f"truth inside 95% band at {100 * result['band_coverage']:.1f} % of time points "
              f"({result['n_diverged']} diverged draws)")
    return EXIT_OK


# --------------------------------------------------------------------------
# Noise sweep


def noise_sweep(spec: SystemSpec, dictionary: DictionaryConfig, hp: Hyperparameters,
                levels: Sequence[float] = NOISE_LEVELS, seeds: Sequence[int] = range(5),
                smooth: str = "auto") -> list[dict]:
    """Discover at every ``(zeta, seed)`` pair; one record per run."""
    clean = simulate(spec)
    truth = true_lagrangian(spec)
    rows = []
    for zeta in levels:
        for seed in seeds:
            d = add_noise(clean, NoiseSpec(float(zeta), int(seed)))
            d = _smooth(d, smooth)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                dl = discover(d, dictionary, hp.with_seed(seed))
            ok = dl.support() == set(truth)
            rows.append({
                "system": SHORT_NAMES[spec.name],
                "zeta": float(zeta),
                "seed": int(seed),
                "support_correct": ok,
                "relative_error": relative_l2_error(dl, truth),
                "smooth_window": d.meta.get("smooth_window", 0),
            })
    return rows


def sweep_table(rows: Sequence[Mapping]) -> dict[str, dict[float, float | None]]:
    """Per system and noise level: median error over seeds with the correct support.

    ``None`` marks a level where no seed found the correct support.
    """
    table: dict[str, dict[float, float | None]] = {}
    for r in rows:
        table.setdefault(r["system"], {}).setdefault(r["zeta"], [])
        if r["support_correct"]:
            table[r["system"]][r["zeta"]].append(r["relative_error"])
    return {s: {z: (float(np.median(v)) if v else None) for z, v in cells.items()}
            for s, cells in table.items()}


def cmd_noise_sweep(args, cfg: RunConfig) -> int:
    names = args.systems or ([SHORT_NAMES[cfg.system.name]] if cfg.system else ["duffing", "penning", "chain", "string"])
    levels = tuple(args.levels) if args.levels else NOISE_LEVELS
    seeds = range(cfg.seed, cfg.seed + args.seeds)
    rows = []
    for name in names:
        if name not in ALIASES:
            raise ConfigError(f"unknown system {name!r}; valid: {sorted(ALIASES)}")
        spec = cfg.system if cfg.system is not None and cfg.system.name is ALIASES[name] else paper_spec(name)
        dictionary = PRESETS[SHORT_NAMES[spec.name]]
        rows.extend(noise_sweep(spec, dictionary, cfg.sbl, levels, seeds, cfg.smooth))
        print(f"{name}: done", file=sys.stderr)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    keys = ["system", "zeta", "seed", "support_correct", "relative_error", "smooth_window"]
    _write_csv(out / "noise_sweep.csv", keys, ([_fmt(r[k]) for k in keys] for r in rows))
    table = sweep_table(rows)
    systems = list(table)
    wide = []
    for z in levels:
        cells = []
        for s in systems:
            v = table[s].get(float(z))
            cells.append("--" if v is None else f"{v:.4f}")
        wide.append([f"{100 * z:g}"] + cells)
    _write_csv(out / "noise_table.csv", ["zeta_percent"] + systems, wide)
    print(",".join(["zeta_percent"] + systems))
    for row in wide:
        print(",".join(row))
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or TOML file with system/noise/dictionary/sbl blocks")
    common.add_argument("--seed", type=int, default=None, help="seed for noise and sampling")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--preset", choices=["paper"], default="paper",
                        help="baseline settings (the published examples)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lagrangian-sbl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def system_flags(sp, required=False):
        sp.add_argument("--system", required=required, help=f"one of {sorted(ALIASES)}")
        sp.add_argument("--T", type=float, default=None, help="duration in seconds")
        sp.add_argument("--dt", type=float, default=None, help="sampling step in seconds")

    def noise_flags(sp):
        sp.add_argument("--noise", type=float, default=None, help="noise level zeta (fraction of column std)")
        sp.add_argument("--smooth", default=None,
                        help="smoothing of noisy data: 'auto' (default), 'none' or an odd window length")

    sp = sub.add_parser("simulate", parents=[common], help="simulate a benchmark system")
    system_flags(sp)
    noise_flags(sp)
    sp.add_argument("--name", default=None, help="output file name (default <system>.csv)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("discover", parents=[common], help="discover a Lagrangian")
    system_flags(sp)
    noise_flags(sp)
    sp.add_argument("--data", default=None, help="dataset CSV (instead of --system)")
    sp.add_argument("--dictionary", default=None, help=f"dictionary preset, one of {sorted(PRESETS)}")
    sp.add_argument("--truth", default=None, help="report errors against this system's true Lagrangian")
    sp.add_argument("--samples", type=int, default=None, help="post burn-in Gibbs samples")
    sp.add_argument("--burnin", type=int, default=None, help="Gibbs burn-in sweeps")
    sp.add_argument("--chain", action="store_true", help="also write chain.jsonl")
    sp.set_defaults(func=cmd_discover)

    sp = sub.add_parser("transform", parents=[common], help="Hamiltonian and equations of motion")
    sp.add_argument("--lagrangian", required=True, help="lagrangian.json from discover")
    sp.add_argument("--data", default=None, help="trajectory for the energy drift")
    system_flags(sp)
    sp.set_defaults(func=cmd_transform)

    sp = sub.add_parser("predict", parents=[common], help="integrate the discovered equations")
    sp.add_argument("--lagrangian", required=True, help="lagrangian.json from discover")
    system_flags(sp)
    sp.add_argument("--draws", type=int, default=100, help="posterior draws for the 95%% band (0 = none)")
    sp.add_argument("--generalize", type=int, default=None, metavar="N",
                    help="replicate a discovered chain to N masses before predicting")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("noise-sweep", parents=[common], help="noise sensitivity table")
    system_flags(sp)
    sp.add_argument("--systems", nargs="+", default=None, help="systems to sweep")
    sp.add_argument("--levels", nargs="+", type=float, default=None, help="noise levels zeta")
    sp.add_argument("--seeds", type=int, default=5, help="seeds per level")
    sp.add_argument("--smooth", default=None, help="'auto' (default), 'none' or an odd window length")
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--burnin", type=int, default=None)
    sp.set_defaults(func=cmd_noise_sweep)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.resolve(args)
        return args.func(args, cfg)
    except (ConfigError, DatasetError, DictionaryError, TransformError, DiscoveryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except DegenerateError as exc:
        print(f"inference degenerate: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
