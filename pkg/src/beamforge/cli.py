"""Command-line front end.

    beamforge design   --config run.cfg --out OUT
    beamforge simulate --config run.cfg --out OUT
    beamforge sweep    --config run.cfg --out OUT
    beamforge report   --config run.cfg --out OUT

Every run writes the fully resolved configuration, its outputs, and a
manifest with per-file checksums. Identical configuration and seeds give
byte-identical CSVs regardless of --threads. BEAMFORGE_OUT overrides --out.

Exit codes: 0 success, 1 usage/parse errors, 2 design validation failure.
"""

import argparse
import hashlib
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, artifacts, beamline, dynamics
from ._kernels import BACKEND
from .axial import (AxialTargets, DesignError, build_axial_design,
                    extract_controls, optimize_free_coefficients, peak_potential_energy,
                    validate_design)
from .beamline import BeamlineSpec, RadialTargets, design_radial
from .config import ConfigError, RunConfig, load_config, resolve_config
from .core import E_CHARGE, IonSpecies, ThermalSpec
from .electrodes import (Electrode, ElectrodeGeometry, NoiseModel,
                         extract_effective_controls, noise_sweep, perturb_voltages,
                         synthesize_voltages)

EV = E_CHARGE  # 1 eV in J


def _fmt(x) -> str:
    """Scientific notation, 17 significant digits (bit-exact round trip)."""
    return f"{float(x):.16e}"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_, int, np.integer)):
        return str(int(v))
    return _fmt(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def write_manifest(out: Path, digest: str):
    files = sorted(p.name for p in out.iterdir()
                   if p.is_file() and p.name != "manifest.txt")
    lines = [f"config_digest = {digest}",
             f"version = {__version__}",
             f"kernel_backend = {BACKEND}"]
    for name in files:
        lines.append(f"file {name} = {_sha256(out / name)}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# config -> domain objects

def species_of(cfg: RunConfig) -> IonSpecies:
    return IonSpecies(mass=cfg.species_mass, charge=cfg.species_charge,
                      name=cfg.species_name)


def axial_targets_of(cfg: RunConfig) -> AxialTargets:
    return AxialTargets(R=cfg.axial_R, P=cfg.species_mass * cfg.axial_v_target,
                        omega0=cfg.axial_omega0, omegaf=cfg.axial_omegaf,
                        d=cfg.axial_d, v=cfg.axial_v_center, t_f=cfg.axial_t_f)


def radial_targets_of(cfg: RunConfig) -> RadialTargets:
    return RadialTargets(omega_r0=cfg.radial_omega0, omega_rf=cfg.radial_omegaf,
                         mode=cfg.radial_mode, R_r=cfg.radial_R, t_f=cfg.radial_t_f)


def geometry_of(cfg: RunConfig) -> ElectrodeGeometry:
    return ElectrodeGeometry(
        Electrode(cfg.geometry_amp1, cfg.geometry_center1, cfg.geometry_sigma1),
        Electrode(cfg.geometry_amp2, cfg.geometry_center2, cfg.geometry_sigma2))


def beamline_of(cfg: RunConfig) -> BeamlineSpec:
    return BeamlineSpec(d_ff=cfg.beamline_d_ff, focal_length=cfg.beamline_focal_length,
                        v_z=cfg.beamline_v_z)


def thermal_axial_of(cfg: RunConfig) -> ThermalSpec:
    return ThermalSpec(cfg.thermal_T0, cfg.axial_omega0, cfg.species_mass)


def thermal_radial_of(cfg: RunConfig) -> ThermalSpec:
    return ThermalSpec(cfg.thermal_T0, cfg.radial_omega0, cfg.species_mass)


def derived_seeds(master: int) -> dict:
    """Deterministic per-purpose integer seeds from the master seed."""
    out = {}
    for i, name in enumerate(("axial", "radial", "noise")):
        ss = np.random.SeedSequence(entropy=master, spawn_key=(i,))
        out[name] = int(ss.generate_state(1, np.uint64)[0])
    return out


def _u_mid(cfg: RunConfig):
    return cfg.axial_u_mid if cfg.axial_u_mid > 0 else None


def build_designs(cfg: RunConfig):
    """Axial (and optional radial) designs from the configuration."""
    targets = axial_targets_of(cfg)
    pair = build_axial_design(targets, cfg.species_mass, u_mid=_u_mid(cfg))
    if cfg.axial_optimize:
        pair = optimize_free_coefficients(pair, thermal_axial_of(cfg))
    radial_pair = None
    if cfg.radial_mode != "none":
        radial_pair = design_radial(radial_targets_of(cfg), cfg.species_mass)
    return pair, radial_pair


# ---------------------------------------------------------------------------
# commands

def cmd_design(cfg: RunConfig, out: Path) -> int:
    pair, radial_pair = build_designs(cfg)
    report = validate_design(pair)
    (out / "axial_design.txt").write_text(artifacts.design_artifact_text(pair, report),
                                          encoding="utf-8")
    (out / "validation.txt").write_text(report.to_text() + "\n", encoding="utf-8")

    wf = extract_controls(pair, cfg.sim_grid_size)
    write_csv(out / "waveform.csv", ["t", "k", "g", "z0", "z0_defined"],
              zip(wf.t, wf.k, wf.g, wf.z0, wf.z0_defined.astype(int)))

    ok = report.passed
    if radial_pair is not None:
        rreport = validate_design(radial_pair)
        (out / "radial_design.txt").write_text(
            artifacts.design_artifact_text(radial_pair, rreport), encoding="utf-8")
        rwf = extract_controls(radial_pair, cfg.sim_grid_size)
        write_csv(out / "waveform_radial.csv", ["t", "k", "g"],
                  zip(rwf.t, rwf.k, rwf.g))
        ok = ok and rreport.passed
    if not ok:
        print("design validation FAILED; see validation.txt", file=sys.stderr)
        return 2
    print(f"design ok: max bc residual {report.max_bc_residual:.3e}, "
          f"u_min {report.u_min:.4f}")
    return 0


def _load_or_build_designs(cfg: RunConfig, design_path):
    if design_path is not None:
        path = Path(design_path)
        if not path.exists():
            raise FileNotFoundError(f"design file not found: {path}")
        pair = artifacts.parse_design_artifact(path.read_text(encoding="utf-8"))
        radial_pair = None
        if cfg.radial_mode != "none":
            radial_pair = design_radial(radial_targets_of(cfg), cfg.species_mass)
        return pair, radial_pair
    return build_designs(cfg)


def cmd_simulate(cfg: RunConfig, out: Path, design_path=None) -> int:
    species = species_of(cfg)
    pair, radial_pair = _load_or_build_designs(cfg, design_path)
    seeds = derived_seeds(cfg.run_seed)
    thermal = thermal_axial_of(cfg)
    geometry = geometry_of(cfg)
    n_steps = cfg.sim_n_steps

    (out / "axial_design.txt").write_text(artifacts.design_artifact_text(pair),
                                          encoding="utf-8")

    # ideal harmonic run with checkpointed moments and invariant drift
    ens = dynamics.sample_thermal(dynamics.thermal_initial_moments(thermal),
                                  cfg.sim_n_samples, seeds["axial"])
    wf = extract_controls(pair, cfg.sim_grid_size)
    step = max(n_steps // 100, 1)
    res = dynamics.evolve_ensemble(ens, wf, n_steps=n_steps,
                                   checkpoint_steps=range(0, n_steps + 1, step),
                                   pair=pair, threads=cfg.run_threads)
    rows = []
    for t, mset, drift in zip(res.times, res.moments, res.drift_history):
        rows.append((t, mset.mean_z, mset.mean_p, mset.var_z, mset.var_p,
                     mset.cov_zp, drift))
    write_csv(out / "trajectory.csv",
              ["t", "mean_z", "mean_p", "var_z", "var_p", "cov_zp",
               "invariant_drift_max"], rows)
    write_csv(out / "snapshot_initial.csv", ["z", "p"], zip(ens.z, ens.p))
    write_csv(out / "snapshot_final.csv", ["z", "p"], zip(res.z, res.p))

    # electrode voltages for the same design (half-step grid of the simulation)
    wf_half = extract_controls(pair, 2 * n_steps)
    trace = synthesize_voltages(wf_half, geometry, species)
    write_csv(out / "voltages.csv", ["t", "U1", "U2"], zip(trace.t, trace.U1, trace.U2))

    report_lines = []
    if cfg.noise_du_over_u > 0:
        noise = NoiseModel(cfg.noise_du_over_u, cfg.noise_mode, seeds["noise"])
        perturbed = perturb_voltages(trace, noise)
        write_csv(out / "voltages_perturbed.csv", ["t", "U1", "U2"],
                  zip(perturbed.t, perturbed.U1, perturbed.U2))
        eff = extract_effective_controls(geometry, perturbed, species)
        write_csv(out / "controls_effective.csv", ["t", "k", "z0", "untrapped"],
                  zip(eff.t, eff.k, eff.z0, eff.untrapped.astype(int)))
        sweep = noise_sweep(pair, geometry, species, thermal, [cfg.noise_du_over_u],
                            shots=cfg.noise_shots, n_samples=cfg.sim_sweep_n_samples,
                            seed=seeds["noise"], mode=cfg.noise_mode,
                            n_steps=cfg.sim_sweep_n_steps, threads=cfg.run_threads)
        row = sweep.rows[0]
        report_lines += [
            f"noisy run (du/U = {cfg.noise_du_over_u:g}, mode {cfg.noise_mode}, "
            f"shots {cfg.noise_shots})",
            f"  v_mean {row.v_mean:.6e} m/s, v_std {row.v_std:.6e} m/s",
            f"  effective R {row.r_eff:.6f}, escaped fraction {row.escaped_fraction:.4f}",
            f"  ideal full-potential v_mean {sweep.ideal_v_mean:.6e} m/s",
        ]

    v = res.p / species.mass
    v_mean, v_std = float(np.mean(v)), float(np.std(v))
    report_lines.insert(0, f"ideal harmonic run: v_mean {v_mean:.6e} m/s, "
                           f"v_std {v_std:.6e} m/s (n = {cfg.sim_n_samples})")

    if radial_pair is not None:
        noise = None
        if cfg.noise_du_over_u > 0:
            noise = NoiseModel(cfg.noise_du_over_u, cfg.noise_mode, seeds["noise"])
        beam = beamline.end_to_end_report(
            pair, radial_pair, geometry, beamline_of(cfg), species,
            thermal, thermal_radial_of(cfg), seeds,
            n_samples=cfg.sim_n_samples, n_steps=n_steps, noise=noise,
            shots=cfg.noise_shots, threads=cfg.run_threads)
        report_lines.append(beam.to_text())
    (out / "beam_report.txt").write_text("\n".join(report_lines) + "\n", encoding="utf-8")
    print(f"simulate ok: v_mean {v_mean:.6e} m/s (target "
          f"{cfg.axial_v_target:.6e} m/s)")
    return 0


def _sweep_noise(cfg, out):
    pair, _ = build_designs(cfg)
    seeds = derived_seeds(cfg.run_seed)
    res = noise_sweep(pair, geometry_of(cfg), species_of(cfg), thermal_axial_of(cfg),
                      cfg.sweep_values, shots=cfg.noise_shots,
                      n_samples=cfg.sim_sweep_n_samples, seed=seeds["noise"],
                      mode=cfg.noise_mode, n_steps=cfg.sim_sweep_n_steps,
                      threads=cfg.run_threads)
    write_csv(out / "sweep.csv",
              ["du_over_u", "v_mean", "v_std", "r_eff", "escaped_fraction"],
              [(r.du_over_u, r.v_mean, r.v_std, r.r_eff, r.escaped_fraction)
               for r in res.rows])


def _sweep_temperature(cfg, out):
    rows = []
    for t0 in cfg.sweep_values:
        thermal = ThermalSpec(t0, cfg.axial_omega0, cfg.species_mass)
        pair = build_axial_design(axial_targets_of(cfg), cfg.species_mass,
                                  u_mid=_u_mid(cfg))
        baseline = peak_potential_energy(pair, thermal)
        optimized = optimize_free_coefficients(pair, thermal)
        peak = peak_potential_energy(optimized, thermal)
        rows.append((t0, baseline, peak, peak / EV))
    write_csv(out / "sweep.csv",
              ["T0", "ep_baseline_J", "ep_optimized_J", "ep_optimized_eV"], rows)


def _sweep_radial_scaling(cfg, out):
    rows = beamline.radial_scaling_sweep(
        cfg.sweep_values, radial_targets_of(cfg), thermal_radial_of(cfg),
        beamline_of(cfg), species_of(cfg))
    write_csv(out / "sweep.csv", ["R_r", "dr_at_lens", "dalpha", "dr_impact"],
              [(r.R_r, r.dr_at_lens, r.dalpha, r.dr_impact) for r in rows])


def _sweep_velocity(cfg, out):
    thermal = thermal_axial_of(cfg)
    rows = []
    for v in cfg.sweep_values:
        targets = AxialTargets(R=cfg.axial_R, P=cfg.species_mass * v,
                               omega0=cfg.axial_omega0, omegaf=cfg.axial_omegaf,
                               d=cfg.axial_d, v=2.0 * v, t_f=cfg.axial_t_f)
        pair = build_axial_design(targets, cfg.species_mass, u_mid=_u_mid(cfg))
        baseline = peak_potential_energy(pair, thermal)
        optimized = optimize_free_coefficients(pair, thermal)
        peak = peak_potential_energy(optimized, thermal)
        rows.append((v, baseline, peak, peak / EV))
    write_csv(out / "sweep.csv",
              ["v_target", "ep_baseline_J", "ep_optimized_J", "ep_optimized_eV"], rows)


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    if not cfg.sweep_axis:
        print("error: sweep.axis not set", file=sys.stderr)
        return 1
    if not cfg.sweep_values:
        print("error: sweep.values is empty", file=sys.stderr)
        return 1
    {"noise": _sweep_noise,
     "temperature": _sweep_temperature,
     "radial_scaling": _sweep_radial_scaling,
     "velocity": _sweep_velocity}[cfg.sweep_axis](cfg, out)
    print(f"sweep ok: axis {cfg.sweep_axis}, {len(cfg.sweep_values)} values")
    return 0


def cmd_report(cfg: RunConfig, out: Path) -> int:
    species = species_of(cfg)
    pair, radial_pair = build_designs(cfg)
    if radial_pair is None:
        print("error: report needs radial.mode = momentum or position", file=sys.stderr)
        return 1
    seeds = derived_seeds(cfg.run_seed)
    noise = None
    if cfg.noise_du_over_u > 0:
        noise = NoiseModel(cfg.noise_du_over_u, cfg.noise_mode, seeds["noise"])
    beam = beamline.end_to_end_report(
        pair, radial_pair, geometry_of(cfg), beamline_of(cfg), species,
        thermal_axial_of(cfg), thermal_radial_of(cfg), seeds,
        n_samples=cfg.sim_n_samples, n_steps=cfg.sim_n_steps, noise=noise,
        shots=cfg.noise_shots, threads=cfg.run_threads)
    (out / "beam_report.txt").write_text(beam.to_text() + "\n", encoding="utf-8")
    print(beam.to_text())
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamforge",
        description="design and simulate single-ion extraction from a Paul trap")
    parser.add_argument("command", choices=["design", "simulate", "sweep", "report"])
    parser.add_argument("--config", required=True, help="run configuration file")
    parser.add_argument("--out", default=None,
                        help="output directory (BEAMFORGE_OUT overrides)")
    parser.add_argument("--seed", type=int, default=None, help="override run.seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads; 0 means sequential")
    parser.add_argument("--design", default=None,
                        help="existing design artifact to simulate (simulate only)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1

    if args.seed is not None:
        cfg.run_seed = args.seed
    if args.threads is not None:
        cfg.run_threads = args.threads
    out_dir = os.environ.get("BEAMFORGE_OUT") or args.out or cfg.run_out_dir
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    resolved = resolve_config(cfg)
    (out / "resolved.cfg").write_text(resolved, encoding="utf-8")
    digest = hashlib.sha256(resolved.encode()).hexdigest()

    try:
        if args.command == "design":
            code = cmd_design(cfg, out)
        elif args.command == "simulate":
            code = cmd_simulate(cfg, out, design_path=args.design)
        elif args.command == "sweep":
            code = cmd_sweep(cfg, out)
        else:
            code = cmd_report(cfg, out)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DesignError as exc:
        print(f"design failed: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    write_manifest(out, digest)
    return code


if __name__ == "__main__":
    sys.exit(main())
