"""Radial beam tailoring, free flight and the einzel-lens impact spot.

The radial oscillators have a static center, so their design reduces to the
single auxiliary function u with f = 0 enforced structurally (no offset
coefficients exist at all). Momentum mode scales the outgoing momentum
spread by R_r (p_f = R_r p_0, at the cost of a 1/R_r wider cloud); position
mode scales the position spread instead, which widens the momenta and blows
the beam up in flight.

After the launch the ion flies freely for d_ff and crosses a thin einzel
lens with the target at its focal point:

    dr       = sqrt(<r^2> + (tbar/m)^2 <p^2> + (tbar/m) <rp + pr>)
    dalpha   = dr / d_ff
    dr_image = F dr dalpha / sqrt((F - d_ff)^2 dalpha^2 + dr^2)

with tbar = d_ff / v_z the mean time of flight.
"""

import math
from dataclasses import dataclass

import numpy as np

from .axial import (AuxiliaryPair, BoundaryConditions, extract_controls,
                    solve_constrained_polynomials)
from .core import IonSpecies, ThermalSpec
from . import dynamics
from .dynamics import MomentSet, analytic_moments, compute_integrals, evolve_ensemble, sample_thermal


@dataclass(frozen=True)
class RadialTargets:
    """Radial scaling protocol: boundary frequencies (rad/s), scaling mode
    (momentum or position), scaling factor R_r > 0, duration t_f (s)."""

    omega_r0: float
    omega_rf: float
    mode: str
    R_r: float
    t_f: float

    def __post_init__(self):
        if not (self.omega_r0 > 0 and self.omega_rf > 0):
            raise ValueError("radial frequencies must be positive")
        if not self.R_r > 0:
            raise ValueError(f"radial scaling factor must be positive, got {self.R_r}")
        if self.mode not in ("momentum", "position"):
            raise ValueError(f"scaling mode must be momentum or position, got {self.mode!r}")
        if not self.t_f > 0:
            raise ValueError("protocol duration must be positive")


@dataclass(frozen=True)
class BeamlineSpec:
    """Free-flight distance to the lens (m), lens focal length (m), mean
    longitudinal velocity (m/s)."""

    d_ff: float
    focal_length: float
    v_z: float

    def __post_init__(self):
        if not (self.d_ff > 0 and self.focal_length > 0 and self.v_z > 0):
            raise ValueError("beamline lengths and velocity must be positive")

    @property
    def tbar(self) -> float:
        return self.d_ff / self.v_z


def design_radial(targets: RadialTargets, mass: float, u_mid: float = None) -> AuxiliaryPair:
    """Design the radial frequency protocol via the u-only boundary system.

    momentum mode: u_f = 1/R_r, so p_f = R_r p_0 per trajectory;
    position mode: u_f = R_r, so the position spread scales by R_r at t_f
    (plus the I1 shear term that the momentum spread rides in on).
    """
    uf = 1.0 / targets.R_r if targets.mode == "momentum" else targets.R_r
    bcs = BoundaryConditions(
        u0=1.0, du0=0.0, ddu0=-targets.omega_r0**2, dddu0=0.0,
        uf=uf, duf=0.0, dduf=-uf * targets.omega_rf**2, ddduf=0.0,
        f0=0.0, df0=0.0, ddf0=0.0, ff=0.0, dff=0.0, ddff=0.0,
        t_f=targets.t_f, mass=mass)
    return solve_constrained_polynomials(bcs, u_mid=u_mid, free=(0.0, 0.0),
                                         with_offset=False, targets=targets)


def free_flight_dispersion(moments: MomentSet, beamline: BeamlineSpec,
                           species: IonSpecies) -> float:
    """Radial width (m) after the free flight, from the launch moments.

    Uses raw second moments: valid for zero-mean states, and the cross term
    is included (the scaling protocols shear the cloud).
    """
    tm = beamline.tbar / species.mass
    dr2 = moments.z2 + tm * tm * moments.p2 + tm * moments.zp_sym
    return math.sqrt(max(dr2, 0.0))


def beam_divergence(dr: float, beamline: BeamlineSpec) -> float:
    """Angular spread at the lens from the ingoing radial width."""
    return dr / beamline.d_ff


def lens_impact_spread(dr: float, beamline: BeamlineSpec) -> float:
    """Spot radius (m) at the focal point of the thin einzel lens."""
    if not dr > 0:
        raise ValueError(f"lens input width must be positive, got {dr}")
    da = beam_divergence(dr, beamline)
    f, dff = beamline.focal_length, beamline.d_ff
    return f * dr * da / math.sqrt((f - dff) ** 2 * da * da + dr * dr)


def radial_launch_moments(pair: AuxiliaryPair, thermal: ThermalSpec,
                          grid_size: int = 4096) -> MomentSet:
    """Analytic radial moments at the end of the scaling protocol."""
    integrals = compute_integrals(pair, grid_size)
    return analytic_moments(pair, integrals, dynamics.initial_moment_set(thermal),
                            pair.t_f)


# ---------------------------------------------------------------------------
# sweeps and the end-to-end report

@dataclass(frozen=True)
class RadialSweepRow:
    R_r: float
    dr_at_lens: float
    dalpha: float
    dr_impact: float


def radial_scaling_sweep(r_values, base: RadialTargets, thermal: ThermalSpec,
                         beamline: BeamlineSpec, species: IonSpecies) -> list:
    """Impact-spot table over the scaling factor, via analytic moments."""
    rows = []
    for r in r_values:
        targets = RadialTargets(omega_r0=base.omega_r0, omega_rf=base.omega_rf,
                                mode=base.mode, R_r=float(r), t_f=base.t_f)
        pair = design_radial(targets, species.mass)
        launch = radial_launch_moments(pair, thermal)
        dr = free_flight_dispersion(launch, beamline, species)
        rows.append(RadialSweepRow(R_r=float(r), dr_at_lens=dr,
                                   dalpha=beam_divergence(dr, beamline),
                                   dr_impact=lens_impact_spread(dr, beamline)))
    return rows


def thermal_benchmark(thermal: ThermalSpec, beamline: BeamlineSpec,
                      species: IonSpecies) -> tuple[float, float]:
    """(dr, dr_impact) for the unmanipulated thermal state (no radial drive)."""
    z2, p2 = dynamics.thermal_initial_moments(thermal)
    dr = free_flight_dispersion(MomentSet(0.0, 0.0, z2, p2, 0.0), beamline, species)
    return dr, lens_impact_spread(dr, beamline)


@dataclass(frozen=True)
class BeamReport:
    """End-to-end beam statistics: extraction velocity, radial dispersion,
    divergence and lens spot, with the thermal benchmark alongside."""

    v_mean: float
    v_std: float
    axial_escaped_fraction: float
    axial_engine: str          # "harmonic" or "full-potential(noise=...)"
    dr_at_lens: float
    dalpha: float
    dr_impact: float
    benchmark_dr: float
    benchmark_impact: float
    radial_mode: str
    radial_R: float
    sub_micron_spot: bool
    seeds: dict

    def to_text(self) -> str:
        lines = ["beam report"]
        lines.append(f"  axial engine            {self.axial_engine}")
        lines.append(f"  extraction velocity     {self.v_mean:.6e} m/s "
                     f"(std {self.v_std:.6e} m/s)")
        lines.append(f"  axial escaped fraction  {self.axial_escaped_fraction:.4f}")
        lines.append(f"  radial drive            {self.radial_mode} mode, R_r = {self.radial_R:g}")
        lines.append(f"  radial width at lens    {self.dr_at_lens:.6e} m")
        lines.append(f"  beam divergence         {self.dalpha:.6e} rad")
        lines.append(f"  impact spot radius      {self.dr_impact:.6e} m"
                     f" ({'below' if self.sub_micron_spot else 'above'} 1 um)")
        lines.append(f"  thermal benchmark       {self.benchmark_dr:.6e} m at lens, "
                     f"{self.benchmark_impact:.6e} m impact")
        lines.append(f"  seeds                   {self.seeds}")
        return "\n".join(lines)


def end_to_end_report(axial_pair: AuxiliaryPair, radial_pair: AuxiliaryPair,
                      geometry, beamline: BeamlineSpec, species: IonSpecies,
                      thermal_axial: ThermalSpec, thermal_radial: ThermalSpec,
                      seeds: dict, n_samples: int = 10000, n_steps: int = 4000,
                      noise=None, shots: int = 50, threads: int = 0) -> BeamReport:
    """Compose the full pipeline: axial ejection (ideal waveform, or noisy
    voltages in the full electrode potential), radial scaling, free flight,
    einzel lens."""
    from . import electrodes

    m = species.mass
    axial_seed = int(seeds.get("axial", 0))
    radial_seed = int(seeds.get("radial", 1))

    if noise is not None and noise.du_over_u > 0:
        sweep = electrodes.noise_sweep(axial_pair, geometry, species, thermal_axial,
                                       [noise.du_over_u], shots=shots,
                                       n_samples=n_samples, seed=axial_seed,
                                       mode=noise.mode, n_steps=min(n_steps, 2000),
                                       threads=threads)
        row = sweep.rows[0]
        v_mean, v_std, escaped = row.v_mean, row.v_std, row.escaped_fraction
        engine = f"full-potential(du/U={noise.du_over_u:g}, mode={noise.mode}, shots={shots})"
    else:
        ens = sample_thermal(dynamics.thermal_initial_moments(thermal_axial),
                             n_samples, axial_seed)
        wf = extract_controls(axial_pair)
        res = evolve_ensemble(ens, wf, n_steps=n_steps, threads=threads)
        v = res.p / m
        v_mean, v_std = float(np.mean(v)), float(np.std(v))
        escaped = 0.0
        engine = "harmonic"

    rens = sample_thermal(dynamics.thermal_initial_moments(thermal_radial),
                          n_samples, radial_seed)
    rwf = extract_controls(radial_pair)
    rres = evolve_ensemble(rens, rwf, n_steps=n_steps, threads=threads)
    launch = dynamics.moments_of(rres.z, rres.p)
    dr = free_flight_dispersion(launch, beamline, species)
    impact = lens_impact_spread(dr, beamline)
    bench_dr, bench_impact = thermal_benchmark(thermal_radial, beamline, species)

    rt = radial_pair.targets
    return BeamReport(
        v_mean=v_mean, v_std=v_std, axial_escaped_fraction=escaped,
        axial_engine=engine, dr_at_lens=dr,
        dalpha=beam_divergence(dr, beamline), dr_impact=impact,
        benchmark_dr=bench_dr, benchmark_impact=bench_impact,
        radial_mode=rt.mode if rt is not None else "unknown",
        radial_R=rt.R_r if rt is not None else float("nan"),
        sub_micron_spot=impact < 1e-6,
        seeds={"axial": axial_seed, "radial": radial_seed},
    )
