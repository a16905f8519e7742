"""Two-electrode voltage synthesis and the voltage-noise study.

The trap potential is modeled as V(z, t) = q [phi1(z) U1(t) + phi2(z) U2(t)]
with dimensionless Gaussian shape functions phi_i. Requiring V'(z0) = 0 and
V''(z0) = k(t) at each time gives a 2x2 linear system whose solution

    U1 = -phi2'(z0) k / (q W),   U2 = +phi1'(z0) k / (q W),
    W  = phi1'(z0) phi2''(z0) - phi2'(z0) phi1''(z0)

maps the designed harmonic controls to electrode voltages. Both voltages are
proportional to k, so the trap-center bridge across k ~ 0 stretches is
benign: the voltages vanish there.

Voltage uncertainty is injected either as one relative offset per electrode
per shot (default; matches smoothly distorted control curves) or as white
per-sample factors, both seeded.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .axial import AuxiliaryPair, ControlWaveform, extract_controls
from .core import IonSpecies, ThermalSpec
from . import dynamics
from .dynamics import TwoGaussianForce, evolve_ensemble, sample_thermal

ESCAPE_MARGIN_SIGMAS = 5.0


class DegenerateGeometryError(ValueError):
    """The electrode shape derivatives cannot realize the requested trap."""


@dataclass(frozen=True)
class Electrode:
    """Gaussian shape function phi(z) = amplitude * exp(-(z-center)^2/(2 sigma^2))."""

    amplitude: float
    center: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"electrode width must be positive, got {self.sigma}")

    def phi(self, z):
        d = z - self.center
        return self.amplitude * np.exp(-0.5 * d * d / self.sigma**2)

    def dphi(self, z):
        d = z - self.center
        return -self.amplitude * d / self.sigma**2 * np.exp(-0.5 * d * d / self.sigma**2)

    def ddphi(self, z):
        d = z - self.center
        s2 = self.sigma**2
        return self.amplitude * (d * d / s2**2 - 1.0 / s2) * np.exp(-0.5 * d * d / s2)


@dataclass(frozen=True)
class ElectrodeGeometry:
    """An adjacent electrode pair driving the axial potential."""

    e1: Electrode
    e2: Electrode

    @property
    def centers(self):
        return self.e1.center, self.e2.center

    @property
    def sigma_max(self) -> float:
        return max(self.e1.sigma, self.e2.sigma)

    def region(self, margin_sigmas: float = ESCAPE_MARGIN_SIGMAS):
        lo = min(self.centers) - margin_sigmas * self.sigma_max
        hi = max(self.centers) + margin_sigmas * self.sigma_max
        return lo, hi


def launch_geometry(amplitude: float = 0.2, spacing: float = 250e-6,
                    sigma: float = 200e-6) -> ElectrodeGeometry:
    """The default ejection geometry: equal Gaussians at z = 0 and z = spacing."""
    return ElectrodeGeometry(Electrode(amplitude, 0.0, sigma),
                             Electrode(amplitude, spacing, sigma))


@dataclass(frozen=True)
class VoltageTrace:
    """Sampled electrode voltages; grid matches the waveform it was built from."""

    t: np.ndarray
    U1: np.ndarray
    U2: np.ndarray
    provenance: str = "ideal"

    @property
    def t_f(self) -> float:
        return float(self.t[-1])

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.U1)), np.max(np.abs(self.U2))))


@dataclass(frozen=True)
class NoiseModel:
    """Relative voltage uncertainty. per_shot draws one factor per electrode
    per realization; white draws one factor per grid sample."""

    du_over_u: float
    mode: str = "per_shot"
    seed: int = 0

    def __post_init__(self):
        if self.du_over_u < 0:
            raise ValueError(f"relative uncertainty must be >= 0, got {self.du_over_u}")
        if self.mode not in ("per_shot", "white"):
            raise ValueError(f"noise mode must be per_shot or white, got {self.mode!r}")


def synthesize_voltages(waveform: ControlWaveform, geometry: ElectrodeGeometry,
                        species: IonSpecies) -> VoltageTrace:
    """Voltages realizing V'(z0) = 0 and V''(z0) = k(t) at every grid time."""
    z0, k = waveform.z0, waveform.k
    d1, d2 = geometry.e1.dphi(z0), geometry.e2.dphi(z0)
    dd1, dd2 = geometry.e1.ddphi(z0), geometry.e2.ddphi(z0)
    det = d1 * dd2 - d2 * dd1
    bad = np.abs(det) < 1e-12 * np.max(np.abs(det))
    if np.any(bad):
        t_bad = waveform.t[np.argmax(bad)]
        raise DegenerateGeometryError(
            f"degenerate electrode geometry at t = {t_bad:.6e} s "
            f"(shape derivative determinant ~ 0 on the trap path)")
    q = species.charge
    u1 = -d2 * k / (q * det)
    u2 = d1 * k / (q * det)
    return VoltageTrace(t=waveform.t.copy(), U1=u1, U2=u2, provenance="ideal")


def _perturb_arrays(trace: VoltageTrace, du: float, mode: str, rng) -> tuple:
    if mode == "per_shot":
        eta = rng.standard_normal(2)
        return trace.U1 * (1.0 + du * eta[0]), trace.U2 * (1.0 + du * eta[1])
    eta = rng.standard_normal((2, trace.t.size))
    return trace.U1 * (1.0 + du * eta[0]), trace.U2 * (1.0 + du * eta[1])


def perturb_voltages(trace: VoltageTrace, noise: NoiseModel) -> VoltageTrace:
    """Apply the noise model; deterministic under the model's seed."""
    if noise.du_over_u == 0.0:
        return replace(trace, provenance=f"perturbed(du=0, mode={noise.mode}, seed={noise.seed})")
    rng = np.random.Generator(np.random.Philox(key=noise.seed))
    u1, u2 = _perturb_arrays(trace, noise.du_over_u, noise.mode, rng)
    return VoltageTrace(t=trace.t, U1=u1, U2=u2,
                        provenance=f"perturbed(du={noise.du_over_u:g}, "
                                   f"mode={noise.mode}, seed={noise.seed})")


@dataclass(frozen=True)
class PotentialSlice:
    """The axial potential at one instant: V, V' and V'' as functions of z."""

    geometry: ElectrodeGeometry
    U1: float
    U2: float
    charge: float

    def v(self, z):
        return self.charge * (self.geometry.e1.phi(z) * self.U1
                              + self.geometry.e2.phi(z) * self.U2)

    def dv(self, z):
        return self.charge * (self.geometry.e1.dphi(z) * self.U1
                              + self.geometry.e2.dphi(z) * self.U2)

    def ddv(self, z):
        return self.charge * (self.geometry.e1.ddphi(z) * self.U1
                              + self.geometry.e2.ddphi(z) * self.U2)


def effective_potential(geometry: ElectrodeGeometry, U1: float, U2: float,
                        charge: float) -> PotentialSlice:
    """The potential generated by a voltage pair (energy units: J)."""
    return PotentialSlice(geometry, float(U1), float(U2), charge)


def make_force(geometry: ElectrodeGeometry, trace: VoltageTrace,
               species: IonSpecies) -> TwoGaussianForce:
    """Package a voltage trace as the full-potential force for the integrator.

    Trajectories leaving the modeled region (5 sigma beyond both electrode
    centers) are frozen and flagged escaped.
    """
    z_lo, z_hi = geometry.region()
    return TwoGaussianForce(
        t_f=trace.t_f, mass=species.mass,
        U1_half=np.ascontiguousarray(trace.U1), U2_half=np.ascontiguousarray(trace.U2),
        amp1=geometry.e1.amplitude, c1=geometry.e1.center, s1=geometry.e1.sigma,
        amp2=geometry.e2.amplitude, c2=geometry.e2.center, s2=geometry.e2.sigma,
        charge=species.charge, z_lo=z_lo, z_hi=z_hi)


# ---------------------------------------------------------------------------
# control reconstruction from voltages

def extract_effective_controls(geometry: ElectrodeGeometry, trace: VoltageTrace,
                               species: IonSpecies, search_window=None,
                               n_scan: int = 513) -> ControlWaveform:
    """Reconstruct (k, z0) from a voltage trace by locating the stationary
    point of V(z, t) at each grid time.

    The stationary point is bracketed on a scan grid over the search window
    (tracking the previous time's solution when several exist) and polished
    by bisection to 1e-12 m. Times with no stationary point in the window
    are flagged untrapped, not fatal.
    """
    if search_window is None:
        lo = min(geometry.centers) - 2.0 * geometry.sigma_max
        hi = max(geometry.centers) + 2.0 * geometry.sigma_max
    else:
        lo, hi = search_window
    zg = np.linspace(lo, hi, n_scan)
    q = species.charge

    d1g, d2g = geometry.e1.dphi(zg), geometry.e2.dphi(zg)
    # dV/q on the scan grid for all times at once: (n_t, n_scan)
    dv = np.outer(trace.U1, d1g) + np.outer(trace.U2, d2g)

    n_t = trace.t.size
    z_lo_arr = np.empty(n_t)
    z_hi_arr = np.empty(n_t)
    untrapped = np.zeros(n_t, dtype=bool)
    prev = 0.5 * (lo + hi)
    for j in range(n_t):
        row = dv[j]
        sign_change = np.nonzero(row[:-1] * row[1:] < 0.0)[0]
        exact = np.nonzero(row == 0.0)[0]
        candidates = []
        for i in sign_change:
            candidates.append((zg[i], zg[i + 1]))
        for i in exact:
            candidates.append((zg[i], zg[i]))
        if not candidates:
            untrapped[j] = True
            z_lo_arr[j] = z_hi_arr[j] = prev
            continue
        mids = [0.5 * (a + b) for a, b in candidates]
        pick = int(np.argmin([abs(mz - prev) for mz in mids]))
        z_lo_arr[j], z_hi_arr[j] = candidates[pick]
        prev = mids[pick]

    # lockstep bisection across all trapped times
    def dv_at(z, idx):
        return (trace.U1[idx] * geometry.e1.dphi(z)
                + trace.U2[idx] * geometry.e2.dphi(z))

    idx = np.nonzero(~untrapped)[0]
    a = z_lo_arr[idx].copy()
    b = z_hi_arr[idx].copy()
    fa = dv_at(a, idx)
    n_iter = max(1, int(math.ceil(math.log2(max((hi - lo) / 1e-12, 2.0)))))
    for _ in range(n_iter):
        mid = 0.5 * (a + b)
        fm = dv_at(mid, idx)
        left = fa * fm <= 0.0
        b = np.where(left, mid, b)
        a = np.where(left, a, mid)
        fa = np.where(left, fa, fm)
    z_star = np.full(n_t, np.nan)
    z_star[idx] = 0.5 * (a + b)
    z_star[untrapped] = np.interp(trace.t[untrapped], trace.t[idx], z_star[idx]) \
        if idx.size else 0.0

    k_eff = q * (trace.U1 * geometry.e1.ddphi(z_star)
                 + trace.U2 * geometry.e2.ddphi(z_star))
    g_eff = k_eff * z_star
    k_floor = 1e-6 * float(np.max(np.abs(k_eff))) if np.any(k_eff) else 0.0
    defined = (~untrapped) & (np.abs(k_eff) > k_floor)
    return ControlWaveform(t=trace.t, k=k_eff, g=g_eff, z0=z_star,
                           z0_defined=defined, k_floor=k_floor,
                           mass=species.mass, untrapped=untrapped)


# ---------------------------------------------------------------------------
# noise robustness study

@dataclass(frozen=True)
class NoiseSweepRow:
    """Aggregate beam statistics at one relative-uncertainty level."""

    du_over_u: float
    v_mean: float            # mean final velocity over all shots, m/s
    v_std: float             # pooled final-velocity spread, m/s
    r_eff: float             # mean over shots of Std(p_f)/Std(p_0)
    escaped_fraction: float
    rms_rel_deviation: float  # RMS over shots of (shot mean - ideal mean)/ideal


@dataclass(frozen=True)
class NoiseSweepResult:
    rows: tuple
    ideal_v_mean: float
    ideal_v_std: float
    ideal_r_eff: float
    shot_means: dict         # du_over_u -> ndarray of per-shot mean velocities


def _shot_rng(seed: int, shot: int):
    """Counter-block substream for one shot: disjoint from the base block."""
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, shot + 1, 0]))


def noise_sweep(pair: AuxiliaryPair, geometry: ElectrodeGeometry, species: IonSpecies,
                thermal: ThermalSpec, noise_levels, shots: int, n_samples: int,
                seed: int, mode: str = "per_shot", n_steps: int = 2000,
                threads: int = 0) -> NoiseSweepResult:
    """Full-potential Monte-Carlo sweep over voltage-uncertainty levels.

    Every shot perturbs the synthesized voltages with its own substream and
    evolves the same base ensemble in the resulting potential (not the
    harmonic approximation), so shot-to-ideal differences measure the noise
    response, not sampling noise. Shot s draws the same standard normals at
    every level, scaled by the level.
    """
    if shots < 10:
        raise ValueError(f"need at least 10 shots, got {shots}")
    wf = extract_controls(pair, grid_size=2 * n_steps)
    trace = synthesize_voltages(wf, geometry, species)
    base = sample_thermal(dynamics.thermal_initial_moments(thermal), n_samples, seed)
    m = species.mass
    std_p0 = float(np.std(base.p))

    def run(trace_s):
        force = make_force(geometry, trace_s, species)
        res = evolve_ensemble(base, force, n_steps=n_steps, threads=threads)
        v = res.p / m
        return (float(np.mean(v)), float(np.mean(v * v)),
                float(np.std(res.p)) / std_p0, res.escaped_fraction)

    ideal_mean, ideal_raw2, ideal_reff, _ = run(trace)
    ideal_std = math.sqrt(max(ideal_raw2 - ideal_mean**2, 0.0))

    rows = []
    shot_means = {}
    for level in noise_levels:
        means = np.empty(shots)
        raw2 = np.empty(shots)
        reffs = np.empty(shots)
        escaped = np.empty(shots)
        for s in range(shots):
            rng = _shot_rng(seed, s)
            u1, u2 = _perturb_arrays(trace, level, mode, rng)
            trace_s = VoltageTrace(t=trace.t, U1=u1, U2=u2,
                                   provenance=f"perturbed(du={level:g}, mode={mode}, shot={s})")
            means[s], raw2[s], reffs[s], escaped[s] = run(trace_s)
        v_mean = float(np.mean(means))
        v_std = math.sqrt(max(float(np.mean(raw2)) - v_mean**2, 0.0))
        rms_dev = math.sqrt(float(np.mean((means - ideal_mean) ** 2))) / abs(ideal_mean)
        rows.append(NoiseSweepRow(du_over_u=float(level), v_mean=v_mean, v_std=v_std,
                                  r_eff=float(np.mean(reffs)),
                                  escaped_fraction=float(np.mean(escaped)),
                                  rms_rel_deviation=rms_dev))
        shot_means[float(level)] = means
    return NoiseSweepResult(rows=tuple(rows), ideal_v_mean=ideal_mean,
                            ideal_v_std=ideal_std, ideal_r_eff=ideal_reff,
                            shot_means=shot_means)
