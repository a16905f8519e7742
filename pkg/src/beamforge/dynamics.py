"""Phase-space propagation of the trapped ion.

Two routes, used to cross-check each other everywhere:

  * analytic moment transport through the auxiliary-function integrals
    I1 = int dt/u^2 and I2 = int dt f/u^2 (every trajectory of the driven
    harmonic trap is an affine map of its initial point, so first and second
    moments close exactly);
  * seeded Monte-Carlo ensembles evolved per trajectory with a fixed-step
    fourth-order integrator (the thermal Wigner distribution of a quadratic
    Hamiltonian is transported along classical trajectories).

Ensemble members evolve independently; reductions into moments use numpy's
fixed-order pairwise summation, so results are identical for any worker count.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

from .axial import AuxiliaryPair, ControlWaveform
from .core import ThermalSpec, thermal_moments

DEFAULT_N_STEPS = 4000


@dataclass(frozen=True)
class MomentSet:
    """First and raw second moments of the axial (or radial) phase-space
    state: <z>, <p>, <z^2>, <p^2>, <zp + pz>. SI units."""

    mean_z: float
    mean_p: float
    z2: float
    p2: float
    zp_sym: float

    @property
    def var_z(self) -> float:
        return self.z2 - self.mean_z**2

    @property
    def var_p(self) -> float:
        return self.p2 - self.mean_p**2

    @property
    def cov_zp(self) -> float:
        return 0.5 * self.zp_sym - self.mean_z * self.mean_p

    def std_z(self) -> float:
        return math.sqrt(max(self.var_z, 0.0))

    def std_p(self) -> float:
        return math.sqrt(max(self.var_p, 0.0))


def thermal_initial_moments(spec: ThermalSpec) -> tuple[float, float]:
    """(<z^2>_0, <p^2>_0) of the thermal state; means and cross term vanish."""
    return thermal_moments(spec)


def initial_moment_set(spec: ThermalSpec) -> MomentSet:
    z2, p2 = thermal_moments(spec)
    return MomentSet(0.0, 0.0, z2, p2, 0.0)


@dataclass(frozen=True)
class ThermalEnsemble:
    """Seeded phase-space sample of a zero-mean Gaussian state, plus the
    exact second moments it was drawn from."""

    z: np.ndarray
    p: np.ndarray
    seed: int
    z2_exact: float
    p2_exact: float

    @property
    def n(self) -> int:
        return self.z.size


def sample_thermal(moments, n: int, seed: int) -> ThermalEnsemble:
    """Draw n independent zero-mean normal phase-space points with
    Var(z) = <z^2>_0 and Var(p) = <p^2>_0, zero z-p covariance.

    Stream layout (documented for reproducibility): one Philox stream keyed
    by the seed yields 2n standard normals in a single fixed-order pass;
    sample i uses entries 2i (position) and 2i+1 (momentum). Generation is
    centralized, so results never depend on worker count.
    """
    z2, p2 = moments
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    if not (z2 > 0.0 and p2 > 0.0):
        raise ValueError(f"variances must be positive, got {z2}, {p2}")
    rng = np.random.Generator(np.random.Philox(key=seed))
    normals = rng.standard_normal(2 * n)
    z = normals[0::2] * math.sqrt(z2)
    p = normals[1::2] * math.sqrt(p2)
    return ThermalEnsemble(z=z, p=p, seed=seed, z2_exact=z2, p2_exact=p2)


def moments_of(z, p=None) -> MomentSet:
    """Sample moments of an ensemble (fixed-order pairwise reduction)."""
    if p is None:
        z, p = z.z, z.p
    return MomentSet(
        mean_z=float(np.mean(z)),
        mean_p=float(np.mean(p)),
        z2=float(np.mean(z * z)),
        p2=float(np.mean(p * p)),
        zp_sym=2.0 * float(np.mean(z * p)),
    )


# ---------------------------------------------------------------------------
# invariant and its integrals

def invariant_value(z, p, t: float, pair: AuxiliaryPair):
    """I(t) = u(t) p - m u'(t) z + f(t), conserved along the driven
    evolution. Accepts scalars or arrays. kg m/s."""
    return pair.u(t) * p - pair.mass * pair.u(t, 1) * z + pair.f(t)


@dataclass(frozen=True)
class InvariantIntegrals:
    """Cumulative I1(t) = int dt/u^2 (s) and I2(t) = int dt f/u^2 (kg m) on a
    uniform grid, by composite Simpson quadrature. I3 (enters only the
    quantum phase, not the moments) is filled on request."""

    t: np.ndarray
    i1: np.ndarray
    i2: np.ndarray
    i3: np.ndarray = None

    def index_of(self, t: float) -> int:
        dt = self.t[1] - self.t[0]
        i = int(round(float(t) / dt))
        if not (0 <= i < self.t.size) or abs(self.t[i] - t) > 1e-9 * self.t[-1] + 1e-300:
            raise ValueError(f"t = {t} is not on the quadrature grid")
        return i


def compute_integrals(pair: AuxiliaryPair, grid_size: int = 4096,
                      include_i3: bool = False) -> InvariantIntegrals:
    """Cumulative quadrature of the invariant integrals on a uniform grid.

    grid_size must be even (composite Simpson pairs intervals). u must be
    positive on the grid.
    """
    if grid_size < 2 or grid_size % 2:
        raise ValueError(f"grid_size must be even and >= 2, got {grid_size}")
    t = np.linspace(0.0, pair.t_f, grid_size + 1)
    u = pair.u(t)
    if np.min(u) <= 0.0:
        raise ValueError(f"u must be positive on the grid, min = {np.min(u):.3e}")
    inv_u2 = 1.0 / (u * u)
    f = pair.f(t)
    i1 = cumulative_simpson(inv_u2, x=t, initial=0.0)
    i2 = cumulative_simpson(f * inv_u2, x=t, initial=0.0)
    i3 = None
    if include_i3:
        # integrand (f'/u'' - f^2/u)/u; at matched zeros of u'' the first
        # ratio has the finite limit f''/u'''
        ddu = pair.u(t, 2)
        df = pair.f(t, 1)
        scale = np.max(np.abs(ddu))
        small = np.abs(ddu) < 1e-9 * scale
        ratio = np.where(small,
                         pair.f(t, 2) / np.where(small, pair.u(t, 3), 1.0),
                         df / np.where(small, 1.0, ddu))
        i3 = cumulative_simpson((ratio - f * f / u) / u, x=t, initial=0.0)
    return InvariantIntegrals(t=t, i1=i1, i2=i2, i3=i3)


# ---------------------------------------------------------------------------
# analytic moment transport

def _transport_coefficients(pair: AuxiliaryPair, integrals: InvariantIntegrals):
    """Affine per-trajectory map (z, p) -> (A z + B p + C, D z + E p + F) on
    the quadrature grid, from the invariant solution of the driven oscillator."""
    t = integrals.t
    m = pair.mass
    u0 = pair.u(0.0)
    f0 = pair.f(0.0)
    u = pair.u(t)
    du = pair.u(t, 1)
    f = pair.f(t)
    i1, i2 = integrals.i1, integrals.i2

    A = u / u0
    B = u0 * u * i1 / m
    C = (u * i1 / m) * f0 - u * i2 / m
    D = m * du / u0
    E = u0 / u + u0 * du * i1
    F = (du * i1 + 1.0 / u) * f0 - du * i2 - f / u
    return A, B, C, D, E, F


def moment_tables(pair: AuxiliaryPair, integrals: InvariantIntegrals,
                  initial: MomentSet):
    """Moments at every grid time: (mean_z, mean_p, z2, p2, zp_sym) arrays."""
    A, B, C, D, E, F = _transport_coefficients(pair, integrals)
    z0, p0 = initial.mean_z, initial.mean_p
    z2, p2, zp = initial.z2, initial.p2, initial.zp_sym

    mean_z = A * z0 + B * p0 + C
    mean_p = D * z0 + E * p0 + F
    z2_t = A**2 * z2 + B**2 * p2 + C**2 + A * B * zp + 2 * A * C * z0 + 2 * B * C * p0
    p2_t = D**2 * z2 + E**2 * p2 + F**2 + D * E * zp + 2 * D * F * z0 + 2 * E * F * p0
    zp_t = (2 * A * D * z2 + 2 * B * E * p2 + (A * E + B * D) * zp
            + 2 * (A * F + C * D) * z0 + 2 * (B * F + C * E) * p0 + 2 * C * F)
    return mean_z, mean_p, z2_t, p2_t, zp_t


def analytic_moments(pair: AuxiliaryPair, integrals: InvariantIntegrals,
                     initial: MomentSet, t: float) -> MomentSet:
    """Closed-form moments at grid time t (general in the initial cross term)."""
    i = integrals.index_of(t)
    tables = moment_tables(pair, integrals, initial)
    return MomentSet(*(float(tab[i]) for tab in tables))


# ---------------------------------------------------------------------------
# Monte-Carlo ensemble evolution

@dataclass(frozen=True)
class TwoGaussianForce:
    """Axial force from two Gaussian electrodes at sampled voltages.

    Voltage tables are sampled on the integrator's half-step grid
    (2 n_steps + 1 entries). Samples leaving [z_lo, z_hi] are frozen and
    flagged escaped rather than erroring.
    """

    t_f: float
    mass: float
    U1_half: np.ndarray
    U2_half: np.ndarray
    amp1: float
    c1: float
    s1: float
    amp2: float
    c2: float
    s2: float
    charge: float
    z_lo: float
    z_hi: float


@dataclass
class EvolutionResult:
    """Checkpointed trajectory of an evolved ensemble."""

    times: np.ndarray            # checkpoint times, s
    moments: list                # MomentSet per checkpoint
    z: np.ndarray                # final positions
    p: np.ndarray                # final momenta
    drift_max: np.ndarray = None      # per-trajectory max |I(t) - I(0)|, kg m/s
    drift_history: np.ndarray = None  # running max over trajectories per checkpoint
    escaped: np.ndarray = None   # uint8 flags (potential forces only)

    @property
    def final_moments(self) -> MomentSet:
        return self.moments[-1]

    @property
    def escaped_fraction(self) -> float:
        if self.escaped is None:
            return 0.0
        return float(np.mean(self.escaped != 0))


def _harmonic_tables(force: ControlWaveform, t_f: float, n_steps: int):
    if force.k_fn is not None:
        t_half = np.linspace(0.0, t_f, 2 * n_steps + 1)
        return np.asarray(force.k_fn(t_half), dtype=float), \
            np.asarray(force.g_fn(t_half), dtype=float)
    if force.t.size != 2 * n_steps + 1:
        raise ValueError(
            f"grid-only waveform has {force.t.size} samples; integrating "
            f"{n_steps} steps needs {2 * n_steps + 1} (half-step grid)")
    return np.ascontiguousarray(force.k), np.ascontiguousarray(force.g)


def _run_segments(step_fn, n, threads, segments):
    """Run (j0, j1) step segments, calling back between them. step_fn
    receives (i0, i1, j0, j1) and evolves that sample slice in place."""
    if threads and threads > 1:
        bounds = np.linspace(0, n, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for j0, j1, after in segments:
                futures = [pool.submit(step_fn, bounds[c], bounds[c + 1], j0, j1)
                           for c in range(threads) if bounds[c] < bounds[c + 1]]
                for fut in futures:
                    fut.result()
                after()
    else:
        for j0, j1, after in segments:
            step_fn(0, n, j0, j1)
            after()


def evolve_ensemble(ensemble: ThermalEnsemble, force, t_f: float = None,
                    n_steps: int = DEFAULT_N_STEPS, checkpoint_steps=None,
                    pair: AuxiliaryPair = None, threads: int = 0) -> EvolutionResult:
    """Evolve every sample with fixed-step RK4 under the given force field.

    force is a ControlWaveform (force = g(t) - k(t) z) or a TwoGaussianForce
    (full electrode potential). checkpoint_steps lists step indices at which
    moments are recorded (the final step is always included). When pair is
    given, the per-trajectory invariant drift max |I(t) - I(0)| is tracked
    across all checkpoints. threads > 1 evolves sample chunks concurrently;
    results are identical for any thread count.
    """
    from . import _kernels

    if n_steps < 100:
        raise ValueError(f"n_steps must be >= 100, got {n_steps}")
    if t_f is None:
        t_f = force.t_f
    h = t_f / n_steps

    z = np.ascontiguousarray(ensemble.z, dtype=float).copy()
    p = np.ascontiguousarray(ensemble.p, dtype=float).copy()
    n = z.size

    if checkpoint_steps is None:
        checkpoints = [n_steps]
    else:
        checkpoints = sorted(set(int(c) for c in checkpoint_steps) | {n_steps})
        if checkpoints[0] < 0 or checkpoints[-1] > n_steps:
            raise ValueError("checkpoint steps must lie in [0, n_steps]")

    if isinstance(force, ControlWaveform):
        k_half, g_half = _harmonic_tables(force, t_f, n_steps)
        if not (np.all(np.isfinite(k_half)) and np.all(np.isfinite(g_half))):
            bad = np.where(~(np.isfinite(k_half) & np.isfinite(g_half)))[0][0]
            raise ValueError(f"non-finite force table at t = {bad * h / 2:.6e} s")
        escaped = None

        def step_fn(i0, i1, j0, j1):
            _kernels.harmonic_segment(z[i0:i1], p[i0:i1], k_half, g_half,
                                      j0, j1, h, force.mass)
    elif isinstance(force, TwoGaussianForce):
        if force.U1_half.size != 2 * n_steps + 1:
            raise ValueError(
                f"voltage tables have {force.U1_half.size} samples; integrating "
                f"{n_steps} steps needs {2 * n_steps + 1} (half-step grid)")
        if not (np.all(np.isfinite(force.U1_half)) and np.all(np.isfinite(force.U2_half))):
            bad = np.where(~(np.isfinite(force.U1_half) & np.isfinite(force.U2_half)))[0][0]
            raise ValueError(f"non-finite voltage at t = {bad * h / 2:.6e} s")
        escaped = np.zeros(n, dtype=np.uint8)

        def step_fn(i0, i1, j0, j1, f=force):
            _kernels.gauss_segment(z[i0:i1], p[i0:i1], escaped[i0:i1],
                                   f.U1_half, f.U2_half,
                                   f.amp1, f.c1, f.s1, f.amp2, f.c2, f.s2,
                                   f.charge, f.z_lo, f.z_hi, j0, j1, h, f.mass)
    else:
        raise TypeError(f"unsupported force field {type(force).__name__}")

    times = []
    moments = []
    drift_hist = []
    drift_max = None
    i_start = None
    if pair is not None:
        i_start = invariant_value(z, p, 0.0, pair)
        drift_max = np.zeros(n)

    def record(step):
        t_now = step * h
        times.append(t_now)
        moments.append(moments_of(z, p))
        if pair is not None:
            np.maximum(drift_max, np.abs(invariant_value(z, p, t_now, pair) - i_start),
                       out=drift_max)
            drift_hist.append(float(np.max(drift_max)))

    segments = []
    prev = 0
    for c in checkpoints:
        segments.append((prev, c, (lambda step=c: record(step))))
        prev = c

    _run_segments(step_fn, n, threads, segments)

    return EvolutionResult(times=np.asarray(times), moments=moments, z=z, p=p,
                           drift_max=drift_max,
                           drift_history=np.asarray(drift_hist) if drift_hist else None,
                           escaped=escaped)
