"""Shared physics layer: constants, ion species, thermal moments, polynomials,
root bracketing.

All quantities are SI throughout the package. Angular frequencies are stored
in rad/s, never Hz; the CLI converts cyclic-frequency inputs (MHz etc.) at the
boundary.
"""

from dataclasses import dataclass, field

import numpy as np

HBAR = 1.054571817e-34     # reduced Planck constant, J*s
KB = 1.380649e-23          # Boltzmann constant, J/K
E_CHARGE = 1.602176634e-19  # elementary charge, C
AMU = 1.66053907e-27       # atomic mass unit, kg

# mass of the N2+ molecular ion, kg (2 x 14.003 u; the missing-electron
# correction is < 2e-5 relative and ignored)
N2_MASS = 28.006 * AMU

MAX_POLY_DEGREE = 11


class DesignError(ValueError):
    """A control design could not be constructed from the given inputs."""


@dataclass(frozen=True)
class IonSpecies:
    """A trapped ion: mass in kg, charge in C (integer multiple of e)."""

    mass: float
    charge: float
    name: str = ""

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"ion mass must be positive, got {self.mass}")
        if self.charge == 0:
            raise ValueError("ion charge must be nonzero")


def nitrogen_ion() -> IonSpecies:
    """Singly charged molecular nitrogen, the default projectile."""
    return IonSpecies(mass=N2_MASS, charge=E_CHARGE, name="N2+")


@dataclass(frozen=True)
class ThermalSpec:
    """Initial thermal state: temperature in K, reference trap angular
    frequency in rad/s, ion mass in kg."""

    temperature: float
    omega_ref: float
    mass: float

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if not self.omega_ref > 0:
            raise ValueError(f"omega_ref must be positive, got {self.omega_ref}")
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")


def coth_from_argument(x: float) -> float:
    """coth(x) for x >= 0, stable at both temperature extremes.

    x > 30 returns 1 (saturated); x < 1e-6 uses the Laurent expansion
    1/x + x/3 (classical limit); x = 0 (T0 = 0 maps to x = inf upstream,
    so x = 0 never reaches the singular branch here).
    """
    if x > 30.0:
        return 1.0
    if x < 1e-6:
        return 1.0 / x + x / 3.0
    return 1.0 / np.tanh(x)


def thermal_moments(spec: ThermalSpec) -> tuple[float, float]:
    """Second moments (<z^2>_0, <p^2>_0) of a thermal oscillator state.

    <z^2>_0 = hbar/(2 m w) * coth(hbar w / (2 kB T0))  [m^2]
    <p^2>_0 = m hbar w / 2 * coth(hbar w / (2 kB T0))  [kg^2 m^2 / s^2]

    At T0 = 0 the coth factor is exactly 1 (ground state).
    """
    m, w, t0 = spec.mass, spec.omega_ref, spec.temperature
    if t0 == 0.0:
        c = 1.0
    else:
        c = coth_from_argument(HBAR * w / (2.0 * KB * t0))
    z2 = HBAR / (2.0 * m * w) * c
    p2 = m * HBAR * w / 2.0 * c
    return z2, p2


_SPLIT = 134217729.0  # 2**27 + 1, Dekker splitting constant


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _two_prod(a, b):
    p = a * b
    ca = _SPLIT * a
    ah = ca - (ca - a)
    al = a - ah
    cb = _SPLIT * b
    bh = cb - (cb - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _comp_horner_scalar(heads, tails, x: float) -> float:
    s = heads[-1]
    e = tails[-1]
    for h, tl in zip(reversed(heads[:-1]), reversed(tails[:-1])):
        p, ep = _two_prod(s, x)
        s, es = _two_sum(p, h)
        e = e * x + ((ep + es) + tl)
    return s + e


def _comp_horner_array(heads, tails, x: np.ndarray) -> np.ndarray:
    s = np.full_like(x, heads[-1])
    e = np.full_like(x, tails[-1])
    for h, tl in zip(reversed(heads[:-1]), reversed(tails[:-1])):
        p, ep = _two_prod(s, x)
        s, es = _two_sum(p, h)
        e = e * x + ((ep + es) + tl)
    return s + e


@dataclass(frozen=True)
class Polynomial:
    """Polynomial in normalized time s = t/t_f with exact derivatives.

    coefficients[j] multiplies s**j. Evaluation and the first three
    derivatives are computed analytically (chain rule over s = t/t_f);
    no numerical differentiation anywhere. Evaluation uses compensated
    Horner summation: the boundary-value systems produce coefficients
    orders of magnitude above the function values, and plain Horner's
    cancellation error would put a floor under every downstream
    convergence measurement (forces, invariant drift).
    """

    coefficients: tuple
    t_f: float
    _dcoeffs: tuple = field(init=False, repr=False, compare=False)

    def __init__(self, coefficients, t_f: float):
        coefs = tuple(float(c) for c in coefficients)
        if len(coefs) == 0:
            coefs = (0.0,)
        if len(coefs) - 1 > MAX_POLY_DEGREE:
            raise ValueError(f"degree {len(coefs) - 1} exceeds {MAX_POLY_DEGREE}")
        if not all(np.isfinite(coefs)):
            raise ValueError("polynomial coefficients must be finite")
        if not t_f > 0:
            raise ValueError(f"duration must be positive, got {t_f}")
        object.__setattr__(self, "coefficients", coefs)
        object.__setattr__(self, "t_f", float(t_f))
        # s-domain coefficient tables for derivative orders 0..3, kept as
        # exact head/tail pairs so the j * c_j products introduce no rounding
        # ahead of the compensated evaluation
        tables = [(coefs, (0.0,) * len(coefs))]
        for _ in range(3):
            heads, tails = tables[-1]
            nh, nt = [], []
            for j in range(1, len(heads)):
                h, err = _two_prod(heads[j], float(j))
                nh.append(h)
                nt.append(tails[j] * j + err)
            tables.append((tuple(nh) or (0.0,), tuple(nt) or (0.0,)))
        object.__setattr__(self, "_dcoeffs", tuple(tables))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, t, order: int = 0):
        """Value of d^order/dt^order at time t (scalar or ndarray), SI units."""
        if order not in (0, 1, 2, 3):
            raise ValueError(f"derivative order must be 0..3, got {order}")
        heads, tails = self._dcoeffs[order]
        if np.ndim(t) == 0:
            return _comp_horner_scalar(heads, tails, float(t) / self.t_f) / self.t_f**order
        s = np.asarray(t, dtype=float) / self.t_f
        return _comp_horner_array(heads, tails, s) / self.t_f**order

    def __add__(self, other: "Polynomial") -> "Polynomial":
        if other.t_f != self.t_f:
            raise ValueError("cannot add polynomials with different durations")
        n = max(len(self.coefficients), len(other.coefficients))
        a = np.zeros(n)
        a[: len(self.coefficients)] += self.coefficients
        a[: len(other.coefficients)] += other.coefficients
        return Polynomial(a, self.t_f)

    def __mul__(self, scalar: float) -> "Polynomial":
        return Polynomial([c * scalar for c in self.coefficients], self.t_f)

    __rmul__ = __mul__


def poly_eval(p: Polynomial, t, order: int = 0):
    """Functional form of Polynomial.__call__, for callers that prefer it."""
    return p(t, order)


def bracket_roots(fn, t_f: float, n_grid: int = 256) -> list[tuple[float, float]]:
    """Locate sign changes of fn on [0, t_f] and refine them by bisection.

    fn must accept an ndarray of times. Every sign change on the sampling
    grid yields one bracket narrowed to width <= t_f * 1e-12. A grid point
    where fn is exactly zero yields a degenerate (t, t) bracket. Returns an
    empty list when there is no sign change.
    """
    if n_grid < 64:
        raise ValueError(f"n_grid must be >= 64, got {n_grid}")
    ts = np.linspace(0.0, t_f, n_grid + 1)
    vals = np.asarray(fn(ts), dtype=float)
    tol = t_f * 1e-12
    brackets = []
    for i in range(n_grid):
        lo, hi = ts[i], ts[i + 1]
        flo, fhi = vals[i], vals[i + 1]
        if flo == 0.0:
            if not brackets or brackets[-1][1] < lo:
                brackets.append((lo, lo))
            continue
        if flo * fhi >= 0.0:
            continue
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            fmid = float(fn(np.asarray(mid)))
            if fmid == 0.0:
                lo = hi = mid
                break
            if flo * fmid < 0.0:
                hi = mid
            else:
                lo, flo = mid, fmid
        brackets.append((lo, hi))
    if vals[-1] == 0.0 and (not brackets or brackets[-1][1] < ts[-1]):
        brackets.append((ts[-1], ts[-1]))
    return brackets


def roots_from_brackets(brackets) -> list[float]:
    """Bracket midpoints, good to t_f * 1e-12 by construction."""
    return [0.5 * (lo + hi) for lo, hi in brackets]
