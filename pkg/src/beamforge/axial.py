"""Inverse engineering of the axial trap controls.

The driven harmonic trap H = p^2/2m + k(t)/2 [z - z0(t)]^2 conserves the
linear invariant I = u p - m du/dt z + f when the auxiliary functions obey

    d2u/dt2 + w^2(t) u = 0,        df/dt + k(t) z0(t) u = 0,

with k = m w^2. Prescribing boundary values of (u, f) fixes the extraction
momentum map p_f = R p_0 + P; the controls are then read back as

    k(t) = -m (d2u/dt2) / u,       g(t) = k z0 = -(df/dt) / u.

The signed pair (k, g) is the canonical control representation here: both
stay finite when the transient frequency crosses zero, while z0 = g/k does
not. u and f are degree-10/11 polynomials in t/t_f fixed in three steps:
boundary conditions, positivity + divergence matching, and peak-energy
minimization over the leftover coefficients.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import PchipInterpolator

from .core import DesignError, Polynomial, ThermalSpec, bracket_roots, roots_from_brackets
from .simplex import minimize_simplex

U_DEGREE = 10
F_DEGREE = 11
MAX_MATCH_ROOTS = 4   # free f coefficients b6..b9 available for dfdt matching
K_FLOOR_REL = 1e-6    # |k| threshold for a meaningful z0, relative to m*max(w0^2, wf^2)


@dataclass(frozen=True)
class AxialTargets:
    """Extraction targets: momentum map p_f = R p_0 + P, boundary trap
    frequencies (rad/s), final trap-center position d (m) and velocity v
    (m/s), protocol duration t_f (s)."""

    R: float
    P: float
    omega0: float
    omegaf: float
    d: float
    v: float
    t_f: float

    def __post_init__(self):
        if self.R == 0:
            raise ValueError("scaling parameter R must be nonzero")
        if not (self.omega0 > 0 and self.omegaf > 0):
            raise ValueError("boundary trap frequencies must be positive")
        if not self.t_f > 0:
            raise ValueError("protocol duration must be positive")


@dataclass(frozen=True)
class BoundaryConditions:
    """Boundary values for (u, du, d2u, d3u) and (f, df, d2f) at t = 0 and
    t = t_f, all in SI time-domain units. 14 conditions total."""

    u0: float
    du0: float
    ddu0: float
    dddu0: float
    uf: float
    duf: float
    dduf: float
    ddduf: float
    f0: float
    df0: float
    ddf0: float
    ff: float
    dff: float
    ddff: float
    t_f: float
    mass: float

    @property
    def omega0_sq(self) -> float:
        return -self.ddu0 / self.u0

    @property
    def omegaf_sq(self) -> float:
        return -self.dduf / self.uf

    def named(self) -> dict:
        return {
            "u0": self.u0, "du0": self.du0, "ddu0": self.ddu0, "dddu0": self.dddu0,
            "uf": self.uf, "duf": self.duf, "dduf": self.dduf, "ddduf": self.ddduf,
            "f0": self.f0, "df0": self.df0, "ddf0": self.ddf0,
            "ff": self.ff, "dff": self.dff, "ddff": self.ddff,
        }


def build_boundary_conditions(targets: AxialTargets, mass: float) -> BoundaryConditions:
    """Boundary-value set realizing the momentum map and the trap endpoints.

    u starts at 1 with the initial curvature of a trap at omega0 and ends at
    1/R with the curvature of a trap at omegaf; f ends at -P/R with first and
    second derivatives placing the trap center at d moving at v.
    """
    uf = 1.0 / targets.R
    kf = mass * targets.omegaf**2
    return BoundaryConditions(
        u0=1.0, du0=0.0, ddu0=-(targets.omega0**2), dddu0=0.0,
        uf=uf, duf=0.0, dduf=-uf * targets.omegaf**2, ddduf=0.0,
        f0=0.0, df0=0.0, ddf0=0.0,
        ff=-targets.P / targets.R,
        dff=-kf * uf * targets.d,
        ddff=-kf * uf * targets.v,
        t_f=targets.t_f, mass=mass,
    )


@dataclass(frozen=True)
class AuxiliaryPair:
    """The designed auxiliary polynomials u (dimensionless) and f (kg m/s),
    plus everything needed to re-solve them when the free coefficients move."""

    u: Polynomial
    f: Polynomial
    t_f: float
    bcs: BoundaryConditions
    u_mid: float
    free: tuple            # (a9, a10, b10, b11) or (a9, a10) without offset
    with_offset: bool      # False for static-center (radial) designs: f == 0
    n_match_roots: int = 0
    targets: object = None
    optimizer_warning: str = ""

    @property
    def mass(self) -> float:
        return self.bcs.mass

    @property
    def k_floor(self) -> float:
        return K_FLOOR_REL * self.mass * max(self.bcs.omega0_sq, self.bcs.omegaf_sq)

    def k_of(self, t):
        """Signed trap stiffness k(t) = -m u''(t)/u(t), kg/s^2."""
        return -self.mass * self.u(t, 2) / self.u(t)

    def g_of(self, t):
        """Force offset g(t) = k z0 = -f'(t)/u(t), N."""
        return -self.f(t, 1) / self.u(t)


def _falling(j: int, r: int) -> float:
    out = 1.0
    for i in range(r):
        out *= j - i
    return out


def _refined_solve(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Linear solve with one step of iterative refinement."""
    x = np.linalg.solve(mat, rhs)
    x += np.linalg.solve(mat, rhs - mat @ x)
    return x


def _u_coefficients(bcs: BoundaryConditions, u_mid: float, a9: float, a10: float) -> np.ndarray:
    """Step-1 u side: a0..a3 from the t=0 conditions, a4..a8 from the four
    t=t_f conditions plus u(t_f/2) = u_mid, with a9/a10 held fixed."""
    tf = bcs.t_f
    a = np.zeros(U_DEGREE + 1)
    a[0] = bcs.u0
    a[1] = bcs.du0 * tf
    a[2] = bcs.ddu0 * tf**2 / 2.0
    a[3] = bcs.dddu0 * tf**3 / 6.0
    a[9], a[10] = a9, a10

    end_targets = [bcs.uf, bcs.duf * tf, bcs.dduf * tf**2, bcs.ddduf * tf**3]
    known = [0, 1, 2, 3, 9, 10]
    unknown = [4, 5, 6, 7, 8]
    mat = np.zeros((5, 5))
    rhs = np.zeros(5)
    for r in range(4):
        for col, j in enumerate(unknown):
            mat[r, col] = _falling(j, r)
        rhs[r] = end_targets[r] - sum(_falling(j, r) * a[j] for j in known)
    for col, j in enumerate(unknown):
        mat[4, col] = 0.5**j
    rhs[4] = u_mid - sum(a[j] * 0.5**j for j in known)
    a[unknown] = _refined_solve(mat, rhs)
    return a


def _f_coefficients(bcs: BoundaryConditions, match_roots_s, b10: float, b11: float) -> np.ndarray:
    """Step-2 f side: b0..b2 from the t=0 conditions; b3..b5 from the t=t_f
    conditions; one of b6..b9 per interior root of u'' where f' must vanish
    (keeps z0 = g/k finite when the frequency crosses zero)."""
    tf = bcs.t_f
    n_roots = len(match_roots_s)
    if n_roots > MAX_MATCH_ROOTS:
        raise DesignError(
            f"insufficient free coefficients: u'' has {n_roots} interior roots, "
            f"at most {MAX_MATCH_ROOTS} can be matched")
    b = np.zeros(F_DEGREE + 1)
    b[0] = bcs.f0
    b[1] = bcs.df0 * tf
    b[2] = bcs.ddf0 * tf**2 / 2.0
    b[10], b[11] = b10, b11

    end_targets = [bcs.ff, bcs.dff * tf, bcs.ddff * tf**2]
    unknown = [3, 4, 5] + [6 + i for i in range(n_roots)]
    known = [k for k in range(F_DEGREE + 1) if k not in unknown]
    n = len(unknown)
    mat = np.zeros((n, n))
    rhs = np.zeros(n)
    for r in range(3):
        for col, k in enumerate(unknown):
            mat[r, col] = _falling(k, r)
        rhs[r] = end_targets[r] - sum(_falling(k, r) * b[k] for k in known)
    for i, s_star in enumerate(match_roots_s):
        row = 3 + i
        for col, k in enumerate(unknown):
            mat[row, col] = k * s_star ** (k - 1)
        rhs[row] = -sum(k * b[k] * s_star ** (k - 1) for k in known if k >= 1)
    b[unknown] = _refined_solve(mat, rhs)
    return b


def _interior_ddu_roots_s(u: Polynomial, n_grid: int = 1024) -> list:
    """Roots of u'' in the open interval (0, 1), in normalized time."""
    u_s = Polynomial(u.coefficients, 1.0)
    roots = roots_from_brackets(bracket_roots(lambda s: u_s(s, 2), 1.0, n_grid))
    edge = 1e-9
    return [s for s in roots if edge < s < 1.0 - edge]


def _check_u_positive(u: Polynomial, n_grid: int = 1024) -> float:
    """Minimum of u over the grid and over its bracketed extrema."""
    s = np.linspace(0.0, 1.0, n_grid + 1)
    u_s = Polynomial(u.coefficients, 1.0)
    u_min = float(np.min(u_s(s)))
    for s_star in roots_from_brackets(bracket_roots(lambda x: u_s(x, 1), 1.0, n_grid)):
        u_min = min(u_min, u_s(s_star))
    return u_min


def solve_constrained_polynomials(bcs: BoundaryConditions, u_mid: float = None,
                                  free=(0.0, 0.0, 0.0, 0.0), with_offset: bool = True,
                                  targets=None) -> AuxiliaryPair:
    """Steps 1-2 of the design: solve the boundary-value system for the
    polynomial coefficients, pin u(t_f/2) = u_mid, and force f' to vanish at
    every interior root of u''.

    free holds the peak-energy handles (a9, a10, b10, b11), or (a9, a10) for
    static-center designs; they stay fixed here and are searched by
    optimize_free_coefficients. Raises DesignError when u'' has more than 4
    interior roots or when u is not positive everywhere.
    """
    if u_mid is None:
        u_mid = 0.5 * (bcs.u0 + bcs.uf)
    if with_offset:
        a9, a10, b10, b11 = free
    else:
        a9, a10 = free
        b10 = b11 = 0.0

    a = _u_coefficients(bcs, u_mid, a9, a10)
    u = Polynomial(a, bcs.t_f)

    u_min = _check_u_positive(u)
    if u_min <= 0.0:
        raise DesignError(f"u sign change: min u = {u_min:.3e} (u must stay positive)")

    if with_offset:
        match_roots = _interior_ddu_roots_s(u)
        b = _f_coefficients(bcs, match_roots, b10, b11)
        f = Polynomial(b, bcs.t_f)
        n_match = len(match_roots)
    else:
        f = Polynomial([0.0], bcs.t_f)
        n_match = 0

    return AuxiliaryPair(u=u, f=f, t_f=bcs.t_f, bcs=bcs, u_mid=u_mid,
                         free=tuple(float(x) for x in free), with_offset=with_offset,
                         n_match_roots=n_match, targets=targets)


def build_axial_design(targets: AxialTargets, mass: float, u_mid: float = None) -> AuxiliaryPair:
    """Convenience wrapper: boundary conditions + constrained solve."""
    bcs = build_boundary_conditions(targets, mass)
    return solve_constrained_polynomials(bcs, u_mid=u_mid, targets=targets)


# ---------------------------------------------------------------------------
# control extraction

@dataclass(frozen=True)
class ControlWaveform:
    """Sampled trap controls. k is the signed stiffness m w^2(t) (kg/s^2),
    g = k z0 the force offset (N); both are finite everywhere. z0 is derived
    (g/k where |k| > k_floor, bridged cubically elsewhere) and z0_defined
    marks where it is meaningful. k_fn/g_fn evaluate the controls at
    arbitrary times when the waveform comes from an analytic design."""

    t: np.ndarray
    k: np.ndarray
    g: np.ndarray
    z0: np.ndarray
    z0_defined: np.ndarray
    k_floor: float
    mass: float
    k_fn: object = None
    g_fn: object = None
    untrapped: np.ndarray = None

    @property
    def t_f(self) -> float:
        return float(self.t[-1])


def _bridge_z0(t: np.ndarray, z0_raw: np.ndarray, defined: np.ndarray) -> np.ndarray:
    """Cubic interpolation of z0 across intervals where |k| <= k_floor.

    Benign by construction: the voltages are proportional to k, so they
    vanish exactly where the bridge is used.
    """
    z0 = z0_raw.copy()
    if defined.all():
        return z0
    if defined.sum() < 2:
        z0[~defined] = 0.0
        return z0
    interp = PchipInterpolator(t[defined], z0_raw[defined], extrapolate=True)
    z0[~defined] = interp(t[~defined])
    return z0


def extract_controls(pair: AuxiliaryPair, grid_size: int = 4096) -> ControlWaveform:
    """Sample k(t) = -m u''/u and g(t) = -f'/u on a uniform grid.

    z0 = g/k is reported where |k| exceeds the k_floor threshold and bridged
    elsewhere; the dynamics only ever need (k, g), which are exact.
    """
    t = np.linspace(0.0, pair.t_f, grid_size + 1)
    u = pair.u(t)
    if np.min(u) <= 0.0:
        raise DesignError(f"u sign change: min u on grid = {np.min(u):.3e}")
    k = -pair.mass * pair.u(t, 2) / u
    g = -pair.f(t, 1) / u
    defined = np.abs(k) > pair.k_floor
    with np.errstate(divide="ignore", invalid="ignore"):
        z0_raw = np.where(defined, g / np.where(defined, k, 1.0), 0.0)
    z0 = _bridge_z0(t, z0_raw, defined)
    return ControlWaveform(t=t, k=k, g=g, z0=z0, z0_defined=defined,
                           k_floor=pair.k_floor, mass=pair.mass,
                           k_fn=pair.k_of, g_fn=pair.g_of)


# ---------------------------------------------------------------------------
# peak transient energy and its minimization

def peak_potential_energy(pair: AuxiliaryPair, thermal: ThermalSpec,
                          grid_size: int = 2048) -> float:
    """Peak over time of the mean potential energy <k/2 (z - z0)^2> (J) for
    an initial thermal state, from the analytic moment propagation.

    k enters signed: a transiently inverted trap lowers the mean potential
    energy, and the maximum is taken over the signed values.
    """
    from . import dynamics  # local import: dynamics depends on this module

    z2_0, p2_0 = dynamics.thermal_initial_moments(thermal)
    integrals = dynamics.compute_integrals(pair, grid_size)
    mean_z, _, z2, _, _ = dynamics.moment_tables(pair, integrals,
                                                 dynamics.MomentSet(0.0, 0.0, z2_0, p2_0, 0.0))
    wf = extract_controls(pair, grid_size)
    var_z = z2 - mean_z**2
    e_p = 0.5 * wf.k * (var_z + (mean_z - wf.z0) ** 2)
    return float(np.max(e_p))


@dataclass(frozen=True)
class OptimizeOptions:
    """Knobs for the peak-energy search over the leftover coefficients."""

    u_mid: float = None          # override the pair's midpoint pin
    max_iter: int = 500
    rel_tol: float = 1e-6        # simplex value-spread convergence
    step_frac: float = 0.1       # initial step as a fraction of coefficient scale
    grid_size: int = 2048
    min_gain: float = 1e-12      # relative improvement needed to accept a new point


def optimize_free_coefficients(pair: AuxiliaryPair, thermal: ThermalSpec,
                               options: OptimizeOptions = None) -> AuxiliaryPair:
    """Step 3: simplex descent on the free coefficients to minimize the peak
    mean potential energy, re-running the constrained solve at each candidate
    so every boundary condition and divergence match stays exact.

    Candidates that violate the constraints (u not positive, too many or a
    changed number of u'' roots) get a large finite penalty, which keeps the
    search continuous. Never returns a pair with a higher objective than the
    input; if no feasible candidate improves on it, the input comes back
    with a warning flag.
    """
    opts = options or OptimizeOptions()
    u_mid = pair.u_mid if opts.u_mid is None else opts.u_mid

    theta0 = np.asarray(pair.free, dtype=float)
    scale_a = float(np.linalg.norm(pair.u.coefficients[:9]))
    steps = np.full(theta0.size, opts.step_frac * scale_a)
    if pair.with_offset:
        scale_b = float(np.linalg.norm(pair.f.coefficients[:10]))
        steps[2:] = opts.step_frac * scale_b   # zero when f == 0: axes dropped

    best = {"obj": math.inf, "pair": None}

    def objective(theta) -> float:
        try:
            cand = solve_constrained_polynomials(pair.bcs, u_mid=u_mid, free=tuple(theta),
                                                 with_offset=pair.with_offset,
                                                 targets=pair.targets)
        except DesignError:
            return penalty_scale * 1e6
        obj = peak_potential_energy(cand, thermal, opts.grid_size)
        if cand.n_match_roots != pair.n_match_roots:
            return obj + penalty_scale * 1e3 * (1 + abs(cand.n_match_roots - pair.n_match_roots))
        if obj < best["obj"]:
            best["obj"] = obj
            best["pair"] = cand
        return obj

    try:
        base_pair = solve_constrained_polynomials(pair.bcs, u_mid=u_mid, free=pair.free,
                                                  with_offset=pair.with_offset,
                                                  targets=pair.targets)
        base_obj = peak_potential_energy(base_pair, thermal, opts.grid_size)
    except DesignError as exc:
        return replace(pair, optimizer_warning=f"infeasible start: {exc}")
    penalty_scale = abs(base_obj) + 1e-30
    best["obj"], best["pair"] = base_obj, base_pair

    minimize_simplex(objective, theta0, steps, rel_tol=opts.rel_tol, max_iter=opts.max_iter)

    if best["pair"] is None or best["obj"] >= base_obj * (1.0 - opts.min_gain):
        warning = "" if best["pair"] is not None else "no feasible candidate found"
        if not warning:
            warning = "no improvement over input; returned unchanged"
        return replace(pair, optimizer_warning=warning)
    return best["pair"]


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class DesignReport:
    """Aggregate check of a designed pair against its boundary-value set and
    the divergence-avoidance rules, on a dense grid."""

    bc_residuals: dict            # name -> (achieved, required, rel_residual)
    max_bc_residual: float
    u_min: float
    fdot_at_k_zeros: float        # max |f'(t*)| / max|f'| over interior u'' roots
    k0_rel_err: float
    kf_rel_err: float
    negative_k_intervals: tuple   # (t_lo, t_hi) stretches with k < 0
    bc_ok: bool
    u_positive: bool
    fdot_ok: bool
    k_boundaries_ok: bool

    BC_TOL = 1e-9
    FDOT_TOL = 1e-9
    K_TOL = 1e-9

    @property
    def passed(self) -> bool:
        return self.bc_ok and self.u_positive and self.fdot_ok and self.k_boundaries_ok

    def to_text(self) -> str:
        lines = [f"design validation: {'PASS' if self.passed else 'FAIL'}"]
        lines.append(f"  max boundary residual   {self.max_bc_residual:.3e}"
                     f" (tol {self.BC_TOL:.0e}) {'ok' if self.bc_ok else 'FAIL'}")
        lines.append(f"  min u                   {self.u_min:.6e}"
                     f" {'ok' if self.u_positive else 'FAIL'}")
        lines.append(f"  f' at frequency zeros   {self.fdot_at_k_zeros:.3e}"
                     f" of max|f'| (tol {self.FDOT_TOL:.0e}) {'ok' if self.fdot_ok else 'FAIL'}")
        lines.append(f"  k boundary identity     {max(self.k0_rel_err, self.kf_rel_err):.3e}"
                     f" rel (tol {self.K_TOL:.0e}) {'ok' if self.k_boundaries_ok else 'FAIL'}")
        if self.negative_k_intervals:
            spans = ", ".join(f"[{a:.3e}, {b:.3e}] s" for a, b in self.negative_k_intervals)
            lines.append(f"  transient k < 0 on      {spans}")
        for name, (ach, req, res) in self.bc_residuals.items():
            lines.append(f"    {name:6s} achieved {ach: .9e}  required {req: .9e}  rel {res:.2e}")
        return "\n".join(lines)


def validate_design(pair: AuxiliaryPair, targets: AxialTargets = None,
                    grid_size: int = 4096) -> DesignReport:
    """Check boundary residuals, u positivity, f'-matching at frequency
    zeros, and the stiffness boundary identity k(0)/m = w0^2, k(t_f)/m = wf^2.

    Residuals are measured on the normalized-time boundary values (the
    representation the polynomial system is posed in, where the u side is
    order one); the f side is additionally expressed in units of its largest
    required value, so a broken momentum offset cannot hide below the
    absolute floor of the (1 + |required|) denominator.
    """
    bcs = pair.bcs if targets is None else build_boundary_conditions(targets, pair.mass)
    tf = pair.t_f

    # s-domain boundary values: order-r derivative scaled by t_f^r
    achieved = {}
    required = {}
    req_t = bcs.named()
    for side, poly in (("u", pair.u), ("f", pair.f)):
        orders = (0, 1, 2, 3) if side == "u" else (0, 1, 2)
        for endpoint, t_val in (("0", 0.0), ("f", tf)):
            for r in orders:
                name = "d" * r + side + endpoint
                achieved[name] = poly(t_val, r) * tf**r
                required[name] = req_t[name] * tf**r
    f_names = ("f0", "df0", "ddf0", "ff", "dff", "ddff")
    f_scale = max(abs(required[n]) for n in f_names)
    f_unit = f_scale if f_scale > 0.0 else 1.0

    residuals = {}
    for name, req in required.items():
        ach = achieved[name]
        unit = f_unit if name in f_names else 1.0
        res = abs(ach - req) / unit / (1.0 + abs(req) / unit)
        residuals[name] = (ach, req, res)
    max_res = max(r for _, _, r in residuals.values())

    u_min = _check_u_positive(pair.u, grid_size)

    t = np.linspace(0.0, tf, grid_size + 1)
    fdot = pair.f(t, 1)
    fdot_scale = float(np.max(np.abs(fdot)))
    roots_s = _interior_ddu_roots_s(pair.u, grid_size)
    if roots_s and fdot_scale > 0.0:
        worst = max(abs(pair.f(s * tf, 1)) for s in roots_s)
        fdot_rel = worst / fdot_scale
    else:
        fdot_rel = 0.0

    k0 = pair.k_of(0.0)
    kf = pair.k_of(tf)
    k0_req = pair.mass * bcs.omega0_sq
    kf_req = pair.mass * bcs.omegaf_sq
    k0_err = abs(k0 - k0_req) / abs(k0_req)
    kf_err = abs(kf - kf_req) / abs(kf_req)

    u_grid = pair.u(t)
    k_grid = -pair.mass * pair.u(t, 2) / u_grid
    neg = k_grid < 0.0
    intervals = []
    i = 0
    while i <= grid_size:
        if neg[i]:
            j = i
            while j < grid_size and neg[j + 1]:
                j += 1
            intervals.append((float(t[i]), float(t[j])))
            i = j + 1
        else:
            i += 1

    return DesignReport(
        bc_residuals=residuals, max_bc_residual=max_res, u_min=u_min,
        fdot_at_k_zeros=fdot_rel, k0_rel_err=k0_err, kf_rel_err=kf_err,
        negative_k_intervals=tuple(intervals),
        bc_ok=max_res <= DesignReport.BC_TOL,
        u_positive=u_min > 0.0,
        fdot_ok=fdot_rel <= DesignReport.FDOT_TOL,
        k_boundaries_ok=max(k0_err, kf_err) <= DesignReport.K_TOL,
    )
