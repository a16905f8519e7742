"""Design artifacts: reproducible, diffable text form of a designed pair.

Flat `key = value` lines with shortest-round-trip floats, so a re-read
artifact rebuilds the exact same polynomials bit for bit.
"""

from .axial import (AuxiliaryPair, AxialTargets, DesignReport,
                    build_boundary_conditions, validate_design)
from .beamline import RadialTargets, design_radial
from .core import Polynomial


def design_artifact_text(pair: AuxiliaryPair, report: DesignReport = None) -> str:
    if report is None:
        report = validate_design(pair)
    kind = "axial" if pair.with_offset else "radial"
    lines = [f"design.kind = {kind}"]
    lines.append(f"design.t_f = {pair.t_f!r}")
    lines.append(f"design.mass = {pair.mass!r}")
    lines.append(f"design.u_mid = {pair.u_mid!r}")
    lines.append(f"design.n_match_roots = {pair.n_match_roots}")
    for j, a in enumerate(pair.u.coefficients):
        lines.append(f"design.a{j} = {a!r}")
    if pair.with_offset:
        for j, b in enumerate(pair.f.coefficients):
            lines.append(f"design.b{j} = {b!r}")

    t = pair.targets
    if isinstance(t, AxialTargets):
        for name in ("R", "P", "omega0", "omegaf", "d", "v", "t_f"):
            lines.append(f"targets.{name} = {getattr(t, name)!r}")
    elif isinstance(t, RadialTargets):
        lines.append(f"targets.mode = {t.mode}")
        for name in ("omega_r0", "omega_rf", "R_r", "t_f"):
            lines.append(f"targets.{name} = {getattr(t, name)!r}")

    lines.append(f"residual.max_bc = {report.max_bc_residual!r}")
    lines.append(f"residual.u_min = {report.u_min!r}")
    lines.append(f"residual.fdot_at_k_zeros = {report.fdot_at_k_zeros!r}")
    lines.append(f"residual.k0_rel_err = {report.k0_rel_err!r}")
    lines.append(f"residual.kf_rel_err = {report.kf_rel_err!r}")
    lines.append(f"residual.passed = {'true' if report.passed else 'false'}")
    return "\n".join(lines) + "\n"


def parse_design_artifact(text: str) -> AuxiliaryPair:
    """Rebuild the designed pair from its artifact text."""
    kv = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        kv[key] = value

    kind = kv["design.kind"]
    t_f = float(kv["design.t_f"])
    mass = float(kv["design.mass"])
    u_mid = float(kv["design.u_mid"])

    a = []
    j = 0
    while f"design.a{j}" in kv:
        a.append(float(kv[f"design.a{j}"]))
        j += 1
    u = Polynomial(a, t_f)

    if kind == "axial":
        targets = AxialTargets(
            R=float(kv["targets.R"]), P=float(kv["targets.P"]),
            omega0=float(kv["targets.omega0"]), omegaf=float(kv["targets.omegaf"]),
            d=float(kv["targets.d"]), v=float(kv["targets.v"]),
            t_f=float(kv["targets.t_f"]))
        b = []
        j = 0
        while f"design.b{j}" in kv:
            b.append(float(kv[f"design.b{j}"]))
            j += 1
        f = Polynomial(b, t_f)
        bcs = build_boundary_conditions(targets, mass)
        free = (a[9], a[10], b[10], b[11])
        return AuxiliaryPair(u=u, f=f, t_f=t_f, bcs=bcs, u_mid=u_mid, free=free,
                             with_offset=True,
                             n_match_roots=int(kv["design.n_match_roots"]),
                             targets=targets)
    targets = RadialTargets(
        omega_r0=float(kv["targets.omega_r0"]), omega_rf=float(kv["targets.omega_rf"]),
        mode=kv["targets.mode"], R_r=float(kv["targets.R_r"]),
        t_f=float(kv["targets.t_f"]))
    rebuilt = design_radial(targets, mass, u_mid=u_mid)
    return AuxiliaryPair(u=u, f=Polynomial([0.0], t_f), t_f=t_f, bcs=rebuilt.bcs,
                         u_mid=u_mid, free=(a[9], a[10]), with_offset=False,
                         targets=targets)
