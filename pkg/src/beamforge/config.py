"""Flat key-value run configuration.

One `key = value` pair per line, dotted namespaces, `#` comments. Values may
carry a unit (e.g. `0.85 MHz`, `250 um`, `28.006 u`); they are converted to
SI at the boundary. Frequencies are cyclic (Hz and friends) and converted to
angular rad/s internally. Unknown keys are rejected with the line number;
every run writes back the fully resolved configuration so it can be re-run
and diffed.
"""

from dataclasses import dataclass

from .core import AMU, E_CHARGE

# unit name -> (dimension, factor to SI)
_UNITS = {
    "kg": ("mass", 1.0), "u": ("mass", AMU), "amu": ("mass", AMU),
    "c": ("charge", 1.0), "e": ("charge", E_CHARGE),
    "hz": ("freq", 1.0), "khz": ("freq", 1e3), "mhz": ("freq", 1e6),
    "s": ("time", 1.0), "ms": ("time", 1e-3), "us": ("time", 1e-6), "ns": ("time", 1e-9),
    "m": ("length", 1.0), "mm": ("length", 1e-3), "um": ("length", 1e-6),
    "nm": ("length", 1e-9),
    "m/s": ("velocity", 1.0), "km/s": ("velocity", 1e3), "mm/s": ("velocity", 1e-3),
    "k": ("temperature", 1.0),
    "v": ("voltage", 1.0), "mv": ("voltage", 1e-3),
}


class ConfigError(ValueError):
    """Unparseable or inconsistent run configuration."""


def parse_quantity(text: str, dimension: str, key: str = "?") -> float:
    """Parse `number [unit]` into SI, checking the unit's dimension."""
    parts = text.split()
    if len(parts) not in (1, 2):
        raise ConfigError(f"key {key}: cannot parse quantity {text!r}")
    try:
        value = float(parts[0])
    except ValueError:
        raise ConfigError(f"key {key}: not a number: {parts[0]!r}") from None
    if len(parts) == 1:
        return value
    unit = parts[1].lower()
    if unit not in _UNITS:
        raise ConfigError(f"key {key}: unknown unit {parts[1]!r}")
    dim, factor = _UNITS[unit]
    if dim != dimension:
        raise ConfigError(f"key {key}: unit {parts[1]!r} is a {dim}, expected {dimension}")
    return value * factor


def _parse_float(text, key):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"key {key}: not a number: {text!r}") from None


def _parse_int(text, key):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"key {key}: not an integer: {text!r}") from None


def _parse_bool(text, key):
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"key {key}: not a boolean: {text!r}")


def _parse_float_list(text, key):
    try:
        return tuple(float(tok) for tok in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"key {key}: not a number list: {text!r}") from None


@dataclass
class RunConfig:
    """Fully resolved run configuration, SI units, angular frequencies."""

    species_name: str = "N2+"
    species_mass: float = 28.006 * AMU
    species_charge: float = E_CHARGE

    thermal_T0: float = 1000.0

    axial_R: float = 0.2
    axial_v_target: float = 5000.0       # mean extraction velocity, m/s
    axial_omega0: float = 2.0e6 * 3.141592653589793 * 0.85
    axial_omegaf: float = 2.0e6 * 3.141592653589793 * 0.85
    axial_d: float = 250e-6
    axial_v_center: float = 10000.0
    axial_t_f: float = 0.94e-6
    axial_u_mid: float = 0.0             # 0 = automatic midpoint (u0 + uf)/2
    axial_optimize: bool = False

    radial_mode: str = "momentum"        # momentum | position | none
    radial_R: float = 0.2
    radial_omega0: float = 2.0e6 * 3.141592653589793 * 1.4
    radial_omegaf: float = 2.0e6 * 3.141592653589793 * 1.4
    radial_t_f: float = 1.0 / (2.0e6 * 3.141592653589793 * 1.4)

    geometry_amp1: float = 0.2
    geometry_center1: float = 0.0
    geometry_sigma1: float = 200e-6
    geometry_amp2: float = 0.2
    geometry_center2: float = 250e-6
    geometry_sigma2: float = 200e-6

    beamline_d_ff: float = 0.3
    beamline_focal_length: float = 13e-3
    beamline_v_z: float = 5e4

    noise_du_over_u: float = 0.0
    noise_mode: str = "per_shot"         # per_shot | white
    noise_shots: int = 50

    sim_n_samples: int = 10000
    sim_n_steps: int = 4000
    sim_grid_size: int = 4096
    sim_sweep_n_steps: int = 2000
    sim_sweep_n_samples: int = 400

    sweep_axis: str = ""                 # noise | temperature | radial_scaling | velocity
    sweep_values: tuple = ()

    run_seed: int = 12345
    run_out_dir: str = "out"
    run_threads: int = 0


# key -> (attribute, kind); kind is a dimension name or a plain type tag
_KEYS = {
    "species.name": ("species_name", "str"),
    "species.mass": ("species_mass", "mass"),
    "species.charge": ("species_charge", "charge"),
    "thermal.T0": ("thermal_T0", "temperature"),
    "axial.R": ("axial_R", "float"),
    "axial.v_target": ("axial_v_target", "velocity"),
    "axial.freq0": ("axial_omega0", "angular_freq"),
    "axial.freqf": ("axial_omegaf", "angular_freq"),
    "axial.d": ("axial_d", "length"),
    "axial.v_center": ("axial_v_center", "velocity"),
    "axial.t_f": ("axial_t_f", "time"),
    "axial.u_mid": ("axial_u_mid", "float"),
    "axial.optimize": ("axial_optimize", "bool"),
    "radial.mode": ("radial_mode", "str"),
    "radial.R": ("radial_R", "float"),
    "radial.freq0": ("radial_omega0", "angular_freq"),
    "radial.freqf": ("radial_omegaf", "angular_freq"),
    "radial.t_f": ("radial_t_f", "time"),
    "geometry.e1.amplitude": ("geometry_amp1", "float"),
    "geometry.e1.center": ("geometry_center1", "length"),
    "geometry.e1.sigma": ("geometry_sigma1", "length"),
    "geometry.e2.amplitude": ("geometry_amp2", "float"),
    "geometry.e2.center": ("geometry_center2", "length"),
    "geometry.e2.sigma": ("geometry_sigma2", "length"),
    "beamline.d_ff": ("beamline_d_ff", "length"),
    "beamline.focal_length": ("beamline_focal_length", "length"),
    "beamline.v_z": ("beamline_v_z", "velocity"),
    "noise.du_over_u": ("noise_du_over_u", "float"),
    "noise.mode": ("noise_mode", "str"),
    "noise.shots": ("noise_shots", "int"),
    "sim.n_samples": ("sim_n_samples", "int"),
    "sim.n_steps": ("sim_n_steps", "int"),
    "sim.grid_size": ("sim_grid_size", "int"),
    "sim.sweep_n_steps": ("sim_sweep_n_steps", "int"),
    "sim.sweep_n_samples": ("sim_sweep_n_samples", "int"),
    "sweep.axis": ("sweep_axis", "str"),
    "sweep.values": ("sweep_values", "float_list"),
    "run.seed": ("run_seed", "int"),
    "run.out_dir": ("run_out_dir", "str"),
    "run.threads": ("run_threads", "int"),
}

TWO_PI = 2.0 * 3.141592653589793


def _convert(kind: str, text: str, key: str):
    if kind == "str":
        return text.strip()
    if kind == "float":
        return _parse_float(text, key)
    if kind == "int":
        return _parse_int(text, key)
    if kind == "bool":
        return _parse_bool(text, key)
    if kind == "float_list":
        return _parse_float_list(text, key)
    if kind == "angular_freq":
        # cyclic frequency in the file (0.85 MHz), angular rad/s internally
        return TWO_PI * parse_quantity(text, "freq", key)
    return parse_quantity(text, kind, key)


def parse_config(text: str) -> RunConfig:
    """Parse configuration text; unknown or duplicate keys are errors."""
    cfg = RunConfig()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        attr, kind = _KEYS[key]
        setattr(cfg, attr, _convert(kind, value, key))
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.axial_R == 0:
        raise ConfigError("key axial.R: scaling parameter must be nonzero")
    if cfg.radial_mode not in ("momentum", "position", "none"):
        raise ConfigError(f"key radial.mode: must be momentum, position or none, "
                          f"got {cfg.radial_mode!r}")
    if cfg.noise_mode not in ("per_shot", "white"):
        raise ConfigError(f"key noise.mode: must be per_shot or white, got {cfg.noise_mode!r}")
    if cfg.sweep_axis not in ("", "noise", "temperature", "radial_scaling", "velocity"):
        raise ConfigError(f"key sweep.axis: unknown axis {cfg.sweep_axis!r}")


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def resolve_config(cfg: RunConfig) -> str:
    """Canonical SI text form; parse_config(resolve_config(c)) == c."""
    lines = ["# beamforge resolved configuration (SI units; freq keys are cyclic Hz)"]
    for key, (attr, kind) in _KEYS.items():
        val = getattr(cfg, attr)
        if kind == "str":
            out = val
        elif kind == "bool":
            out = "true" if val else "false"
        elif kind == "int":
            out = str(val)
        elif kind == "float_list":
            out = ", ".join(repr(v) for v in val)
        elif kind == "angular_freq":
            out = f"{val / TWO_PI!r} Hz"
        else:
            out = repr(val)
        lines.append(f"{key} = {out}")
    return "\n".join(lines) + "\n"
