"""Run configuration: a flat ``key = value`` text format with sections.

Example::

    [grid]
    dim = 1
    M = 64

    [approx]
    epsilon = 1e-3
    lambda = 1e-6
    dt = 1e-3
    t_end = 0.1

    [physics]
    n_species = 2
    m = 1, 2

    [chemistry]
    kind = inert

    [initial]
    preset = perturbed
    amplitude = 0.1
    rho_cos = 0, 0.02

    [output]
    out_dir = out

Every key is optional; omitted keys take the documented defaults.  Species
and velocity components are numbered from 0.  Trigonometric coefficient
lists ``<field>_cos`` / ``<field>_sin`` add ``sum_j a_j cos(j y)`` (resp.
``sin``) to the preset, with ``y = x_0 + ... + x_{dim-1}``; fields are
``rho``, ``theta``, ``u<i>`` and ``Y<k>`` for ``k < n_species - 1`` (the last
mass fraction is the remainder).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .chemistry import ReactionKind, ReactionModel
from .constitutive import ConstitutiveParams, DomainError
from .solver import ApproxParams, InitialData
from .spectral import SpectralGrid

PRESETS = ("uniform", "perturbed", "two_blob")


class ConfigError(ValueError):
    """Invalid configuration text; names the line and the violated rule."""

    def __init__(self, line: int | None, rule: str):
        self.line = line
        self.rule = rule
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{rule}")


@dataclass
class InitialSpec:
    preset: str = "perturbed"
    rho_mean: float = 1.0
    theta_mean: float = 1.0
    Y: tuple[float, ...] | None = None
    amplitude: float = 0.1
    coeffs: dict = field(default_factory=dict)  # "rho_cos" -> tuple


@dataclass
class OutputSpec:
    diag_every: int = 1
    snapshot_every: int = 0
    out_dir: str = "out"
    bd_r: float = 2.0


@dataclass
class RunConfig:
    dim: int = 1
    M: int = 64
    ap: ApproxParams = field(default_factory=ApproxParams)
    cp: ConstitutiveParams = field(default_factory=ConstitutiveParams)
    chem: ReactionModel = field(default_factory=ReactionModel)
    initial: InitialSpec = field(default_factory=InitialSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    @property
    def grid(self) -> SpectralGrid:
        return SpectralGrid(self.dim, self.M)

    def initial_data(self) -> InitialData:
        return build_initial_data(self)


# ----------------------------------------------------------------------------
# key tables: key -> (converter, rule predicate, rule text)
# ----------------------------------------------------------------------------

def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError("not an integer")
    return int(v)


def _float(text):
    v = float(text)
    if math.isnan(v):
        raise ValueError("nan")
    return v


def _floats(text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    return tuple(_float(p) for p in parts)


def _ints(text):
    return tuple(_int(p) for p in text.split(",") if p.strip())


def _opt_int(text):
    return None if text.strip().lower() in ("auto", "max", "none") else _int(text)


def _str(text):
    return text.strip()


def _any(v):
    return True


_KEYS = {
    "grid": {
        "dim": (_int, lambda v: v in (1, 2, 3), "dim ∈ {1, 2, 3} required"),
        "M": (_int, lambda v: v >= 4 and v % 2 == 0, "M must be an even integer ≥ 4"),
    },
    "approx": {
        "epsilon": (_float, lambda v: v >= 0, "ε ≥ 0 required"),
        "delta": (_float, lambda v: v >= 0, "δ ≥ 0 required"),
        "lambda": (_float, lambda v: v >= 0, "λ ≥ 0 required"),
        "s": (_int, lambda v: v >= 0, "s must be a nonnegative integer"),
        "N": (_opt_int, lambda v: v is None or v >= 0, "N ≥ 0 (or auto) required"),
        "dt": (_float, lambda v: v > 0, "dt > 0 required"),
        "t_end": (_float, lambda v: v >= 0, "t_end ≥ 0 required"),
        "picard_tol": (_float, lambda v: v > 0, "picard_tol > 0 required"),
        "picard_max": (_int, lambda v: v >= 1, "picard_max ≥ 1 required"),
        "r_min": (_float, math.isfinite, "r_min must be finite"),
        "retry_budget": (_int, lambda v: v >= 0, "retry_budget ≥ 0 required"),
        "rhon_band": (_float, lambda v: v > 0, "rhon_band > 0 required"),
    },
    "physics": {
        "n_species": (_int, lambda v: v >= 1, "n_species ≥ 1 required"),
        "m": (_floats, lambda v: len(v) > 0 and all(x > 0 for x in v), "molar masses must be positive"),
        "gamma_minus": (_float, lambda v: v > 5, "γ⁻ > 5 required"),
        "gamma_plus": (_float, lambda v: v > 3, "γ⁺ > 3 required"),
        "c_cold": (_float, lambda v: v > 0, "c_cold > 0 required"),
        "beta": (_float, lambda v: v > 0, "β > 0 required"),
        "B": (_float, lambda v: v >= 8, "B ≥ 8 required"),
        "kappa0": (_float, lambda v: v > 0, "κ₀ > 0 required"),
        "C0_bar": (_float, lambda v: v > 0, "C̄₀ > 0 required"),
    },
    "chemistry": {
        "kind": (_str, lambda v: v in [k.value for k in ReactionKind],
                 "kind must be one of: " + ", ".join(k.value for k in ReactionKind)),
        "pair": (_ints, lambda v: len(v) == 2 and v[0] != v[1] and min(v) >= 0,
                 "pair must name two distinct species indices"),
        "kappa_r": (_float, lambda v: v >= 0, "κ_r ≥ 0 required"),
        "omega_bar": (_float, lambda v: v > 0, "ω̄ > 0 required"),
    },
    "initial": {
        "preset": (_str, lambda v: v in PRESETS, "preset must be one of: " + ", ".join(PRESETS)),
        "rho_mean": (_float, lambda v: v > 0, "rho_mean > 0 required"),
        "theta_mean": (_float, lambda v: v > 0, "theta_mean > 0 required"),
        "Y": (_floats, lambda v: all(x >= 0 for x in v) and abs(sum(v) - 1) < 1e-12,
              "Y must be nonnegative and sum to 1"),
        "amplitude": (_float, lambda v: 0 <= v < 1, "0 ≤ amplitude < 1 required"),
    },
    "output": {
        "diag_every": (_int, lambda v: v >= 1, "diag_every ≥ 1 required"),
        "snapshot_every": (_int, lambda v: v >= 0, "snapshot_every ≥ 0 required"),
        "out_dir": (_str, lambda v: len(v) > 0, "out_dir must be non-empty"),
        "bd_r": (_float, lambda v: v > 1, "bd_r > 1 required"),
    },
}


def _coeff_key(key: str) -> bool:
    if not (key.endswith("_cos") or key.endswith("_sin")):
        return False
    base = key[:-4]
    return base in ("rho", "theta") or (base[:1] in ("u", "Y") and base[1:].isdigit())


def _tokenize(text: str):
    """Yield ``(section, key, value, line)``; raises ``ConfigError`` on syntax errors."""
    section = None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(lineno, f"malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            if section not in _KEYS:
                raise ConfigError(lineno, f"unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(lineno, f"expected 'key = value', got {raw.strip()!r}")
        if section is None:
            raise ConfigError(lineno, "key outside of any section")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(lineno, "missing key name")
        if (section, key) in seen:
            raise ConfigError(lineno, f"duplicate key {key!r} in [{section}]")
        seen.add((section, key))
        yield section, key, value, lineno


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate configuration text."""
    values: dict[str, dict] = {s: {} for s in _KEYS}
    lines: dict[tuple[str, str], int] = {}
    for section, key, value, lineno in _tokenize(text):
        if section == "initial" and _coeff_key(key):
            try:
                values[section][key] = _floats(value)
            except ValueError:
                raise ConfigError(lineno, f"{key}: expected a comma-separated list of numbers") from None
            lines[(section, key)] = lineno
            continue
        spec = _KEYS[section].get(key)
        if spec is None:
            raise ConfigError(lineno, f"unknown key {key!r} in [{section}]")
        conv, ok, rule = spec
        try:
            v = conv(value)
        except (ValueError, OverflowError):
            raise ConfigError(lineno, f"{key}: cannot parse {value!r}") from None
        if not ok(v):
            raise ConfigError(lineno, rule)
        values[section][key] = v
        lines[(section, key)] = lineno

    def line_of(section, *keys):
        for k in keys:
            if (section, k) in lines:
                return lines[(section, k)]
        return None

    g = values["grid"]
    dim, M = g.get("dim", 1), g.get("M", 64)

    a = dict(values["approx"])
    if "lambda" in a:
        a["lam"] = a.pop("lambda")
    lam, s = a.get("lam", ApproxParams.lam), a.get("s", ApproxParams.s)
    if lam > 0 and 2 * s + 1 < 3:
        raise ConfigError(line_of("approx", "s", "lambda"), "2s + 1 ≥ 3 required when λ > 0")
    cap = (M - 1) // 3
    if a.get("N") is not None and a["N"] > cap:
        raise ConfigError(line_of("approx", "N"),
                          f"N ≤ (M - 1)/3 = {cap} required (2/3 dealiasing capacity)")
    ap = ApproxParams(**a)

    ph = dict(values["physics"])
    n = ph.get("n_species", 2 if "m" not in ph else len(ph["m"]))
    ph["n_species"] = n
    if "m" not in ph:
        ph["m"] = (1.0,) * n
    if len(ph["m"]) != n:
        raise ConfigError(line_of("physics", "m", "n_species"),
                          f"m must list {n} molar masses (one per species)")
    gm = ph.get("gamma_minus", ConstitutiveParams.gamma_minus)
    gp = ph.get("gamma_plus", ConstitutiveParams.gamma_plus)
    bound = (5 * gp - 3) / (gp - 3)
    if not gm > bound:
        raise ConfigError(line_of("physics", "gamma_minus", "gamma_plus"),
                          f"γ⁻ > (5γ⁺ - 3)/(γ⁺ - 3) = {bound:g} required")
    try:
        cp = ConstitutiveParams(**ph)
    except DomainError as exc:
        raise ConfigError(line_of("physics", *ph), str(exc)) from None

    ch = values["chemistry"]
    try:
        chem = ReactionModel(**ch)
        chem.validate_for(cp)
    except DomainError as exc:
        raise ConfigError(line_of("chemistry", "pair", "kind"), str(exc)) from None

    ini = values["initial"]
    coeffs = {k: v for k, v in ini.items() if _coeff_key(k)}
    for k in coeffs:
        base = k[:-4]
        if base.startswith("u") and int(base[1:]) >= dim:
            raise ConfigError(lines[("initial", k)], f"{k}: velocity component out of range for dim={dim}")
        if base.startswith("Y") and int(base[1:]) >= n - 1:
            raise ConfigError(lines[("initial", k)],
                              f"{k}: only Y0..Y{n - 2} take coefficients (the last mass fraction is the remainder)")
    if "Y" in ini and len(ini["Y"]) != n:
        raise ConfigError(line_of("initial", "Y"), f"Y must list {n} mass fractions")
    spec = InitialSpec(
        preset=ini.get("preset", "perturbed"),
        rho_mean=ini.get("rho_mean", 1.0),
        theta_mean=ini.get("theta_mean", 1.0),
        Y=ini.get("Y"),
        amplitude=ini.get("amplitude", 0.1),
        coeffs=coeffs,
    )
    out = OutputSpec(**values["output"])
    cfg = RunConfig(dim, M, ap, cp, chem, spec, out)
    try:
        build_initial_data(cfg)
    except DomainError as exc:
        raise ConfigError(line_of("initial", "preset", *ini), f"initial data invalid: {exc}") from None
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(cfg: RunConfig) -> str:
    """Serialise every setting; ``parse_config(format_config(c)) == c``."""
    ap = cfg.ap
    out = ["[grid]", f"dim = {cfg.dim}", f"M = {cfg.M}", "", "[approx]"]
    for f in fields(ApproxParams):
        key = "lambda" if f.name == "lam" else f.name
        v = getattr(ap, f.name)
        out.append(f"{key} = {'auto' if v is None else _fmt(v)}")
    out += ["", "[physics]"]
    for f in fields(ConstitutiveParams):
        out.append(f"{f.name} = {_fmt(getattr(cfg.cp, f.name))}")
    c = cfg.chem
    out += ["", "[chemistry]", f"kind = {c.kind.value}", f"pair = {_fmt(c.pair)}",
            f"kappa_r = {_fmt(c.kappa_r)}", f"omega_bar = {_fmt(c.omega_bar)}", "", "[initial]"]
    ini = cfg.initial
    out += [f"preset = {ini.preset}", f"rho_mean = {_fmt(ini.rho_mean)}",
            f"theta_mean = {_fmt(ini.theta_mean)}", f"amplitude = {_fmt(ini.amplitude)}"]
    if ini.Y is not None:
        out.append(f"Y = {_fmt(ini.Y)}")
    for k in sorted(ini.coeffs):
        out.append(f"{k} = {_fmt(ini.coeffs[k])}")
    o = cfg.output
    out += ["", "[output]", f"diag_every = {o.diag_every}", f"snapshot_every = {o.snapshot_every}",
            f"out_dir = {o.out_dir}", f"bd_r = {_fmt(o.bd_r)}", ""]
    return "\n".join(out)


# ----------------------------------------------------------------------------
# initial fields
# ----------------------------------------------------------------------------

def _trig(y, cos=(), sin=()):
    out = np.zeros_like(y)
    for j, a in enumerate(cos, start=1):
        out += a * np.cos(j * y)
    for j, b in enumerate(sin, start=1):
        out += b * np.sin(j * y)
    return out


def _blob(x, centre):
    # smooth periodic bump, 1 at the centre
    return np.exp(np.sum(np.cos(x - centre) - 1.0, axis=0) / 0.3)


def initial_fields(cfg: RunConfig):
    """``(rho, u, theta, Y)`` on the collocation grid, before any projection."""
    grid = cfg.grid
    x = grid.x
    y = np.sum(x, axis=0)
    n = cfg.cp.n_species
    ini = cfg.initial
    a = ini.amplitude
    Ybar = np.asarray(ini.Y if ini.Y is not None else (1.0 / n,) * n)
    rho = np.full(grid.shape, ini.rho_mean)
    theta = np.full(grid.shape, ini.theta_mean)
    u = np.zeros((cfg.dim,) + grid.shape)
    Y = Ybar.reshape((n,) + (1,) * cfg.dim) * np.ones(grid.shape)
    if ini.preset == "perturbed":
        # standing wave: rho, theta, Y even in y and u odd, so reflection
        # symmetry keeps the total momentum at zero
        rho = ini.rho_mean * (1.0 + a * np.cos(y))
        theta = ini.theta_mean * (1.0 + a * np.cos(y))
        u[0] = a * np.sin(y)
        if n > 1:
            dY = a * Ybar[0] * (1.0 - Ybar[0]) * np.cos(y)
            Y[0] = Ybar[0] + dY
            Y[n - 1] = Ybar[n - 1] - dY
    elif ini.preset == "two_blob":
        w = np.full((n,) + grid.shape, 0.05)
        w[0] += _blob(x, np.pi / 2)
        if n > 1:
            w[1] += _blob(x, 3 * np.pi / 2)
        Y = w / w.sum(axis=0)
        rho = ini.rho_mean * (1.0 + a * (w[0] - w[1] if n > 1 else w[0]) / w.sum(axis=0))
    c = ini.coeffs
    rho = rho + _trig(y, c.get("rho_cos", ()), c.get("rho_sin", ()))
    theta = theta + _trig(y, c.get("theta_cos", ()), c.get("theta_sin", ()))
    for i in range(cfg.dim):
        u[i] = u[i] + _trig(y, c.get(f"u{i}_cos", ()), c.get(f"u{i}_sin", ()))
    for k in range(n - 1):
        dY = _trig(y, c.get(f"Y{k}_cos", ()), c.get(f"Y{k}_sin", ()))
        Y[k] = Y[k] + dY
        Y[n - 1] = Y[n - 1] - dY
    return rho, u, theta, Y


def build_initial_data(cfg: RunConfig) -> InitialData:
    rho, u, theta, Y = initial_fields(cfg)
    if not np.min(rho) > 0:
        raise DomainError("ρ0 > 0 required")
    if not np.min(theta) > 0:
        raise DomainError("θ0 > 0 required")
    if np.min(Y) < 0 or np.max(Y) > 1:
        raise DomainError("mass fractions must stay in [0, 1]")
    return InitialData(rho, rho * u, theta, Y * rho)
