"""Per-step functionals: ledgers, energies, entropy, entropy production, B-D functional.

Every quantity here is a pure function of a ``MixtureState`` (plus the
parameters), except ``picard_iters`` and ``energy_residual`` which also need
the record of the step that produced the state.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import constitutive as th
from .chemistry import ReactionModel, chemical_affinity_production, production_rates
from .constitutive import ConstitutiveParams, ThermoPoint
from .maxwell_stefan import flux_entropic
from .solver import ApproxParams, MixtureState, StepRecord, strain_rate
from .spectral import SpectralGrid

CSV_COLUMNS = (
    "time", "total_mass", "species_ledger", "E_total", "E_kin", "E_int", "E_rad",
    "E_cold", "E_lambda", "entropy", "sigma_total", "sigma_min", "bd", "min_rho",
    "min_theta", "min_rho_k", "sum_rhok_dev", "picard_iters", "energy_residual",
)


@dataclass
class DiagnosticsReport:
    time: float
    total_mass: float
    species_ledger: float
    E_total: float
    E_kin: float
    E_int: float
    E_rad: float
    E_cold: float
    E_lambda: float
    entropy: float
    sigma_total: float
    sigma_min: float
    bd: float
    min_rho: float
    min_theta: float
    min_rho_k: float
    sum_rhok_dev: float
    picard_iters: int
    energy_residual: float

    def row(self) -> list:
        return [getattr(self, name) for name in CSV_COLUMNS]

    def as_dict(self) -> dict:
        return asdict(self)


assert tuple(f.name for f in fields(DiagnosticsReport)) == CSV_COLUMNS


@dataclass
class EnergyParts:
    kinetic: float
    internal: float
    radiative: float
    cold: float
    lam: float

    @property
    def total(self) -> float:
        return self.kinetic + self.internal + self.radiative + self.cold + self.lam


def energy_components(grid: SpectralGrid, state: MixtureState, ap: ApproxParams,
                      cp: ConstitutiveParams) -> EnergyParts:
    rho, theta = state.rho, state.theta
    kin = 0.5 * grid.integrate(rho * np.sum(state.u ** 2, axis=0))
    lam = 0.5 * ap.lam * grid.seminorm_sq(rho, 2 * ap.s + 1) if ap.lam > 0 else 0.0
    return EnergyParts(
        kinetic=float(kin),
        internal=float(grid.integrate(rho * theta)),
        radiative=float(grid.integrate(cp.beta * theta ** 4)),
        cold=float(grid.integrate(rho * th.cold_energy(rho, cp))),
        lam=float(lam),
    )


def total_energy(grid, state, ap, cp) -> float:
    """``integral 1/2 rho |u|^2 + lambda/2 |grad^(2s+1) rho|^2 + rho e``."""
    return energy_components(grid, state, ap, cp).total


def total_entropy(grid, state, cp) -> float:
    pt = ThermoPoint(state.rho, state.theta, state.species_densities(cp))
    return float(grid.integrate(th.specific_entropy_density(pt, cp)))


def entropy_production(grid: SpectralGrid, state: MixtureState, ap: ApproxParams,
                       cp: ConstitutiveParams, chem: ReactionModel | None = None):
    """Pointwise entropy production and its integral.

    ``sigma = 2 rho^n |D u|^2 / theta + kappa_eps |grad theta|^2 / theta^2
    - sum_k F_k/m_k . grad log p_k - sum_k rho^n g_k omega_k``.

    Returns ``(sigma_total, sigma_min, sigma_field, n_masked)``; points where
    some species sits on the entropy-variable floor are left out of
    ``sigma_min`` and counted in ``n_masked``.
    """
    chem = chem or ReactionModel()
    rho, theta, r = state.rho, state.theta, state.r
    m = cp.mass_column(grid.dim)
    er = np.exp(r)
    rho_k = m * er
    rhon = rho_k.sum(axis=0)

    D = strain_rate(grid, state.u)
    viscous = 2.0 * rhon * np.sum(D * D, axis=(0, 1)) / theta

    kappa_eps = ap.epsilon / cp.m_min * rhon + th.heat_conductivity(rho, theta, cp)
    grad_theta = grid.gradient(theta)
    conduction = kappa_eps * np.sum(grad_theta ** 2, axis=0) / theta ** 2

    grad_r = grid.gradient(r)
    grad_log_theta = grid.gradient(np.log(theta))
    F = flux_entropic(r, grad_r, grad_log_theta, rho, theta, cp)
    grad_log_p = grad_r + grad_log_theta[None]
    diffusion = -np.sum(F / m[:, None] * grad_log_p, axis=(0, 1))

    omega = production_rates(theta, rho_k, chem, cp)
    chemical = rhon * chemical_affinity_production(theta, rho_k, omega, cp)

    sigma = viscous + conduction + diffusion + chemical
    floored = np.any(r <= ap.r_min, axis=0)
    n_masked = int(floored.sum())
    sigma_min = float(np.min(sigma[~floored])) if n_masked < sigma.size else float("nan")
    return float(grid.integrate(sigma)), sigma_min, sigma, n_masked


def bd_functional(grid: SpectralGrid, state: MixtureState, ap: ApproxParams,
                  cp: ConstitutiveParams, r: float = 2.0) -> float:
    """``integral 1/2 rho|u + 2 grad log rho|^2 + (r-1)/2 rho|u|^2 + r lambda/2 |grad Delta^s rho|^2 + r rho e_c``."""
    if not r > 1:
        raise ValueError("bd_functional needs r > 1")
    rho, u = state.rho, state.u
    drift = u + 2.0 * grid.gradient(np.log(rho))
    dens = (0.5 * rho * np.sum(drift ** 2, axis=0)
            + 0.5 * (r - 1.0) * rho * np.sum(u ** 2, axis=0)
            + r * rho * th.cold_energy(rho, cp))
    value = grid.integrate(dens)
    if ap.lam > 0:
        value = value + 0.5 * r * ap.lam * grid.seminorm_sq(rho, 2 * ap.s + 1)
    return float(value)


def species_ledgers(grid, state, ap, cp) -> np.ndarray:
    """Per-species ``m_k integral (delta r_k + e^{r_k})``."""
    m = cp.masses
    q = ap.delta * state.r + np.exp(state.r)
    return m * grid.integrate(q)


def ledgers_and_positivity(grid, state, ap, cp) -> dict:
    rho_k = state.species_densities(cp)
    return {
        "total_mass": float(grid.integrate(state.rho)),
        "species_ledger": float(np.sum(species_ledgers(grid, state, ap, cp))),
        "min_rho": float(state.rho.min()),
        "min_theta": float(state.theta.min()),
        "min_rho_k": float(rho_k.min()),
        "sum_rhok_dev": float(np.max(np.abs(rho_k.sum(axis=0) - state.rho) / state.rho)),
    }


def total_momentum(grid, state) -> np.ndarray:
    return grid.integrate(state.rho * state.u)


def energy_residual(E_prev: float, E_next: float, record: StepRecord | None) -> float:
    """``|E_next - E_prev + dt eps int theta^5 - dt eps int theta^-2| / E_prev``."""
    if record is None:
        return 0.0
    return abs(E_next - E_prev + record.eps_theta5 - record.eps_theta_m2) / abs(E_prev)


def diagnose(grid: SpectralGrid, state: MixtureState, ap: ApproxParams, cp: ConstitutiveParams,
             chem: ReactionModel | None = None, record: StepRecord | None = None,
             prev_energy: float | None = None, bd_r: float = 2.0) -> DiagnosticsReport:
    parts = energy_components(grid, state, ap, cp)
    sig_total, sig_min, _, _ = entropy_production(grid, state, ap, cp, chem)
    led = ledgers_and_positivity(grid, state, ap, cp)
    resid = 0.0 if prev_energy is None else energy_residual(prev_energy, parts.total, record)
    return DiagnosticsReport(
        time=float(state.time),
        E_total=parts.total,
        E_kin=parts.kinetic,
        E_int=parts.internal,
        E_rad=parts.radiative,
        E_cold=parts.cold,
        E_lambda=parts.lam,
        entropy=total_entropy(grid, state, cp),
        sigma_total=sig_total,
        sigma_min=sig_min,
        bd=bd_functional(grid, state, ap, cp, bd_r),
        picard_iters=0 if record is None else int(record.picard_iters),
        energy_residual=float(resid),
        **led,
    )


class DiagnosticsLog:
    """Sink for ``solver.run`` that keeps one report per step."""

    def __init__(self, grid, ap, cp, chem=None, bd_r=2.0, every=1):
        self.grid, self.ap, self.cp, self.chem = grid, ap, cp, chem
        self.bd_r = bd_r
        self.every = max(1, int(every))
        self.reports: list[DiagnosticsReport] = []
        self.residual_sum = 0.0
        self._E = None
        self._count = 0

    def __call__(self, state, record):
        E = total_energy(self.grid, state, self.ap, self.cp)
        resid = energy_residual(self._E, E, record) if self._E is not None else 0.0
        self.residual_sum += resid
        self._E = E
        if record is not None:
            self._count += 1
            if self._count % self.every:
                return
        rep = diagnose(self.grid, state, self.ap, self.cp, self.chem, record, bd_r=self.bd_r)
        rep.energy_residual = resid
        self.reports.append(rep)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.reports])
