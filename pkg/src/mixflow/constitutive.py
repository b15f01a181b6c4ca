"""Thermodynamic closures of the reacting mixture.

All functions are vectorised: densities and temperatures may be scalars or
numpy arrays of any shape.  Per-species quantities carry the species index
on the leading axis, e.g. ``rho_k.shape == (n, *grid)``.

Conventions fixed here (gas constant, reference temperature/pressure and
formation energies are all normalised to 1 or 0):

* molecular pressure  ``pi_m = sum_k theta * rho_k / m_k``
* molecular energy    ``rho * e_m = rho * theta``  (c_v = 1 for every species)
* cold pressure       ``pi_c(1) = 0``; cold energy ``e_c(1) = min e_c = 0``
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Argument outside the physical domain of a closure."""


@dataclass(frozen=True)
class ConstitutiveParams:
    """Physical constants of the mixture.

    ``c_cold`` is the common amplitude of both cold-pressure branches; a
    single constant is what makes ``pi_c`` continuously differentiable at
    ``rho = 1``.
    """

    n_species: int = 2
    m: tuple[float, ...] = (1.0, 1.0)
    gamma_minus: float = 8.0
    gamma_plus: float = 8.0
    c_cold: float = 1.0
    beta: float = 1.0
    B: float = 8.0
    kappa0: float = 1.0
    C0_bar: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(float(v) for v in self.m))
        if self.n_species < 1:
            raise DomainError("n_species must be a positive integer")
        if len(self.m) != self.n_species:
            raise DomainError(
                f"expected {self.n_species} molar masses, got {len(self.m)}")
        if any(mk <= 0 for mk in self.m):
            raise DomainError("molar masses must be positive")
        if not self.gamma_minus > 5:
            raise DomainError("γ⁻ > 5 required")
        if not self.gamma_plus > 3:
            raise DomainError("γ⁺ > 3 required")
        bound = (5 * self.gamma_plus - 3) / (self.gamma_plus - 3)
        if not self.gamma_minus > bound:
            raise DomainError(
                f"γ⁻ > (5γ⁺ - 3)/(γ⁺ - 3) = {bound:g} required")
        if not self.B >= 8:
            raise DomainError("B ≥ 8 required")
        for name in ("c_cold", "beta", "kappa0", "C0_bar"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} > 0 required")

    @property
    def masses(self) -> np.ndarray:
        return np.asarray(self.m)

    @property
    def m_min(self) -> float:
        return min(self.m)

    def mass_column(self, ndim: int) -> np.ndarray:
        """Masses shaped ``(n, 1, ..., 1)`` for broadcasting against fields."""
        return self.masses.reshape((-1,) + (1,) * ndim)


@dataclass
class ThermoPoint:
    """Local thermodynamic state: total density, temperature, species densities."""

    rho: np.ndarray | float
    theta: np.ndarray | float
    rho_k: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        self.rho_k = np.asarray(self.rho_k, dtype=float)
        if np.any(self.rho <= 0):
            raise DomainError("rho > 0 required")
        if np.any(self.theta <= 0):
            raise DomainError("theta > 0 required")
        if np.any(self.rho_k < 0):
            raise DomainError("rho_k >= 0 required")

    @property
    def mass_fractions(self) -> np.ndarray:
        return mass_fractions(self.rho_k)


def mass_fractions(rho_k) -> np.ndarray:
    rho_k = np.asarray(rho_k, dtype=float)
    total = rho_k.sum(axis=0)
    if np.any(total <= 0):
        raise DomainError("mass fractions undefined for an empty mixture")
    return rho_k / total


def _check_positive(name, x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError(f"{name} > 0 required")
    return x


def _check_nonnegative(name, x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x >= 0)):
        raise DomainError(f"{name} >= 0 required")
    return x


def _xlogx(x):
    # continuous extension x log x -> 0 at x = 0
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)


# --------------------------------------------------------------------------
# pressure and energy
# --------------------------------------------------------------------------

def cold_pressure(rho, p: ConstitutiveParams):
    """Cold (barotropic) pressure normalised by ``pi_c(1) = 0``."""
    rho = _check_positive("rho", rho)
    c, gm, gp = p.c_cold, p.gamma_minus, p.gamma_plus
    lower = -(c / gm) * (np.power(np.minimum(rho, 1.0), -gm) - 1.0)
    upper = (c / gp) * (np.power(np.maximum(rho, 1.0), gp) - 1.0)
    return np.where(rho <= 1.0, lower, upper)


def cold_pressure_derivative(rho, p: ConstitutiveParams):
    rho = _check_positive("rho", rho)
    c = p.c_cold
    lower = c * np.power(np.minimum(rho, 1.0), -p.gamma_minus - 1.0)
    upper = c * np.power(np.maximum(rho, 1.0), p.gamma_plus - 1.0)
    return np.where(rho <= 1.0, lower, upper)


def cold_energy(rho, p: ConstitutiveParams):
    """Specific cold energy solving ``rho^2 e_c' = pi_c`` with ``e_c(1) = 0``.

    ``pi_c`` changes sign at ``rho = 1`` only, so that point is the global
    minimiser and ``e_c >= 0`` everywhere.  Both branches are closed-form
    antiderivatives of ``y^-2 pi_c(y)``.
    """
    rho = _check_positive("rho", rho)
    c, gm, gp = p.c_cold, p.gamma_minus, p.gamma_plus
    lo = np.minimum(rho, 1.0)
    hi = np.maximum(rho, 1.0)
    lower = (c / gm) * (np.power(lo, -gm - 1.0) / (gm + 1.0) - 1.0 / lo
                        - 1.0 / (gm + 1.0) + 1.0)
    upper = (c / gp) * (np.power(hi, gp - 1.0) / (gp - 1.0) + 1.0 / hi
                        - 1.0 / (gp - 1.0) - 1.0)
    return np.maximum(np.where(rho <= 1.0, lower, upper), 0.0)


def molecular_pressure(theta, rho_k, p: ConstitutiveParams):
    theta = _check_nonnegative("theta", theta)
    rho_k = _check_nonnegative("rho_k", rho_k)
    m = p.mass_column(rho_k.ndim - 1)
    return theta * np.sum(rho_k / m, axis=0)


def partial_pressures(theta, rho_k, p: ConstitutiveParams):
    rho_k = np.asarray(rho_k, dtype=float)
    return theta * rho_k / p.mass_column(rho_k.ndim - 1)


def total_pressure(pt: ThermoPoint, p: ConstitutiveParams):
    return (cold_pressure(pt.rho, p) + p.beta / 3.0 * pt.theta ** 4
            + molecular_pressure(pt.theta, pt.rho_k, p))


def internal_energy(pt: ThermoPoint, p: ConstitutiveParams):
    """Specific internal energy ``theta + beta theta^4 / rho + e_c(rho)``."""
    return pt.theta + p.beta * pt.theta ** 4 / pt.rho + cold_energy(pt.rho, p)


# --------------------------------------------------------------------------
# entropy and Gibbs functions
# --------------------------------------------------------------------------

def specific_entropy_density(pt: ThermoPoint, p: ConstitutiveParams):
    """Entropy per unit volume ``rho s``.

    ``rho log theta - sum_k (rho_k/m_k) log(rho_k/m_k) + (4 beta/3) theta^3``
    """
    m = p.mass_column(pt.rho_k.ndim - 1)
    mixing = np.sum(_xlogx(pt.rho_k / m), axis=0)
    return pt.rho * np.log(pt.theta) - mixing + 4.0 * p.beta / 3.0 * pt.theta ** 3


def species_entropy(theta, rho_k, k: int, p: ConstitutiveParams, radiative=True):
    """Specific entropy ``s_k`` of one species."""
    theta = _check_positive("theta", theta)
    rho_k = _check_positive("rho_k", rho_k)
    mk = p.m[k]
    s = np.log(theta) - np.log(rho_k / mk) / mk
    if radiative:
        s = s + 4.0 * p.beta * theta ** 3 / (3.0 * rho_k)
    return s


def enthalpy(theta, k: int, p: ConstitutiveParams):
    theta = _check_nonnegative("theta", theta)
    return (1.0 + 1.0 / p.m[k]) * theta


def gibbs(theta, rho_k, k: int, p: ConstitutiveParams):
    """Gibbs function ``c_pk theta - theta log theta + (theta/m_k) log(rho_k/m_k)``."""
    theta = _check_positive("theta", theta)
    rho_k = _check_positive("rho_k", rho_k)
    mk = p.m[k]
    return (enthalpy(theta, k, p) - theta * np.log(theta)
            + theta / mk * np.log(rho_k / mk))


def gibbs_all(theta, rho_k, p: ConstitutiveParams):
    """Gibbs functions of every species, stacked on the leading axis."""
    rho_k = np.asarray(rho_k, dtype=float)
    return np.stack([gibbs(theta, rho_k[k], k, p) for k in range(rho_k.shape[0])])


# --------------------------------------------------------------------------
# transport coefficients
# --------------------------------------------------------------------------

def heat_conductivity(rho, theta, p: ConstitutiveParams):
    rho = _check_nonnegative("rho", rho)
    theta = _check_nonnegative("theta", theta)
    return p.kappa0 + rho + rho * theta ** 2 + p.beta * theta ** p.B


def ms_amplitude(rho, theta, p: ConstitutiveParams):
    """Maxwell-Stefan amplitude ``C0 = C0_bar * rho * (1 + theta)``."""
    rho = _check_nonnegative("rho", rho)
    theta = _check_nonnegative("theta", theta)
    return p.C0_bar * rho * (1.0 + theta)
