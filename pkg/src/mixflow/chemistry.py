"""Species production rates.

The default reactive model is a single reversible exchange ``a <-> b``
between two species of equal molar mass, driven by the Gibbs difference and
saturated with ``tanh`` so the rates stay bounded and Lipschitz:

    omega_a = omega_bar * tanh(-kappa_r * (g_a - g_b) / theta),  omega_b = -omega_a

Since ``-(g_a - g_b) * omega_a >= 0`` the chemical entropy production is
nonnegative, and ``g_a -> -inf`` as ``Y_a -> 0`` makes the depleted species
grow.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .constitutive import ConstitutiveParams, DomainError, gibbs


class ReactionKind(str, Enum):
    INERT = "inert"
    REVERSIBLE_PAIR = "reversible_pair"


@dataclass(frozen=True)
class ReactionModel:
    kind: ReactionKind = ReactionKind.INERT
    pair: tuple[int, int] = (0, 1)
    kappa_r: float = 0.0
    omega_bar: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ReactionKind(self.kind))
        object.__setattr__(self, "pair", tuple(int(i) for i in self.pair))
        if self.kappa_r < 0:
            raise DomainError("kappa_r >= 0 required")
        if not self.omega_bar > 0:
            raise DomainError("omega_bar > 0 required")
        if self.kind is ReactionKind.REVERSIBLE_PAIR:
            a, b = self.pair
            if len(self.pair) != 2 or a == b or min(a, b) < 0:
                raise DomainError("reversible_pair needs two distinct species indices")

    def validate_for(self, p: ConstitutiveParams):
        """Check the model against the mixture it will run on."""
        if self.kind is not ReactionKind.REVERSIBLE_PAIR:
            return
        a, b = self.pair
        if max(a, b) >= p.n_species:
            raise DomainError(
                f"reaction pair {self.pair} out of range for {p.n_species} species")
        if p.m[a] != p.m[b]:
            raise DomainError("reversible_pair requires equal molar masses")


def production_rates(theta, rho_k, model: ReactionModel, p: ConstitutiveParams):
    """Per-species production rates, shape ``rho_k.shape``."""
    theta = np.asarray(theta, dtype=float)
    rho_k = np.asarray(rho_k, dtype=float)
    if np.any(~(theta > 0)):
        raise DomainError("theta > 0 required")
    omega = np.zeros(np.broadcast_shapes(rho_k.shape, (rho_k.shape[0],) + theta.shape))
    if model.kind is ReactionKind.INERT or model.kappa_r == 0.0:
        return omega
    model.validate_for(p)
    a, b = model.pair
    # g_a - g_b with equal masses is (theta/m) log(rho_a/rho_b); evaluating it
    # this way keeps the limit rho_a -> 0 finite in floating point (-> +/-inf
    # inside tanh is fine)
    with np.errstate(divide="ignore"):
        dg = theta / p.m[a] * (np.log(rho_k[a]) - np.log(rho_k[b]))
    wa = model.omega_bar * np.tanh(-model.kappa_r * dg / theta)
    omega[a] = wa
    omega[b] = -wa
    return omega


def chemical_affinity_production(theta, rho_k, omega, p: ConstitutiveParams):
    """``-sum_k g_k omega_k``, zero where a species is absent and idle."""
    total = np.zeros(np.broadcast_shapes(np.shape(theta), np.shape(rho_k)[1:]))
    for k in range(np.shape(rho_k)[0]):
        active = omega[k] != 0
        if not np.any(active):
            continue
        gk = np.where(active, gibbs(theta, np.where(active, rho_k[k], 1.0), k, p), 0.0)
        total = total - gk * omega[k]
    return total
