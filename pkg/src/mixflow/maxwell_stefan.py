"""Multicomponent (Maxwell-Stefan type) diffusion closure.

Array layout: species on axis 0, then (for matrices) a second species axis,
then (for vectors) the spatial component axis, then any number of trailing
point/batch axes.  So

* mass fractions ``Y``      -> ``(n, *pts)``
* mixing matrix ``C``       -> ``(n, n, *pts)``
* gradients ``grad_p``      -> ``(n, dim, *pts)``
* fluxes ``F``              -> ``(n, dim, *pts)``
"""
from __future__ import annotations

import numpy as np

from .constitutive import ConstitutiveParams, DomainError, ms_amplitude

SIMPLEX_TOL = 1e-12


def mixing_matrix(Y) -> np.ndarray:
    """``C_kk = 1 - Y_k``, ``C_kl = -Y_k`` (l != k); columns sum to zero."""
    Y = np.asarray(Y, dtype=float)
    if np.any(Y < -SIMPLEX_TOL) or np.any(Y > 1 + SIMPLEX_TOL):
        raise DomainError("mass fractions must lie in [0, 1]")
    if np.any(np.abs(Y.sum(axis=0) - 1.0) > SIMPLEX_TOL):
        raise DomainError("mass fractions must sum to 1")
    n = Y.shape[0]
    C = -np.broadcast_to(Y[:, None], (n,) + Y.shape).copy()
    idx = np.arange(n)
    C[idx, idx] += 1.0
    return C


def _apply(C, v):
    # (n, n, *pts) x (n, dim, *pts) -> (n, dim, *pts)
    return np.einsum("kl...,ld...->kd...", C, v)


def diffusion_force(k: int, rho_k, theta, grad_pk, grad_pim, p: ConstitutiveParams):
    """Diffusion force of species ``k`` in its defining form.

    ``d_k = grad(p_k/pi_m) + (p_k/pi_m - Y_k) grad log pi_m`` with the
    quotient rule expanded; ``rho_k`` holds all species densities.
    """
    rho_k = np.asarray(rho_k, dtype=float)
    m = p.mass_column(rho_k.ndim - 1)
    pk_all = theta * rho_k / m
    pim = pk_all.sum(axis=0)
    if np.any(~(pim > 0)):
        raise DomainError("molecular pressure must be positive")
    pk = pk_all[k]
    Yk = rho_k[k] / rho_k.sum(axis=0)
    grad_pk = np.asarray(grad_pk, dtype=float)
    grad_pim = np.asarray(grad_pim, dtype=float)
    grad_ratio = grad_pk / pim - pk * grad_pim / pim ** 2
    return grad_ratio + (pk / pim - Yk) * grad_pim / pim


def flux_primitive(rho, theta, rho_k, grad_p, p: ConstitutiveParams):
    """``F_k = -(C0/pi_m) sum_l C_kl grad p_l``."""
    rho_k = np.asarray(rho_k, dtype=float)
    m = p.mass_column(rho_k.ndim - 1)
    pim = np.sum(theta * rho_k / m, axis=0)
    if np.any(~(pim > 0)):
        raise DomainError("molecular pressure must be positive")
    Y = rho_k / rho_k.sum(axis=0)
    C = mixing_matrix(Y)
    return -(ms_amplitude(rho, theta, p) / pim)[None, None] * _apply(C, grad_p)


def flux_from_forces(rho, theta, rho_k, forces, p: ConstitutiveParams):
    """``F_k = -C0 sum_l C_kl d_l`` from precomputed diffusion forces."""
    Y = rho_k / np.sum(rho_k, axis=0)
    return -ms_amplitude(rho, theta, p)[None, None] * _apply(mixing_matrix(Y), forces)


def dhat_matrix(r, theta, p: ConstitutiveParams) -> np.ndarray:
    """Entropic diffusion matrix ``D_kl = theta C_kl e^{r_l} / (pi_m m_k)``.

    With ``Y_k = m_k e^{r_k} / rho^n`` this equals
    ``(theta/pi_m) * (diag(e^r/m) - e^r (e^r)^T / rho^n)``, which is how it is
    evaluated: the symmetric form avoids rounding asymmetry.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(~(theta > 0)):
        raise DomainError("theta > 0 required")
    if not np.all(np.isfinite(r)):
        raise DomainError("entropy variables must be finite")
    m = p.mass_column(r.ndim - 1)
    # common shift cancels in every ratio and keeps exp() in range
    shift = r.max(axis=0)
    er = np.exp(r - shift)
    pim_scaled = er.sum(axis=0)
    rhon_scaled = np.sum(m * er, axis=0)
    n = r.shape[0]
    D = -er[:, None] * er[None, :] / rhon_scaled
    idx = np.arange(n)
    # diagonal as e_k * sum_{l != k} m_l e_l / (m_k rho^n): no cancellation
    # when one species dominates
    mer = m * er
    others = np.stack([np.sum(np.delete(mer, k, axis=0), axis=0) for k in range(n)])
    D[idx, idx] = er * others / (m * rhon_scaled)
    # theta / pi_m with pi_m = theta * sum e^r
    return D / pim_scaled


def flux_entropic(r, grad_r, grad_log_theta, rho, theta, p: ConstitutiveParams):
    """``F_k = -C0 m_k sum_l D_kl (grad r_l + grad log theta)``."""
    r = np.asarray(r, dtype=float)
    D = dhat_matrix(r, theta, p)
    m = p.mass_column(r.ndim - 1)
    drive = np.asarray(grad_r) + np.asarray(grad_log_theta)[None]
    C0 = ms_amplitude(rho, theta, p)
    return -C0[None, None] * m[:, None] * _apply(D, drive)


def pressure_gradient_decomposition(rho_k, grad_p, p: ConstitutiveParams,
                                    grad_rho_theta=None):
    """Split partial-pressure gradients into ``C grad p`` plus a ``Y`` multiple.

    Returns ``(projected, alpha)`` with ``grad p_k = projected_k + alpha Y_k``
    where ``alpha = (grad(rho theta) - sum_k m_k projected_k) / sum_k m_k Y_k``.
    When ``grad_rho_theta`` is omitted it is taken from the Boyle law,
    ``grad(rho theta) = sum_k m_k grad p_k``.
    """
    rho_k = np.asarray(rho_k, dtype=float)
    grad_p = np.asarray(grad_p, dtype=float)
    m = p.mass_column(rho_k.ndim - 1)
    Y = rho_k / rho_k.sum(axis=0)
    denom = np.sum(m * Y, axis=0)
    if np.any(~(denom > 0)):
        raise DomainError("degenerate mass-fraction denominator")
    projected = _apply(mixing_matrix(Y), grad_p)
    m_v = m[:, None]
    if grad_rho_theta is None:
        grad_rho_theta = np.sum(m_v * grad_p, axis=0)
    alpha = (grad_rho_theta - np.sum(m_v * projected, axis=0)) / denom[None]
    return projected, alpha
