"""Time integration of the regularised mixture system.

Unknowns are the density ``rho``, the velocity ``u`` (Galerkin space
``X_N``), the temperature ``theta`` and the species entropy variables
``r_k = log(rho_k / m_k)``.  One time step is a first-order IMEX step wrapped
in a Picard iteration: with ``(u*, r*, theta*)`` frozen at the latest
iterate,

1. ``rho``   from the continuity equation (transport explicit, ``eps Delta``
   by the exact integrating factor ``exp(-eps |k|^2 dt)``);
2. ``theta`` from the thermal energy equation for ``rho theta + beta theta^4``;
3. ``u``     from the Galerkin momentum equation for ``rho u``;
4. ``r``     from the species equations for ``delta r_k + e^{r_k}``;

and the map is repeated until two successive iterates agree to
``picard_tol``.  Each conserved quantity ``q`` is advanced as

    q_new = q_old + dt * F(iterate) + dt * L(corr),   (c - dt L) corr = q_old + dt F - q(iterate)

where ``L`` is a constant-coefficient Fourier multiplier approximating the
stiff diffusive part.  The correction vanishes at the fixed point, so the
converged step is backward Euler in the nonlinear terms, while ``L``
keeps the iteration contractive for diffusion numbers well above one.
``L`` has no zero mode, so the correction never changes a ledger.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import constitutive as th
from .chemistry import ReactionKind, ReactionModel, production_rates
from .constitutive import ConstitutiveParams, DomainError
from .maxwell_stefan import flux_entropic
from .spectral import GridError, SpectralGrid

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Base class for failures raised while stepping."""


class PositivityError(SolverError):
    """A field that must stay positive did not."""

    def __init__(self, field_name, time, index, value):
        self.field_name = field_name
        self.time = time
        self.index = index
        self.value = value
        super().__init__(
            f"positivity violated: min {field_name} = {value:.6g} at grid index "
            f"{index}, t = {time:.6g}")


class StepRejected(SolverError):
    """Picard iteration (or an inner solve) failed to converge."""

    def __init__(self, reason, time, iterations=0, residual=float("nan")):
        self.reason = reason
        self.time = time
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"step rejected at t = {time:.6g}: {reason} "
            f"(iterations={iterations}, residual={residual:.3g})")


class RunAborted(SolverError):
    """The run could not continue; names the violated invariant."""

    def __init__(self, invariant, time, detail, location=None):
        self.invariant = invariant
        self.time = time
        self.location = location
        self.detail = detail
        where = "" if location is None else f" at grid index {location}"
        super().__init__(f"run aborted: {invariant} violated at t = {time:.6g}{where}: {detail}")


@dataclass(frozen=True)
class ApproxParams:
    """Regularisation parameters and time-stepping controls.

    ``lam`` is the high-order regularisation weight (``lambda``); ``N`` is the
    Galerkin radius, ``None`` meaning the largest radius the grid supports.
    """

    epsilon: float = 1e-3
    delta: float = 0.0
    lam: float = 1e-6
    s: int = 1
    N: int | None = None
    dt: float = 1e-3
    t_end: float = 0.1
    picard_tol: float = 1e-10
    picard_max: int = 50
    r_min: float = -40.0
    retry_budget: int = 3
    rhon_band: float = 1e-4

    def __post_init__(self):
        for name in ("epsilon", "delta", "lam"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} >= 0 required")
        if int(self.s) != self.s or self.s < 0:
            raise DomainError("s must be a nonnegative integer")
        if self.lam > 0 and 2 * self.s + 1 < 3:
            raise DomainError("2s + 1 >= 3 required when lambda > 0")
        if not self.dt > 0:
            raise DomainError("dt > 0 required")
        if self.t_end < 0:
            raise DomainError("t_end >= 0 required")
        if not self.picard_tol > 0 or self.picard_max < 1:
            raise DomainError("picard_tol > 0 and picard_max >= 1 required")
        if self.retry_budget < 0:
            raise DomainError("retry_budget >= 0 required")
        if self.N is not None and self.N < 0:
            raise DomainError("N >= 0 required")

    def truncation(self, grid: SpectralGrid) -> int:
        N = grid.max_truncation if self.N is None else self.N
        grid.truncation_mask(N)  # raises GridError when N is too large
        return N


@dataclass
class MixtureState:
    """Collocation values of the unknowns at one instant."""

    rho: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    r: np.ndarray
    time: float = 0.0

    def copy(self) -> "MixtureState":
        return MixtureState(self.rho.copy(), self.u.copy(), self.theta.copy(),
                            self.r.copy(), float(self.time))

    def species_densities(self, p: ConstitutiveParams) -> np.ndarray:
        return p.mass_column(self.rho.ndim) * np.exp(self.r)

    def rhon(self, p: ConstitutiveParams) -> np.ndarray:
        return np.sum(self.species_densities(p), axis=0)


@dataclass
class InitialData:
    """Initial density, momentum, temperature and species densities."""

    rho0: np.ndarray
    m0: np.ndarray
    theta0: np.ndarray
    rho_k0: np.ndarray
    consistency_tol: float = 1e-12

    def __post_init__(self):
        if not np.min(self.rho0) > 0:
            raise DomainError("inf rho0 > 0 required")
        if not np.min(self.theta0) > 0:
            raise DomainError("inf theta0 > 0 required")
        if not np.all(np.isfinite(self.theta0)):
            raise DomainError("theta0 must be bounded")
        if np.any(self.rho_k0 < 0):
            raise DomainError("rho_k0 >= 0 required")
        dev = np.max(np.abs(self.rho_k0.sum(axis=0) - self.rho0) / self.rho0)
        if dev > self.consistency_tol:
            raise DomainError(f"sum_k rho_k0 must equal rho0 (relative deviation {dev:.3g})")

    def to_state(self, grid: SpectralGrid, ap: ApproxParams, p: ConstitutiveParams) -> MixtureState:
        """Galerkin-consistent initial state: ``rho u(0) = P_N m0`` and ``r = log(rho_k/m_k)``."""
        N = ap.truncation(grid)
        rho = np.array(self.rho0, dtype=float)
        m_proj = grid.project(self.m0, N)
        u = mass_matrix_solve(grid, rho, m_proj, N, guess=grid.project(m_proj / rho, N))
        m = p.mass_column(grid.dim)
        with np.errstate(divide="ignore"):
            r = np.log(self.rho_k0 / m)
        r = np.maximum(r, ap.r_min)
        return MixtureState(rho, u, np.array(self.theta0, dtype=float), r, 0.0)


# ----------------------------------------------------------------------------
# pointwise inversions of the conserved quantities
# ----------------------------------------------------------------------------

def invert_thermal(w, rho, beta, tol=1e-15, maxiter=60):
    """Solve ``rho z + beta z^4 = w`` for ``z > 0`` pointwise.

    Newton from the right of the root (the map is convex and increasing),
    bisection for any point that does not settle.
    """
    w = np.asarray(w, dtype=float)
    rho = np.broadcast_to(np.asarray(rho, dtype=float), w.shape)
    if not np.all(w > 0):
        raise DomainError("thermal energy must be positive")
    if beta == 0:
        return w / rho
    z = np.minimum(w / rho, (w / beta) ** 0.25)
    done = np.zeros(w.shape, dtype=bool)
    for _ in range(maxiter):
        f = rho * z + beta * z ** 4 - w
        step = f / (rho + 4 * beta * z ** 3)
        z = z - step
        done = np.abs(step) <= tol * z
        if done.all():
            return z
    bad = ~done | ~(z > 0)
    lo = np.zeros(int(bad.sum()))
    hi = np.minimum(w[bad] / rho[bad], (w[bad] / beta) ** 0.25)
    rb, wb = rho[bad], w[bad]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        above = rb * mid + beta * mid ** 4 > wb
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    z[bad] = 0.5 * (lo + hi)
    return z


def invert_species(q, delta, tol=1e-15, maxiter=200):
    """Solve ``delta z + e^z = q`` pointwise."""
    q = np.asarray(q, dtype=float)
    if delta == 0:
        if not np.all(q > 0):
            raise DomainError("species density must be positive when delta = 0")
        return np.log(q)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(q > 0, np.maximum(np.log(np.where(q > 0, q, 1.0)), 0.0), 0.0)
    for _ in range(maxiter):
        ez = np.exp(z)
        step = (delta * z + ez - q) / (delta + ez)
        z = z - step
        if np.all(np.abs(step) <= tol * np.maximum(1.0, np.abs(z))):
            return z
    raise DomainError("species inversion did not converge")


def mass_matrix_solve(grid: SpectralGrid, rho, b, N, guess=None, rtol=1e-14):
    """Find ``u`` in ``X_N`` with ``P_N(rho u) = b`` (``b`` already in ``X_N``).

    Conjugate gradients on the symmetric positive definite Galerkin mass
    operator; the zero mode is then matched exactly so that
    ``integral rho u == integral b`` to round-off.
    """
    b = np.asarray(b, dtype=float)
    shape = b.shape
    mask = grid.truncation_mask(N)

    def proj(v):
        return grid.apply_multiplier(v, mask)

    def matvec(v):
        return proj(rho * proj(v.reshape(shape))).ravel()

    op = LinearOperator((b.size, b.size), matvec=matvec, dtype=float)
    x0 = None if guess is None else np.asarray(guess, dtype=float).ravel()
    # velocities below 1e-14 (relative to a unit flow) are round-off
    tol = rtol * max(np.linalg.norm(b), np.linalg.norm(rho) * np.sqrt(shape[0]))
    if np.linalg.norm(b) == 0:
        return np.zeros(shape)
    if not (np.all(np.isfinite(b)) and np.all(np.isfinite(rho))):
        raise StepRejected("non-finite iterate", float("nan"))
    with np.errstate(divide="ignore", invalid="ignore"):
        sol, info = cg(op, b.ravel(), x0=x0, rtol=0.0, atol=tol, maxiter=500)
    if not np.all(np.isfinite(sol)):
        raise StepRejected("mass-matrix solve broke down", float("nan"), iterations=500)
    u = proj(sol.reshape(shape))
    res = np.linalg.norm(matvec(u.ravel()) - b.ravel())
    if info != 0 and not res <= 100 * tol:
        raise StepRejected("mass-matrix solve did not converge", float("nan"),
                           iterations=500, residual=float(res))
    mean_rho = grid.integrate(rho)
    fix = (grid.integrate(b) - grid.integrate(rho * u)) / mean_rho
    return u + fix.reshape(fix.shape + (1,) * grid.dim)


# ----------------------------------------------------------------------------
# kinematics helpers
# ----------------------------------------------------------------------------

def velocity_gradient(grid: SpectralGrid, u):
    """``G[a, b] = d_b u_a``, shape ``(dim, dim, *grid)``."""
    return grid.gradient(u)


def strain_rate(grid: SpectralGrid, u):
    G = velocity_gradient(grid, u)
    return 0.5 * (G + np.swapaxes(G, 0, 1))


def _sym_frobenius_sq(T):
    return np.sum(T * T, axis=(0, 1))


@dataclass
class Forcing:
    """Optional manufactured sources, one callable per equation, each ``t -> field``."""

    rho: Callable[[float], np.ndarray] | None = None
    momentum: Callable[[float], np.ndarray] | None = None
    thermal: Callable[[float], np.ndarray] | None = None
    species: Callable[[float], np.ndarray] | None = None


@dataclass
class StepRecord:
    """What one accepted step did; feeds the energy-residual diagnostic."""

    dt: float
    picard_iters: int
    eps_theta5: float = 0.0
    eps_theta_m2: float = 0.0
    substeps: int = 1
    degenerate_points: int = 0


class MixtureSolver:
    """IMEX / Picard integrator for one grid and parameter set."""

    def __init__(self, grid: SpectralGrid, ap: ApproxParams, cp: ConstitutiveParams,
                 chem: ReactionModel | None = None, forcing: Forcing | None = None):
        self.grid = grid
        self.ap = ap
        self.cp = cp
        self.chem = chem or ReactionModel()
        self.chem.validate_for(cp)
        self.forcing = forcing or Forcing()
        self.N = ap.truncation(grid)
        self.trunc = grid.truncation_mask(self.N)
        self.mcol = cp.mass_column(grid.dim)
        self.degenerate_points = 0

    # ------------------------------------------------------------------
    # small helpers
    # ------------------------------------------------------------------
    def _proj(self, f):
        return self.grid.apply_multiplier(f, self.trunc)

    def _dealias(self, f):
        return self.grid.dealias(f)

    def _check_positive(self, name, f, t):
        if not np.all(f > 0) or not np.all(np.isfinite(f)):
            bad = np.where(np.isfinite(f), f, -np.inf)
            idx = np.unravel_index(np.argmin(bad), f.shape)
            raise PositivityError(name, t, tuple(int(i) for i in idx), float(f[idx]))

    def _if_factor(self, dt):
        return np.exp(-self.ap.epsilon * self.grid.k2 * dt)

    def thermal_energy(self, rho, theta):
        return rho * theta + self.cp.beta * theta ** 4

    def species_quantity(self, r):
        return self.ap.delta * r + np.exp(r)

    def momentum_regulariser_field(self, rho, u):
        """``rho u`` as it enters the high-order momentum regulariser."""
        return self.grid.dealiased_product(rho, u)

    # ------------------------------------------------------------------
    # tendencies (everything except the eps Delta part handled exactly)
    # ------------------------------------------------------------------
    def continuity_tendency(self, rho_adv, u):
        """``-div(rho u)`` with the flux dealiased."""
        flux = self.grid.dealiased_product(rho_adv, u)
        return -self.grid.divergence(flux), flux

    def species_fluxes(self, rho, theta, r):
        g = self.grid
        grad_r = g.gradient(r)
        grad_log_theta = g.gradient(np.log(theta))
        F = flux_entropic(r, grad_r, grad_log_theta, rho, theta, self.cp)
        return F, grad_r, grad_log_theta

    def thermal_tendency(self, rho, u, theta, r, w_adv):
        """Right-hand side of the thermal energy equation (dealiased)."""
        g, ap, cp = self.grid, self.ap, self.cp
        eps, lam, s = ap.epsilon, ap.lam, ap.s
        rhon = np.sum(self.mcol * np.exp(r), axis=0)
        er = np.exp(r)
        pim = theta * er.sum(axis=0)

        grad_theta = g.gradient(theta)
        kappa_eps = eps / cp.m_min * rhon + th.heat_conductivity(rho, theta, cp)
        total = -g.divergence(g.dealiased_product(w_adv, u))
        total += g.divergence(kappa_eps * grad_theta)

        F, grad_r, _ = self.species_fluxes(rho, theta, r)
        m_v = self.mcol[:, None]
        heat_flux = np.sum(theta * F / m_v
                           - ap.delta * theta * grad_r
                           - eps * theta * er[:, None] * grad_r, axis=0)
        total -= g.divergence(heat_flux)

        div_u = g.divergence(u)
        D = strain_rate(g, u)
        total += eps / theta ** 2 - eps * theta ** 5
        total -= (pim + cp.beta / 3.0 * theta ** 4) * div_u
        total += 2.0 * rhon * _sym_frobenius_sq(D)
        if lam > 0:
            rho_u = self.momentum_regulariser_field(rho, u)
            hi = g.laplacian_power(g.gradient(rho_u), s)
            total += lam * np.sum(hi * hi, axis=(0, 1))
            total += lam * eps * g.laplacian_power(rho, s + 1) ** 2
        if eps > 0:
            grad_rho = g.gradient(rho)
            total += eps * th.cold_pressure_derivative(rho, cp) / rho * np.sum(grad_rho ** 2, axis=0)
        return self._dealias(total)

    def momentum_tendency(self, rho, mass_flux, u, theta, r):
        """Right-hand side of the momentum equation, projected on ``X_N``."""
        g, ap, cp = self.grid, self.ap, self.cp
        lam, s, eps = ap.lam, ap.s, ap.epsilon
        rhon = np.sum(self.mcol * np.exp(r), axis=0)
        rho_k = self.mcol * np.exp(r)

        # (j (x) u)[a, b] = u_a j_b ; div over b
        conv = g.dealiased_product(u[:, None], mass_flux[None, :])
        total = -g.divergence(conv)
        stress = 2.0 * rhon * strain_rate(g, u)
        total += g.divergence(stress)
        pressure = (th.cold_pressure(rho, cp) + cp.beta / 3.0 * theta ** 4
                    + th.molecular_pressure(theta, rho_k, cp))
        total -= g.gradient(pressure)
        if lam > 0:
            rho_u = self.momentum_regulariser_field(rho, u)
            total += lam * g.dealiased_product(rho, g.laplacian_power(rho_u, 2 * s + 1))
            total += lam * g.dealiased_product(rho, g.gradient(g.laplacian_power(rho, 2 * s + 1)))
        if eps > 0:
            grad_rho = g.gradient(rho)
            G = velocity_gradient(g, u)
            total -= eps * g.dealias(np.einsum("b...,ab...->a...", grad_rho, G))
        return self._proj(total)

    def species_tendency(self, rho, e_adv, u, theta, r):
        """Species right-hand side without ``eps Delta q``, projected on ``Y_N``."""
        g, ap, cp = self.grid, self.ap, self.cp
        total = -g.divergence(g.dealiased_product(e_adv[:, None], u[None]))
        if ap.delta > 0:
            total += ap.delta * (1.0 - ap.epsilon) * g.laplacian(r)
        F, _, _ = self.species_fluxes(rho, theta, r)
        total -= g.divergence(F / self.mcol[:, None])
        if self.chem.kappa_r > 0 and self.chem.kind is not ReactionKind.INERT:
            er = np.exp(r)
            rhon = np.sum(self.mcol * er, axis=0)
            omega = production_rates(theta, self.mcol * er, self.chem, cp)
            total += rhon * theta * omega / self.mcol
        return self._proj(total)

    # ------------------------------------------------------------------
    # sub-steps
    # ------------------------------------------------------------------
    def step_continuity(self, state: MixtureState, u_frozen, dt=None):
        """Advance ``rho`` by one step with the velocity frozen."""
        dt = self.ap.dt if dt is None else dt
        tend, flux = self.continuity_tendency(state.rho, u_frozen)
        if self.forcing.rho is not None:
            tend = tend + self.forcing.rho(state.time + dt)
        E = self._if_factor(dt)
        rho = self.grid.apply_multiplier(state.rho + dt * tend, E)
        self._check_positive("rho", rho, state.time + dt)
        return rho, flux

    def step_thermal(self, state: MixtureState, rho_new, u, theta_it, r_it, dt=None):
        dt = self.ap.dt if dt is None else dt
        g, cp, ap = self.grid, self.cp, self.ap
        w_old = self.thermal_energy(state.rho, state.theta)
        tend = self.thermal_tendency(rho_new, u, theta_it, r_it, w_old)
        if self.forcing.thermal is not None:
            tend = tend + self.forcing.thermal(state.time + dt)
        target = w_old + dt * tend
        c = rho_new + 4 * cp.beta * theta_it ** 3
        rhon = np.sum(self.mcol * np.exp(r_it), axis=0)
        kap = ap.epsilon / cp.m_min * rhon + th.heat_conductivity(rho_new, theta_it, cp)
        cbar = 0.5 * (c.max() + c.min())
        kbar = 0.5 * (kap.max() + kap.min())
        resid = target - self.thermal_energy(rho_new, theta_it)
        corr = g.apply_multiplier(resid, 1.0 / (cbar + dt * kbar * g.k2))
        w_new = target + dt * kbar * g.laplacian(corr)
        self._check_positive("thermal energy", w_new, state.time + dt)
        theta = invert_thermal(w_new, rho_new, cp.beta)
        self._check_positive("theta", theta, state.time + dt)
        return theta

    def step_momentum(self, state: MixtureState, rho_new, mass_flux, u_it, theta_new, r_it, dt=None):
        dt = self.ap.dt if dt is None else dt
        g, ap = self.grid, self.ap
        m_old = state.rho * state.u
        tend = self.momentum_tendency(rho_new, mass_flux, u_it, theta_new, r_it)
        if self.forcing.momentum is not None:
            tend = tend + self._proj(self.forcing.momentum(state.time + dt))
        target = self._proj(m_old) + dt * tend
        rhon = np.sum(self.mcol * np.exp(r_it), axis=0)
        rbar = 0.5 * (rho_new.max() + rho_new.min())
        mubar = (2.0 if g.dim == 1 else 1.5) * 0.5 * (rhon.max() + rhon.min())
        stiff = mubar * g.k2 + ap.lam * rbar ** 2 * g.k2 ** (2 * ap.s + 1)
        resid = target - self._proj(rho_new * u_it)
        corr = g.apply_multiplier(resid, self.trunc / (rbar + dt * stiff))
        m_new = target - dt * g.apply_multiplier(corr, stiff)
        return mass_matrix_solve(g, rho_new, m_new, self.N, guess=u_it)

    def step_species(self, state: MixtureState, rho_new, u, theta_new, r_it, dt=None):
        dt = self.ap.dt if dt is None else dt
        g, ap = self.grid, self.ap
        q_old = self.species_quantity(state.r)
        tend = self.species_tendency(rho_new, np.exp(state.r), u, theta_new, r_it)
        if self.forcing.species is not None:
            tend = tend + self.forcing.species(state.time + dt)
        target = g.apply_multiplier(q_old + dt * tend, self._if_factor(dt))
        er = np.exp(r_it)
        c = ap.delta + er
        C0 = th.ms_amplitude(rho_new, theta_new, self.cp)
        # diagonal of C0 * Dhat, the stiff self-diffusion of r_k
        self_diff = C0 * (er / self.mcol - er ** 2 / np.sum(self.mcol * er, axis=0)) / er.sum(axis=0)
        a = ap.delta * (1.0 - ap.epsilon) + self_diff
        ax = tuple(range(1, r_it.ndim))
        cbar = 0.5 * (c.max(axis=ax) + c.min(axis=ax))
        abar = 0.5 * (a.max(axis=ax) + a.min(axis=ax))
        cbar = cbar.reshape(self.mcol.shape)
        abar = abar.reshape(self.mcol.shape)
        resid = target - self.species_quantity(r_it)
        corr = g.apply_multiplier(resid, 1.0 / (cbar + dt * abar * g.k2))
        q_new = target + dt * abar * g.laplacian(corr)
        try:
            r = invert_species(q_new, ap.delta)
        except DomainError:
            bad = q_new if ap.delta == 0 else np.exp(r_it)
            raise PositivityError("species density", state.time + dt,
                                  tuple(int(i) for i in np.unravel_index(np.argmin(bad), bad.shape)),
                                  float(bad.min())) from None
        low = r < ap.r_min
        if np.any(low):
            self.degenerate_points += int(low.sum())
            log.warning("%d species points floored at r_min=%g (t=%.6g)",
                        int(low.sum()), ap.r_min, state.time + dt)
            r = np.maximum(r, ap.r_min)
        return r

    # ------------------------------------------------------------------
    # coupled step
    # ------------------------------------------------------------------
    def picard_coupled_step(self, state: MixtureState, dt=None):
        """One time step; returns ``(new_state, iterations)``.

        Raises ``StepRejected`` when the iteration does not settle within
        ``picard_max`` sweeps and ``PositivityError`` when an iterate loses
        positivity.
        """
        dt = self.ap.dt if dt is None else dt
        g = self.grid
        u_it, theta_it, r_it, rho_it = state.u, state.theta, state.r, state.rho
        diff = np.inf
        for it in range(1, self.ap.picard_max + 1):
            rho_new, flux = self.step_continuity(state, u_it, dt)
            theta_new = self.step_thermal(state, rho_new, u_it, theta_it, r_it, dt)
            u_new = self.step_momentum(state, rho_new, flux, u_it, theta_new, r_it, dt)
            r_new = self.step_species(state, rho_new, u_it, theta_new, r_it, dt)
            num = (g.l2_norm(rho_new - rho_it) ** 2 + g.l2_norm(theta_new - theta_it) ** 2
                   + g.l2_norm(u_new - u_it) ** 2 + g.l2_norm(r_new - r_it) ** 2)
            den = (g.l2_norm(rho_new) ** 2 + g.l2_norm(theta_new) ** 2
                   + g.l2_norm(u_new) ** 2 + g.l2_norm(r_new) ** 2)
            diff = np.sqrt(num / den)
            rho_it, theta_it, u_it, r_it = rho_new, theta_new, u_new, r_new
            if not np.isfinite(diff):
                break
            if diff <= self.ap.picard_tol:
                return MixtureState(rho_new, u_new, theta_new, r_new, state.time + dt), it
        raise StepRejected("Picard iteration did not converge", state.time + dt,
                           iterations=it, residual=float(diff))

    def advance(self, state: MixtureState, dt):
        """Take a step of size ``dt``, halving on rejection within the retry budget."""
        target_time = state.time + dt
        tries = 0
        sub = dt
        current = state
        iters = 0
        nsub = 0
        eps5 = eps2 = 0.0
        g, eps = self.grid, self.ap.epsilon
        while True:
            try:
                remaining = target_time - current.time
                h = min(sub, remaining)
                nxt, it = self.picard_coupled_step(current, h)
            except (StepRejected, PositivityError) as exc:
                tries += 1
                if tries > self.ap.retry_budget:
                    t_fail = exc.time if np.isfinite(exc.time) else current.time + h
                    if isinstance(exc, PositivityError):
                        raise RunAborted(f"positivity of {exc.field_name}", t_fail,
                                         str(exc), exc.index) from exc
                    raise RunAborted("Picard convergence", t_fail, str(exc)) from exc
                sub *= 0.5
                log.info("step rejected (%s); retrying with dt=%.3g", exc, sub)
                continue
            if eps > 0:
                eps5 += h * eps * float(g.integrate(nxt.theta ** 5))
                eps2 += h * eps * float(g.integrate(nxt.theta ** -2.0))
            iters = max(iters, it)
            nsub += 1
            current = nxt
            if target_time - current.time <= 1e-12 * max(1.0, abs(target_time)):
                current.time = target_time
                return current, StepRecord(dt, iters, eps5, eps2, nsub)


def run(init: InitialData | MixtureState, grid: SpectralGrid, ap: ApproxParams,
        cp: ConstitutiveParams, chem: ReactionModel | None = None,
        sinks: Iterable[Callable[[MixtureState, StepRecord | None], None]] = (),
        forcing: Forcing | None = None, check_rhon: bool | None = None):
    """Integrate from ``init`` to ``ap.t_end``.

    Every sink is called as ``sink(state, record)`` with the initial state
    (``record is None``) and after each accepted step.  Returns the final
    state.
    """
    solver = MixtureSolver(grid, ap, cp, chem, forcing)
    state = init.to_state(grid, ap, cp) if isinstance(init, InitialData) else init.copy()
    sinks = list(sinks)
    for sink in sinks:
        sink(state, None)
    if check_rhon is None:
        check_rhon = ap.delta == 0 and forcing is None and _rhon_deviation(state, cp) <= 1e-12
    nsteps = int(round(ap.t_end / ap.dt))
    if nsteps * ap.dt < ap.t_end * (1 - 1e-12):
        nsteps += 1
    for n in range(nsteps):
        dt = min(ap.dt, ap.t_end - state.time)
        if dt <= 0:
            break
        state, record = solver.advance(state, dt)
        record.degenerate_points = solver.degenerate_points
        if check_rhon:
            dev = _rhon_deviation(state, cp)
            if dev > ap.rhon_band:
                raise RunAborted("species/total density band", state.time,
                                 f"max |rho^n - rho|/rho = {dev:.3g} > {ap.rhon_band:g}")
        for sink in sinks:
            sink(state, record)
    return state


def _rhon_deviation(state: MixtureState, cp: ConstitutiveParams) -> float:
    return float(np.max(np.abs(state.rhon(cp) - state.rho) / state.rho))
