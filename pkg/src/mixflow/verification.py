"""Manufactured-solution harness.

A case fixes closed-form targets ``rho*, u*, theta*, r*`` (trigonometric
polynomials of degree <= 2 in ``y = x_1 + ... + x_dim``, modulated in time by
``g(t) = 1 + a sin t``) and adds to each equation the forcing

    f = d/dt(conserved quantity at the target) - (right-hand side at the target)

so the targets solve the forced system exactly.  Time derivatives are
closed-form chain rules; right-hand sides are evaluated with the solver's own
tendency operators on a fine grid, where every derivative is exact and the
dealiasing error of the nonlinear products is below round-off, then sampled
at the coarse collocation points.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .chemistry import ReactionKind, ReactionModel
from .constitutive import ConstitutiveParams
from .solver import ApproxParams, Forcing, MixtureSolver, MixtureState, SolverError, run
from .spectral import GridError, SpectralGrid

log = logging.getLogger(__name__)

FINE_M = 128


@dataclass(frozen=True)
class TrigProfile:
    """``mean + g(t) * sum_j (cos_j cos(j y) + sin_j sin(j y))`` for ``j = 1, 2``."""

    mean: float
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()

    @property
    def degree(self) -> int:
        return max(len(self.cos), len(self.sin))

    def oscillation(self, x) -> np.ndarray:
        y = np.sum(x, axis=0)
        out = np.zeros_like(y)
        for j, a in enumerate(self.cos, start=1):
            out += a * np.cos(j * y)
        for j, b in enumerate(self.sin, start=1):
            out += b * np.sin(j * y)
        return out

    def value(self, x, g: float) -> np.ndarray:
        return self.mean + g * self.oscillation(x)

    def rate(self, x, dg: float) -> np.ndarray:
        return dg * self.oscillation(x)


@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    dim: int
    rho: TrigProfile
    u: tuple[TrigProfile, ...]
    theta: TrigProfile
    r: tuple[TrigProfile, ...]
    cp: ConstitutiveParams
    ap: ApproxParams
    chem: ReactionModel = field(default_factory=ReactionModel)
    time_amp: float = 0.5

    def __post_init__(self):
        if len(self.u) != self.dim:
            raise GridError("one velocity profile per dimension required")
        if len(self.r) != self.cp.n_species:
            raise GridError("one entropy-variable profile per species required")
        for prof in (self.rho, self.theta, *self.u, *self.r):
            if prof.degree > 2:
                raise GridError("targets must have degree <= 2")
        amp = 1.0 + abs(self.time_amp)
        for name, prof in (("rho", self.rho), ("theta", self.theta)):
            if not prof.mean - amp * (sum(map(abs, prof.cos)) + sum(map(abs, prof.sin))) > 0:
                raise GridError(f"target {name} must stay positive")

    def g(self, t):
        return 1.0 + self.time_amp * np.sin(t)

    def dg(self, t):
        return self.time_amp * np.cos(t)

    def steady(self) -> "ManufacturedCase":
        return replace(self, time_amp=0.0)

    # ------------------------------------------------------------------
    def target(self, grid: SpectralGrid, t: float) -> MixtureState:
        x, g = grid.x, self.g(t)
        return MixtureState(
            rho=self.rho.value(x, g),
            u=np.stack([p.value(x, g) for p in self.u]),
            theta=self.theta.value(x, g),
            r=np.stack([p.value(x, g) for p in self.r]),
            time=float(t),
        )

    def target_rates(self, grid: SpectralGrid, t: float):
        x, dg = grid.x, self.dg(t)
        return (self.rho.rate(x, dg), np.stack([p.rate(x, dg) for p in self.u]),
                self.theta.rate(x, dg), np.stack([p.rate(x, dg) for p in self.r]))

    def forcing_fields(self, grid: SpectralGrid, t: float, fine_M: int | None = None):
        """Forcing of (continuity, momentum, thermal, species) at ``grid``'s points."""
        fine_M = fine_M or max(FINE_M, 2 * grid.M)
        if fine_M % grid.M:
            fine_M = grid.M * (fine_M // grid.M + 1)
        fine = SpectralGrid(self.dim, fine_M)
        stride = fine_M // grid.M
        ap_f = replace(self.ap, N=None)
        solver = MixtureSolver(fine, ap_f, self.cp, self.chem)
        s = self.target(fine, t)
        rho_t, u_t, theta_t, r_t = self.target_rates(fine, t)
        cp, ap = self.cp, self.ap

        cont, flux = solver.continuity_tendency(s.rho, s.u)
        cont = cont + ap.epsilon * fine.laplacian(s.rho)
        f_rho = rho_t - cont

        f_m = rho_t * s.u + s.rho * u_t - solver.momentum_tendency(s.rho, flux, s.u, s.theta, s.r)

        w = solver.thermal_energy(s.rho, s.theta)
        w_t = rho_t * s.theta + (s.rho + 4 * cp.beta * s.theta ** 3) * theta_t
        f_w = w_t - solver.thermal_tendency(s.rho, s.u, s.theta, s.r, w)

        er = np.exp(s.r)
        q_t = (ap.delta + er) * r_t
        sp = solver.species_tendency(s.rho, er, s.u, s.theta, s.r)
        sp = sp + ap.epsilon * fine.laplacian(solver.species_quantity(s.r))
        f_q = q_t - sp

        sl = (Ellipsis,) + (slice(None, None, stride),) * self.dim
        return f_rho[sl], f_m[sl], f_w[sl], f_q[sl]

    def forcing(self, grid: SpectralGrid) -> Forcing:
        cache: dict[float, tuple] = {}

        def get(t, i):
            key = 0.0 if self.time_amp == 0 else float(t)
            if key not in cache:
                cache.clear()
                cache[key] = self.forcing_fields(grid, key)
            return cache[key][i]

        return Forcing(rho=lambda t: get(t, 0), momentum=lambda t: get(t, 1),
                       thermal=lambda t: get(t, 2), species=lambda t: get(t, 3))


def _profile(mean, cos=(), sin=()):
    return TrigProfile(float(mean), tuple(cos), tuple(sin))


def build_case(which: str, dim: int = 1, ap: ApproxParams | None = None,
               cp: ConstitutiveParams | None = None) -> ManufacturedCase:
    """Named manufactured cases.

    ``continuity``  density and velocity vary, temperature and species flat
    ``thermal``     temperature varies on a flat flow
    ``species``     entropy variables vary on a flat flow
    ``coupled``     everything varies, two inert species of masses 1 and 2
    ``reactive``    everything varies, a reversible pair of equal masses
    """
    ap = ap or ApproxParams(epsilon=1e-2, delta=0.0, lam=1e-6, s=1, dt=1e-3, t_end=0.1)
    flat_u = tuple(_profile(0.0) for _ in range(dim))
    shear_u = (_profile(0.0, sin=(0.1,), cos=(0.0, 0.05)),) + tuple(
        _profile(0.0, cos=(0.05,)) for _ in range(dim - 1))
    if which == "continuity":
        cp = cp or ConstitutiveParams()
        return ManufacturedCase(which, dim, _profile(1.5, cos=(0.2,)),
                                (_profile(0.0, sin=(0.2,)),) + flat_u[1:],
                                _profile(1.0), (_profile(np.log(0.5)), _profile(np.log(0.5))),
                                cp, ap)
    if which == "thermal":
        cp = cp or ConstitutiveParams()
        return ManufacturedCase(which, dim, _profile(1.5), flat_u,
                                _profile(1.0, cos=(0.1,), sin=(0.0, 0.05)),
                                (_profile(np.log(0.5)), _profile(np.log(0.5))), cp, ap)
    if which == "species":
        cp = cp or ConstitutiveParams()
        return ManufacturedCase(which, dim, _profile(1.5), flat_u, _profile(1.0),
                                (_profile(np.log(0.5), cos=(0.1,)),
                                 _profile(np.log(0.5), cos=(-0.1,), sin=(0.05,))), cp, ap)
    if which in ("coupled", "reactive"):
        if which == "coupled":
            cp = cp or ConstitutiveParams(n_species=2, m=(1.0, 2.0))
            chem = ReactionModel()
            r1 = _profile(np.log(0.25), cos=(-0.1,), sin=(0.0, 0.05))
        else:
            cp = cp or ConstitutiveParams(n_species=2, m=(1.0, 1.0))
            chem = ReactionModel(ReactionKind.REVERSIBLE_PAIR, (0, 1), kappa_r=1.0, omega_bar=1.0)
            r1 = _profile(np.log(0.5), cos=(-0.1,), sin=(0.0, 0.05))
        return ManufacturedCase(
            which, dim,
            _profile(1.5, cos=(0.1, 0.05), sin=(0.0, 0.03)),
            shear_u,
            _profile(1.0, cos=(0.1,), sin=(0.0, 0.05)),
            (_profile(np.log(0.5), cos=(0.1,)), r1),
            cp, ap, chem)
    raise ValueError(f"unknown manufactured case {which!r}; choose from {CASE_NAMES}")


CASE_NAMES = ("continuity", "thermal", "species", "coupled", "reactive")


def solution_error(grid: SpectralGrid, state: MixtureState, target: MixtureState) -> float:
    """Relative discrete L2 error over all unknowns."""
    num = den = 0.0
    for a, b in ((state.rho, target.rho), (state.u, target.u),
                 (state.theta, target.theta), (state.r, target.r)):
        num += grid.l2_norm(a - b) ** 2
        den += grid.l2_norm(b) ** 2
    return float(np.sqrt(num / den))


def run_case(case: ManufacturedCase, M: int, dt: float | None = None,
             t_end: float | None = None) -> float:
    """Forced run from the target at ``t = 0``; returns the error at ``t_end``.

    A failed run is reported as ``nan`` rather than raised.
    """
    grid = SpectralGrid(case.dim, M)
    ap = replace(case.ap, dt=dt or case.ap.dt, t_end=case.ap.t_end if t_end is None else t_end)
    try:
        final = run(case.target(grid, 0.0), grid, ap, case.cp, case.chem,
                    forcing=case.forcing(grid), check_rhon=False)
    except SolverError as exc:
        log.warning("manufactured run %s M=%d dt=%g failed: %s", case.name, M, ap.dt, exc)
        return float("nan")
    return solution_error(grid, final, case.target(grid, final.time))


def observed_order(hs, errors) -> float:
    """Least-squares slope of ``log error`` against ``log h``."""
    hs, errors = np.asarray(hs, float), np.asarray(errors, float)
    if np.any(~np.isfinite(errors)) or np.any(errors <= 0):
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


@dataclass
class StudyResult:
    resolutions: tuple[int, ...]
    spatial_errors: tuple[float, ...]
    dts: tuple[float, ...]
    temporal_errors: tuple[float, ...]
    temporal_order: float

    @property
    def spatial_ratios(self) -> tuple[float, ...]:
        e = self.spatial_errors
        return tuple(e[i] / e[i + 1] for i in range(len(e) - 1))


def convergence_study(case: ManufacturedCase, resolutions=(8, 16, 32),
                      dts=(1e-2, 5e-3, 2.5e-3), temporal_M: int = 32,
                      spatial_dt: float | None = None) -> StudyResult:
    """Spatial study on steady targets, temporal study on the time-dependent ones."""
    if len(resolutions) < 3 or len(dts) < 3:
        raise ValueError("a study needs at least 3 resolutions and 3 time steps")
    steady = case.steady()
    spatial = tuple(run_case(steady, M, dt=spatial_dt) for M in resolutions)
    temporal = tuple(run_case(case, temporal_M, dt=dt) for dt in dts)
    return StudyResult(tuple(resolutions), spatial, tuple(dts), temporal,
                       observed_order(dts, temporal))
