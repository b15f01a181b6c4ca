"""Acceptance criteria A1 to A11.

Each test reports a single PASS/FAIL line through ``record_criterion``; the
lines are repeated in the terminal summary of the pytest run.
"""
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import record_criterion, standing_wave
from mixflow import (ApproxParams, ConstitutiveParams, ReactionKind, ReactionModel,
                     SpectralGrid, run)
from mixflow import maxwell_stefan as ms
from mixflow.cli import main
from mixflow.diagnostics import DiagnosticsLog, total_momentum
from mixflow.storage import decode_snapshot, encode_snapshot, read_snapshot
from mixflow.verification import build_case, convergence_study

A4_PARAMS = ApproxParams(epsilon=1e-3, delta=0.0, lam=1e-6, s=1, dt=1e-3, t_end=0.1)
A4_CP = ConstitutiveParams(n_species=2, m=(1.0, 2.0))


def logged_run(init, grid, ap, cp, chem=None):
    log = DiagnosticsLog(grid, ap, cp, chem)
    states = []
    t0 = time.perf_counter()
    final = run(init, grid, ap, cp, chem, sinks=[log, lambda s, rec: states.append(s)])
    return log, states, final, time.perf_counter() - t0


@pytest.fixture(scope="module")
def a4_run():
    grid = SpectralGrid(1, 64)
    return (grid,) + logged_run(standing_wave(grid), grid, A4_PARAMS, A4_CP)


@pytest.fixture(scope="module")
def a6_run():
    grid = SpectralGrid(1, 64)
    cp = ConstitutiveParams(n_species=2, m=(1.0, 1.0))
    chem = ReactionModel(ReactionKind.REVERSIBLE_PAIR, (0, 1), kappa_r=1.0)
    return (grid,) + logged_run(standing_wave(grid, Y0=0.8), grid, A4_PARAMS, cp, chem)


def random_points(rng, n, pts):
    cp = ConstitutiveParams(n_species=n, m=tuple(rng.uniform(0.5, 4.0, n)))
    m = np.array(cp.m)[:, None]
    rho_k = rng.uniform(0.01, 3.0, (n, pts))
    theta = rng.uniform(0.1, 5.0, pts)
    grad_rho_k = rng.normal(size=(n, 3, pts))
    grad_theta = rng.normal(size=(3, pts))
    rho = rho_k.sum(axis=0)
    grad_p = (theta * grad_rho_k + grad_theta[None] * rho_k[:, None]) / m[:, None]
    Fp = ms.flux_primitive(rho, theta, rho_k, grad_p, cp)
    Fe = ms.flux_entropic(np.log(rho_k / m), grad_rho_k / rho_k[:, None], grad_theta / theta,
                          rho, theta, cp)
    return Fp, Fe


def test_A1_flux_null_sum():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for n in (2, 3, 5):
        for F in random_points(rng, n, 10_000):
            ratio = np.abs(F.sum(axis=0)).max(axis=0) / np.abs(F).max(axis=(0, 1))
            worst = max(worst, float(ratio.max()))
    elapsed = time.perf_counter() - t0
    record_criterion("A1", worst <= 1e-12 and elapsed < 10,
                     f"max |sum F_k| / max |F_k| = {worst:.2e} (<= 1e-12), {elapsed:.2f} s")


def test_A2_flux_form_equivalence():
    rng = np.random.default_rng(102)
    t0 = time.perf_counter()
    worst = 0.0
    for n in (2, 3, 5):
        Fp, Fe = random_points(rng, n, 1000)
        rel = np.abs(Fe - Fp).max(axis=(0, 1)) / np.abs(Fp).max(axis=(0, 1))
        worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - t0
    record_criterion("A2", worst <= 1e-10 and elapsed < 10,
                     f"max relative entropic/primitive mismatch = {worst:.2e} (<= 1e-10), {elapsed:.2f} s")


def test_A3_matrix_structure():
    rng = np.random.default_rng(103)
    t0 = time.perf_counter()
    col, sym_c, floor_c, sym_d, floor_d, bound = 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
    for n in (2, 3, 5):
        cp = ConstitutiveParams(n_species=n, m=tuple(rng.uniform(0.5, 4.0, n)))
        m = np.array(cp.m)[:, None]
        Y = rng.dirichlet(np.ones(n), 1000).T
        C = ms.mixing_matrix(Y)
        col = max(col, float(np.abs(C.sum(axis=0)).max()))
        S = np.moveaxis(C / Y[:, None], -1, 0)
        sym_c = max(sym_c, float(np.abs(S - np.swapaxes(S, 1, 2)).max() / np.abs(S).max()))
        ev = np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, 1, 2)))
        floor_c = max(floor_c, float(np.max(-ev[:, 0] / ev[:, -1])))
        r = np.log(Y / m)
        theta = rng.uniform(0.1, 10.0, 1000)
        D = np.moveaxis(ms.dhat_matrix(r, theta, cp), -1, 0)
        sym_d = max(sym_d, float(np.abs(D - np.swapaxes(D, 1, 2)).max() / np.abs(D).max()))
        ev = np.linalg.eigvalsh(0.5 * (D + np.swapaxes(D, 1, 2)))
        floor_d = max(floor_d, float(np.max(-ev[:, 0] / ev[:, -1])))
        bound = max(bound, float(np.abs(D).max() * cp.m_min))
    elapsed = time.perf_counter() - t0
    ok = (col <= 1e-14 and sym_c <= 1e-14 and floor_c <= 1e-10 and sym_d <= 1e-14
          and floor_d <= 1e-10 and bound <= 1.0 and elapsed < 10)
    record_criterion("A3", ok,
                     f"column sums {col:.1e}; C/Y asym {sym_c:.1e}, eig floor {floor_c:.1e}; "
                     f"D asym {sym_d:.1e}, eig floor {floor_d:.1e}; m_min max|D| = {bound:.3f} (<= 1); "
                     f"{elapsed:.2f} s")


def test_A4_conservation(a4_run):
    grid, log, states, final, elapsed = a4_run
    mass = log.column("total_mass")
    led = log.column("species_ledger")
    dm = float(np.max(np.abs(mass / mass[0] - 1)))
    dl = float(np.max(np.abs(led / led[0] - 1)))
    ap0 = replace(A4_PARAMS, epsilon=0.0)
    moments = []
    t0 = time.perf_counter()
    run(standing_wave(grid), grid, ap0, A4_CP,
        sinks=[lambda s, rec: moments.append(total_momentum(grid, s))])
    elapsed += time.perf_counter() - t0
    dp = float(np.max(np.abs(np.array(moments) - moments[0])))
    ok = dm <= 1e-10 and dl <= 1e-10 and dp <= 1e-9 and elapsed < 60
    record_criterion("A4", ok, f"mass drift {dm:.1e}, species ledger drift {dl:.1e} (<= 1e-10); "
                               f"momentum drift (eps=0) {dp:.1e} (<= 1e-9); {elapsed:.1f} s")


def test_A5_species_total_consistency(a4_run):
    grid, log, states, final, _ = a4_run
    dev0 = log.column("sum_rhok_dev")[0]
    dev = float(np.max(log.column("sum_rhok_dev")))
    record_criterion("A5", dev0 <= 1e-14 and dev <= 1e-6,
                     f"max_t max_x |sum rho_k - rho|/rho = {dev:.1e} (<= 1e-6), initial {dev0:.1e}")


def test_A6_entropy_production_sign(a6_run):
    grid, log, states, final, _ = a6_run
    smin = log.column("sigma_min")
    stot = log.column("sigma_total")
    margin = smin + 1e-8 * stot / grid.volume
    record_criterion("A6", bool(np.all(margin >= 0)) and len(smin) == 101,
                     f"min_t sigma_min = {smin.min():.3e}, min_t sigma_total = {stot.min():.3e}, "
                     f"{len(smin)} logged steps")


def test_A7_energy_balance_order(a4_run):
    grid, log_a4, *_ = a4_run
    per_time = {1e-3: log_a4.residual_sum / A4_PARAMS.t_end}
    for dt in (2e-3, 5e-4):
        ap = replace(A4_PARAMS, dt=dt)
        log = DiagnosticsLog(grid, ap, A4_CP)
        run(standing_wave(grid), grid, ap, A4_CP, sinks=[log])
        per_time[dt] = log.residual_sum / ap.t_end
    r1 = per_time[2e-3] / per_time[1e-3]
    r2 = per_time[1e-3] / per_time[5e-4]
    ok = 1.7 <= r1 <= 2.3 and 1.7 <= r2 <= 2.3
    record_criterion("A7", ok, f"residual per unit time {per_time[2e-3]:.3e}, {per_time[1e-3]:.3e}, "
                               f"{per_time[5e-4]:.3e}; ratios {r1:.3f}, {r2:.3f} (in [1.7, 2.3])")


def test_A8_manufactured_accuracy():
    t0 = time.perf_counter()
    res = convergence_study(build_case("coupled"), resolutions=(8, 16, 32),
                            dts=(1e-2, 5e-3, 2.5e-3), temporal_M=32)
    elapsed = time.perf_counter() - t0
    e8, e16, e32 = res.spatial_errors
    ok = e32 <= 1e-2 * e8 and res.temporal_order >= 0.9 and elapsed < 120
    record_criterion("A8", ok, f"errors M=8/16/32 {e8:.2e}/{e16:.2e}/{e32:.2e} (ratio {e8 / e32:.1e} >= 100); "
                               f"temporal order {res.temporal_order:.3f} (>= 0.9); {elapsed:.1f} s")


def test_A9_positivity(a4_run, a6_run):
    details, ok = [], True
    for name, (grid, log, states, final, _) in (("A4", a4_run), ("A6", a6_run)):
        rmin, tmin = log.column("min_rho").min(), log.column("min_theta").min()
        ok &= bool(rmin > 0 and tmin > 0 and final.time == pytest.approx(A4_PARAMS.t_end))
        details.append(f"{name} run min rho {rmin:.4f}, min theta {tmin:.4f}, reached t = {final.time:g}")
    record_criterion("A9", ok, "; ".join(details))


def test_A10_bd_monitor(a4_run):
    grid, log, *_ = a4_run
    bd = log.column("bd")
    ratio = float(bd.max() / bd[0])
    record_criterion("A10", bd[0] > 0 and ratio <= 10, f"max_t bd / bd(0) = {ratio:.4f} (<= 10)")


A11_CONFIG = """[grid]
dim = 1
M = 64
[approx]
epsilon = 1e-3
delta = 0
lambda = 1e-6
s = 1
dt = 1e-3
t_end = 0.1
[physics]
n_species = 2
m = 1, 2
[initial]
preset = perturbed
amplitude = 0.1
[output]
snapshot_every = 50
"""


def test_A11_io_loop(tmp_path, capsys):
    t0 = time.perf_counter()
    cfg = tmp_path / "a11.cfg"
    cfg.write_text(A11_CONFIG)
    codes = [main(["run", "--config", str(cfg), "--out", str(tmp_path / d)]) for d in ("one", "two")]
    checks = [main(["check", "--snapshot", str(tmp_path / "one" / f), "--config", str(cfg)])
              for f in ("snapshot_000050.mxs", "snapshot_000100.mxs", "final.mxs")]
    raw = (tmp_path / "one" / "final.mxs").read_bytes()
    exact = encode_snapshot(decode_snapshot(raw)) == raw
    state = read_snapshot(tmp_path / "one" / "final.mxs")
    exact &= encode_snapshot(state) == raw
    csv_same = ((tmp_path / "one" / "diagnostics.csv").read_bytes()
                == (tmp_path / "two" / "diagnostics.csv").read_bytes())
    elapsed = time.perf_counter() - t0
    capsys.readouterr()
    ok = codes == [0, 0] and checks == [0, 0, 0] and exact and csv_same and elapsed < 60
    record_criterion("A11", ok, f"run exit codes {codes}, check exit codes {checks}, "
                                f"bit-exact round trip {exact}, identical CSV {csv_same}; {elapsed:.1f} s")
