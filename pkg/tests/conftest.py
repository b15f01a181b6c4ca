import numpy as np
import pytest

from mixflow import ApproxParams, ConstitutiveParams, InitialData, SpectralGrid


def standing_wave(grid, amp=0.1, Y0=0.5, n=2):
    """Symmetric smooth data: rho, theta, Y even in x and u odd."""
    x = grid.x[0]
    rho = 1 + amp * np.cos(x)
    u = np.zeros((grid.dim,) + grid.shape)
    u[0] = amp * np.sin(x)
    theta = 1 + amp * np.cos(x)
    if n == 1:
        Y = np.ones((1,) + grid.shape)
    else:
        Y = np.empty((n,) + grid.shape)
        Y[0] = Y0 + amp * Y0 * (1 - Y0) * np.cos(x)
        Y[1:] = ((1 - Y[0]) / (n - 1))[None]
    return InitialData(rho, rho * u, theta, Y * rho)


@pytest.fixture
def grid64():
    return SpectralGrid(1, 64)


@pytest.fixture
def a4_params():
    return ApproxParams(epsilon=1e-3, delta=0.0, lam=1e-6, s=1, dt=1e-3, t_end=0.1)


@pytest.fixture
def cp12():
    return ConstitutiveParams(n_species=2, m=(1.0, 2.0))


# acceptance criteria record their outcome here; the summary hook prints one line each
ACCEPTANCE = {}


def record_criterion(name, ok, detail):
    ACCEPTANCE[name] = (bool(ok), detail)
    print(f"{name} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"{name}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: int(s[1:])):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name} {'PASS' if ok else 'FAIL'}: {detail}")
