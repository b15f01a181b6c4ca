import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixflow.spectral import GridError, SpectralGrid


@pytest.fixture(scope="module")
def g1():
    return SpectralGrid(1, 16)


@pytest.fixture(scope="module")
def g2():
    return SpectralGrid(2, 16)


def test_grid_validation():
    for dim, M in ((0, 16), (4, 16), (1, 15), (1, 2)):
        with pytest.raises(GridError):
            SpectralGrid(dim, M)
    g = SpectralGrid(2, 12)
    assert g.x.shape == (2, 12, 12) and g.k.min() == -6 and g.k.max() == 5
    with pytest.raises(GridError):
        g.truncation_mask(4)
    with pytest.raises(GridError):
        g.forward(np.zeros((3, 5)))


def test_dealias_mask_is_strict_two_thirds():
    g = SpectralGrid(1, 12)
    kept = np.sort(g.k[0][g.dealias_mask])
    assert list(kept) == [-3, -2, -1, 0, 1, 2, 3]
    assert SpectralGrid(1, 16).max_truncation == 5


def test_transform_examples(g1):
    fh = g1.forward(np.ones(g1.shape))
    assert fh[0] == pytest.approx(1.0) and np.allclose(fh[1:], 0, atol=1e-16)
    sh = g1.forward(np.sin(g1.x[0]))
    assert sh[1] == pytest.approx(-0.5j) and sh[-1] == pytest.approx(0.5j)
    mask = np.ones(16, bool)
    mask[[1, -1]] = False
    assert np.allclose(sh[mask], 0, atol=1e-16)
    rng = np.random.default_rng(0)
    f = rng.normal(size=(3, 16, 16))
    g = SpectralGrid(2, 16)
    assert np.allclose(g.inverse(g.forward(f)), f, rtol=0, atol=1e-12 * np.abs(f).max())


def test_conjugate_symmetry_and_parseval(g2):
    rng = np.random.default_rng(1)
    f = rng.normal(size=g2.shape)
    fh = g2.forward(f)
    flipped = np.roll(np.flip(fh, axis=(0, 1)), 1, axis=(0, 1))
    assert np.allclose(fh, np.conj(flipped), atol=1e-14)
    assert np.mean(f ** 2) == pytest.approx(np.sum(np.abs(fh) ** 2), rel=1e-12)


def test_derivatives(g1, g2):
    x = g1.x[0]
    assert np.allclose(g1.derivative(np.sin(x), 0), np.cos(x), atol=1e-12)
    X, Y = g2.x
    psi = np.sin(X) * np.cos(2 * Y) + np.cos(3 * X + Y)
    gp = g2.gradient(psi)
    curl_type = np.stack([-gp[1], gp[0]])
    assert np.max(np.abs(g2.divergence(curl_type))) < 1e-12
    assert np.max(np.abs(g2.gradient(np.full(g2.shape, 3.0)))) < 1e-14
    assert np.allclose(g2.laplacian(psi), -(1 + 4) * np.sin(X) * np.cos(2 * Y) - 10 * np.cos(3 * X + Y),
                       atol=1e-11)


def test_gradient_component_axis_precedes_grid(g2):
    rng = np.random.default_rng(2)
    stack = rng.normal(size=(3,) + g2.shape)
    gr = g2.gradient(stack)
    assert gr.shape == (3, 2) + g2.shape
    assert np.allclose(gr[1, 0], g2.derivative(stack[1], 0))


def test_laplacian_power_examples(g1):
    x = g1.x[0]
    assert np.allclose(g1.laplacian_power(np.sin(x), 1), -np.sin(x), atol=1e-12)
    for s in range(4):
        assert np.allclose(g1.laplacian_power(np.cos(3 * x), s), (-9.0) ** s * np.cos(3 * x),
                           rtol=1e-12, atol=1e-12 * 9.0 ** s)
    f = np.cos(x) + 0.3
    assert np.array_equal(g1.laplacian_power(f, 0), f)
    with pytest.raises(GridError):
        g1.laplacian_power(f, -1)


def test_multipliers_commute(g2):
    rng = np.random.default_rng(3)
    f = g2.dealias(rng.normal(size=g2.shape))
    a = g2.laplacian_power(g2.gradient(f), 2)
    b = g2.gradient(g2.laplacian_power(f, 2))
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


def test_seminorm_of_single_mode(g1):
    # integral over [0, 2pi) of |d^3/dx^3 cos(2x)|^2 = 64 * pi
    assert g1.seminorm_sq(np.cos(2 * g1.x[0]), 3) == pytest.approx(64 * np.pi, rel=1e-12)


def test_projection_and_dealias(g2):
    rng = np.random.default_rng(4)
    f = rng.normal(size=g2.shape)
    p = g2.project(f, 3)
    assert np.allclose(g2.project(p, 3), p, atol=1e-14)
    low = np.cos(g2.x[0]) + np.sin(g2.x[0] + 2 * g2.x[1])
    assert np.allclose(g2.project(low, 3), low, atol=1e-14)
    d = g2.dealias(f)
    assert np.allclose(g2.dealias(d), d, atol=1e-14)


def test_dealiased_product_matches_padded_oracle():
    M = 24
    g = SpectralGrid(1, M)
    rng = np.random.default_rng(5)
    # two fields holding every mode the 2/3 mask keeps
    keep = g.dealias_mask
    ah = np.where(keep, rng.normal(size=M) + 1j * rng.normal(size=M), 0)
    bh = np.where(keep, rng.normal(size=M) + 1j * rng.normal(size=M), 0)
    a = g.inverse(ah)
    b = g.inverse(bh)
    ah, bh = g.forward(a), g.forward(b)  # conjugate-symmetric parts
    # oracle: zero-padded product on a doubled grid, then truncated
    big = 2 * M

    def pad(ch):
        out = np.zeros(big, complex)
        k = np.fft.fftfreq(M, 1 / M).astype(int)
        out[k % big] = ch
        return out

    prod = np.fft.ifft(pad(ah), norm="forward") * np.fft.ifft(pad(bh), norm="forward")
    ph = np.fft.fft(prod, norm="forward")
    kb = np.fft.fftfreq(big, 1 / big).astype(int)
    exact = np.zeros(M, complex)
    for kk, c in zip(kb, ph):
        if abs(kk) < M / 3:
            exact[kk % M] = c
    got = g.forward(g.dealiased_product(a, b))
    assert np.max(np.abs(got - exact)) < 1e-12


def test_galerkin_basis_is_orthonormal():
    g = SpectralGrid(2, 12)
    N = g.max_truncation
    ks = np.argwhere(g.truncation_mask(N))
    basis = [np.exp(1j * (g.k[0][tuple(i)] * g.x[0] + g.k[1][tuple(i)] * g.x[1])) for i in ks]
    B = np.array([b.ravel() for b in basis])
    gram = B.conj() @ B.T / B.shape[1]
    assert np.allclose(gram, np.eye(len(basis)), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.sampled_from([8, 12, 16]))
def test_integral_of_trig_polynomial_is_exact(dim, M):
    g = SpectralGrid(dim, M)
    f = 2.0 + np.prod(np.cos(g.x), axis=0)
    assert g.integrate(f) == pytest.approx(2.0 * g.volume, rel=1e-13)
    assert g.l2_norm(np.ones(g.shape)) == pytest.approx(np.sqrt(g.volume))
