"""Fourier calculus on the periodic box ``[0, 2 pi)^dim``.

Fields are plain real numpy arrays sampled on the uniform collocation grid;
the spatial axes are always the trailing ``dim`` axes, so a vector field has
shape ``(dim, M, ..., M)`` and a stack of species fields ``(n, M, ..., M)``.
Spectral coefficients use the "forward" normalisation: the coefficient of
``exp(i k.x)`` is the grid average of ``f exp(-i k.x)``, hence a constant
field ``c`` has zero-mode coefficient ``c`` and Parseval reads
``mean(f**2) == sum(|f_hat|**2)``.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np


class GridError(ValueError):
    """Field shape or truncation incompatible with the grid."""


class SpectralGrid:
    """Collocation grid and wavenumber tables for a ``dim``-torus.

    Parameters
    ----------
    dim : int
        Torus dimension, 1 to 3.
    M : int
        Even number of collocation points per direction.
    """

    def __init__(self, dim: int, M: int):
        if dim not in (1, 2, 3):
            raise GridError("dim must be 1, 2 or 3")
        if M < 4 or M % 2:
            raise GridError("modes_per_dim must be an even integer >= 4")
        self.dim = int(dim)
        self.M = int(M)
        self.shape = (self.M,) * self.dim
        self.axes = tuple(range(-self.dim, 0))

    def __repr__(self):
        return f"SpectralGrid(dim={self.dim}, M={self.M})"

    def __eq__(self, other):
        return isinstance(other, SpectralGrid) and (self.dim, self.M) == (other.dim, other.M)

    def __hash__(self):
        return hash((self.dim, self.M))

    # ------------------------------------------------------------------
    # tables
    # ------------------------------------------------------------------
    @property
    def volume(self) -> float:
        return (2 * np.pi) ** self.dim

    @cached_property
    def x(self) -> np.ndarray:
        """Coordinates, shape ``(dim, M, ..., M)``."""
        x1 = 2 * np.pi * np.arange(self.M) / self.M
        return np.stack(np.meshgrid(*([x1] * self.dim), indexing="ij"))

    @cached_property
    def k(self) -> np.ndarray:
        """Integer wavenumbers in ``[-M/2, M/2)``, shape ``(dim, M, ..., M)``."""
        k1 = np.fft.fftfreq(self.M, 1.0 / self.M)
        return np.stack(np.meshgrid(*([k1] * self.dim), indexing="ij"))

    @cached_property
    def ik(self) -> np.ndarray:
        """First-derivative multipliers; the unpaired Nyquist mode is zeroed."""
        kk = self.k.copy()
        kk[kk == -self.M // 2] = 0.0
        return 1j * kk

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.k ** 2, axis=0)

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule: keep modes with every ``|k_i| < M/3``."""
        return np.all(3 * np.abs(self.k) < self.M, axis=0)

    @property
    def max_truncation(self) -> int:
        """Largest Galerkin radius whose ball fits inside the dealiasing mask."""
        return (self.M - 1) // 3

    def truncation_mask(self, N: int) -> np.ndarray:
        if N < 0 or N > self.max_truncation:
            raise GridError(
                f"truncation N={N} exceeds grid capacity {self.max_truncation} for M={self.M}")
        return self.k2 <= N * N

    # ------------------------------------------------------------------
    # transforms
    # ------------------------------------------------------------------
    def _check(self, f):
        f = np.asarray(f)
        if f.shape[f.ndim - self.dim:] != self.shape:
            raise GridError(f"field shape {f.shape} does not end with grid shape {self.shape}")
        return f

    def forward(self, f) -> np.ndarray:
        f = self._check(f)
        return np.fft.fftn(f, axes=self.axes, norm="forward")

    def inverse(self, fh) -> np.ndarray:
        fh = self._check(fh)
        return np.fft.ifftn(fh, axes=self.axes, norm="forward").real

    # ------------------------------------------------------------------
    # operators
    # ------------------------------------------------------------------
    def apply_multiplier(self, f, mult) -> np.ndarray:
        return self.inverse(mult * self.forward(f))

    def derivative(self, f, axis: int) -> np.ndarray:
        return self.apply_multiplier(f, self.ik[axis])

    def gradient(self, f) -> np.ndarray:
        """Gradient; a leading ``dim`` axis is inserted before the grid axes."""
        fh = self.forward(f)
        lead = fh.ndim - self.dim
        ik = self.ik.reshape((self.dim,) + (1,) * lead + self.shape)
        g = self.inverse(ik * fh[None])
        # move the component axis next to the grid axes
        return np.moveaxis(g, 0, lead)

    def divergence(self, v) -> np.ndarray:
        v = self._check(v)
        vh = self.forward(v)
        return self.inverse(np.sum(self.ik * vh, axis=-self.dim - 1))

    def laplacian(self, f) -> np.ndarray:
        return self.apply_multiplier(f, -self.k2)

    def laplacian_power(self, f, s: int) -> np.ndarray:
        """``Delta^s f`` via the multiplier ``(-|k|^2)^s``."""
        if s < 0 or int(s) != s:
            raise GridError("laplacian power must be a nonnegative integer")
        if s == 0:
            return np.array(f, dtype=float, copy=True)
        return self.apply_multiplier(f, (-self.k2) ** int(s))

    def seminorm_sq(self, f, order: int) -> np.ndarray:
        """``integral |grad^order f|^2`` summed over any leading axes' components."""
        fh = self.forward(f)
        w = self.k2 ** order
        return self.volume * np.sum(w * np.abs(fh) ** 2, axis=self.axes)

    def project(self, f, N: int) -> np.ndarray:
        """Galerkin projection onto modes with ``|k| <= N``."""
        return self.apply_multiplier(f, self.truncation_mask(N))

    def dealias(self, f) -> np.ndarray:
        return self.apply_multiplier(f, self.dealias_mask)

    def dealiased_product(self, a, b) -> np.ndarray:
        """Pointwise product with inputs and output truncated by the 2/3 rule."""
        return self.dealias(self.dealias(a) * self.dealias(b))

    # ------------------------------------------------------------------
    # quadrature
    # ------------------------------------------------------------------
    def integrate(self, f) -> np.ndarray:
        """Integral over the torus (exact for grid trigonometric polynomials)."""
        return self.volume * np.mean(f, axis=self.axes)

    def l2_norm(self, f) -> float:
        f = np.asarray(f)
        sq = f ** 2
        if f.ndim > self.dim:
            sq = sq.reshape((-1,) + self.shape).sum(axis=0)
        return float(np.sqrt(self.integrate(sq)))
