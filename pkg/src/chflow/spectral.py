"""Periodic-box geometry and Fourier machinery.

Fields live on the torus ``[0, L)^3`` sampled on ``N`` points per axis.
Spectral coefficients use the half-complex layout of :func:`scipy.fft.rfftn`
(last axis holds ``N//2 + 1`` non-negative modes) and the forward transform
is normalized by ``N**3`` so that the zero mode equals the sample mean::

    u(x) = sum_xi  u_hat(xi) exp(i xi.x)

Every operator here is a pure function returning a new field.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft

__all__ = [
    "Grid",
    "RealField",
    "SpectralField",
    "DealiasRule",
    "make_grid",
    "forward",
    "inverse",
    "laplacian",
    "biharmonic",
    "gradient",
    "project_low_modes",
    "bessel_weight",
    "dealias",
    "apply_pointwise",
    "dealiased_product",
    "parse_dealias",
    "FFT_WORKERS",
]

# Thread count handed to scipy.fft; results are bit-identical for a fixed value.
FFT_WORKERS = 1


def rfft3(u, workers=None):
    return scipy.fft.rfftn(u, norm="forward", workers=workers or FFT_WORKERS)


def irfft3(c, n, workers=None):
    return scipy.fft.irfftn(c, s=(n, n, n), norm="forward", workers=workers or FFT_WORKERS)


class Grid:
    """Cubic periodic box with ``N`` modes per axis and edge length ``L``.

    Wavenumber tables are computed once and cached.  ``k`` tables hold the
    integer mode indices, ``xi`` tables the physical wavenumbers
    ``2*pi*k/L``.  The ``*_odd`` variants zero the Nyquist index, which is
    what first-derivative symbols use so that derivatives of real fields
    stay real.
    """

    def __init__(self, N, L):
        if isinstance(N, bool) or int(N) != N:
            raise ValueError(f"N must be an integer, got {N!r}")
        N = int(N)
        if N < 4 or N % 2:
            raise ValueError(f"N must be an even integer >= 4, got {N}")
        L = float(L)
        if not (L > 0 and math.isfinite(L)):
            raise ValueError(f"L must be a positive finite length, got {L}")
        self.N = N
        self.L = L

    def __repr__(self):
        return f"Grid(N={self.N}, L={self.L!r})"

    def __eq__(self, other):
        return isinstance(other, Grid) and (self.N, self.L) == (other.N, other.L)

    def __hash__(self):
        return hash((self.N, self.L))

    @property
    def dx(self):
        return self.L / self.N

    @property
    def volume(self):
        return self.L**3

    @property
    def shape(self):
        return (self.N, self.N, self.N)

    @property
    def spectral_shape(self):
        return (self.N, self.N, self.N // 2 + 1)

    @property
    def unit(self):
        """Wavenumber of the fundamental mode, ``2*pi/L``."""
        return 2 * np.pi / self.L

    @cached_property
    def k1d(self):
        """Integer mode indices per axis in transform order (N entries)."""
        return np.fft.fftfreq(self.N, 1.0 / self.N).round().astype(np.int64)

    @cached_property
    def wavenumbers(self):
        """Physical wavenumbers per axis in transform order (N entries)."""
        return self.k1d * self.unit

    @cached_property
    def k_index(self):
        """Broadcastable integer indices ``(kx, ky, kz)`` in half-complex layout."""
        N = self.N
        kx = self.k1d.reshape(N, 1, 1)
        ky = self.k1d.reshape(1, N, 1)
        kz = np.arange(N // 2 + 1).reshape(1, 1, N // 2 + 1)
        return kx, ky, kz

    @cached_property
    def xi(self):
        return tuple(k * self.unit for k in self.k_index)

    @cached_property
    def xi_odd(self):
        nyq = self.N // 2
        return tuple(np.where(np.abs(k) == nyq, 0, k) * self.unit for k in self.k_index)

    @cached_property
    def xi2(self):
        """``|xi|^2`` on the spectral layout."""
        kx, ky, kz = self.xi
        return kx**2 + ky**2 + kz**2

    @cached_property
    def xi4(self):
        return self.xi2**2

    @cached_property
    def xi2_odd(self):
        """Sum of squared first-derivative symbols (Nyquist removed per axis)."""
        kx, ky, kz = self.xi_odd
        return kx**2 + ky**2 + kz**2

    @cached_property
    def parseval_weight(self):
        """Multiplicity of each stored coefficient in the full spectrum."""
        N = self.N
        w = np.full(N // 2 + 1, 2.0)
        w[0] = 1.0
        w[N // 2] = 1.0
        return np.broadcast_to(w.reshape(1, 1, -1), self.spectral_shape)

    @cached_property
    def coords(self):
        """Sample coordinates ``(x1, x2, x3)`` as broadcastable arrays."""
        x = np.arange(self.N) * self.dx
        N = self.N
        return x.reshape(N, 1, 1), x.reshape(1, N, 1), x.reshape(1, 1, N)

    def parseval_sum(self, coeffs):
        """Return ``sum |c|^2`` over the full (Hermitian) spectrum."""
        return float(np.sum(self.parseval_weight * (coeffs.real**2 + coeffs.imag**2)))

    def mode_index(self, k):
        """Location of integer mode ``k`` in the half-complex array.

        Returns ``(index, conjugate)`` where ``conjugate`` says the stored value
        is the complex conjugate of the requested coefficient.
        """
        N = self.N
        k = [int(v) for v in k]
        for v in k:
            if not -N // 2 <= v < N // 2:
                raise ValueError(f"mode {tuple(k)} not representable on N={N}")
        conj = False
        if k[2] < 0:
            k = [-v for v in k]
            conj = True
        return (k[0] % N, k[1] % N, k[2]), conj


def make_grid(N, L):
    """Build a :class:`Grid`; rejects odd or too-small ``N`` and non-positive ``L``."""
    return Grid(N, L)


@dataclass(frozen=True, eq=False)
class RealField:
    """Scalar field sampled on a grid."""

    grid: Grid
    samples: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.samples, dtype=np.float64)
        if a.size != self.grid.N**3:
            raise ValueError(
                f"expected {self.grid.N**3} samples for {self.grid}, got {a.size}"
            )
        a = a.reshape(self.grid.shape)
        if not np.all(np.isfinite(a)):
            bad = int(np.flatnonzero(~np.isfinite(a.ravel()))[0])
            raise ValueError(f"non-finite sample at flat index {bad}")
        object.__setattr__(self, "samples", a)

    def __add__(self, other):
        return RealField(self.grid, self.samples + _samples(other))

    def __sub__(self, other):
        return RealField(self.grid, self.samples - _samples(other))

    def __mul__(self, c):
        return RealField(self.grid, self.samples * c)

    __rmul__ = __mul__


def _samples(x):
    return x.samples if isinstance(x, RealField) else x


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Half-complex Fourier coefficients of a real field."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != self.grid.spectral_shape:
            raise ValueError(
                f"coefficient shape {c.shape} does not match {self.grid.spectral_shape}"
            )
        object.__setattr__(self, "coeffs", c)

    def __getitem__(self, k):
        """Coefficient of integer mode ``k = (k1, k2, k3)``."""
        idx, conj = self.grid.mode_index(k)
        v = self.coeffs[idx]
        return np.conj(v) if conj else v

    def __add__(self, other):
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, c):
        return SpectralField(self.grid, self.coeffs * c)

    __rmul__ = __mul__

    def hermitian_defect(self):
        """Relative size of the part that no real field can represent."""
        projected = rfft3(irfft3(self.coeffs, self.grid.N))
        scale = np.sqrt(self.grid.parseval_sum(self.coeffs))
        if scale == 0:
            return 0.0
        return float(np.sqrt(self.grid.parseval_sum(projected - self.coeffs)) / scale)

    @classmethod
    def from_modes(cls, grid, modes):
        """Real field built from ``{(k1, k2, k3): amplitude}`` cosine modes.

        Each entry contributes ``amplitude * cos(2*pi*k.x/L)``.
        """
        u = np.zeros(grid.shape)
        x1, x2, x3 = grid.coords
        for k, a in modes.items():
            u = u + a * np.cos(grid.unit * (k[0] * x1 + k[1] * x2 + k[2] * x3))
        return forward(RealField(grid, u))


def forward(f):
    """Sample space to coefficient space; the zero mode equals the mean."""
    return SpectralField(f.grid, rfft3(f.samples))


def inverse(F):
    return RealField(F.grid, irfft3(F.coeffs, F.grid.N))


def laplacian(F):
    return SpectralField(F.grid, -F.grid.xi2 * F.coeffs)


def biharmonic(F):
    # two multiplications by |xi|^2 so that laplacian(laplacian(F)) agrees bitwise
    return SpectralField(F.grid, F.grid.xi2 * (F.grid.xi2 * F.coeffs))


def gradient(F):
    """Three spectral components ``i xi_j F``; Nyquist entries are dropped."""
    return tuple(SpectralField(F.grid, 1j * k * F.coeffs) for k in F.grid.xi_odd)


def ball_mask(grid, n):
    if not n > 0:
        raise ValueError(f"cutoff radius must be positive, got {n}")
    if math.isinf(n):
        return np.ones(grid.spectral_shape, dtype=bool)
    return grid.xi2 <= n * n


def project_low_modes(F, n):
    """Keep modes with ``|xi| <= n`` and zero the rest (sharp Fourier cutoff)."""
    return SpectralField(F.grid, np.where(ball_mask(F.grid, n), F.coeffs, 0))


def bessel_weight(F, s):
    """Multiply by ``(1 + |xi|^2)^(s/2)``; the L2 norm of the result is the H^s norm."""
    if s == 0:
        return SpectralField(F.grid, F.coeffs.copy())
    return SpectralField(F.grid, (1.0 + F.grid.xi2) ** (s / 2) * F.coeffs)


@dataclass(frozen=True)
class DealiasRule:
    """How pointwise nonlinearities are evaluated.

    ``two_thirds`` truncates to ``|k_j| <= N/3`` after a grid evaluation,
    ``padded`` evaluates on ``ceil((degree+1) N / 2)`` points per axis so that
    a degree-``degree`` polynomial of the retained modes is alias free, and
    ``none`` evaluates on the grid as is.
    """

    kind: str = "two_thirds"
    degree: int | None = None

    def __post_init__(self):
        if self.kind not in ("two_thirds", "padded", "none"):
            raise ValueError(f"unknown dealias rule {self.kind!r}")
        if self.kind == "padded":
            if self.degree is None or int(self.degree) != self.degree or self.degree < 1:
                raise ValueError("padded rule needs a positive integer degree")
        elif self.degree is not None:
            raise ValueError(f"{self.kind} rule takes no degree")

    def __str__(self):
        return f"padded({self.degree})" if self.kind == "padded" else self.kind

    def padded_size(self, N):
        return math.ceil((self.degree + 1) * N / 2)

    def mask(self, grid):
        """Boolean mask of the modes the rule retains."""
        return _rule_mask(self, grid)


@lru_cache(maxsize=64)
def _rule_mask(rule, grid):
    kx, ky, kz = grid.k_index
    if rule.kind == "two_thirds":
        m = grid.N / 3
        out = (np.abs(kx) <= m) & (np.abs(ky) <= m) & (kz <= m)
    elif rule.kind == "padded":
        h = grid.N // 2
        out = (np.abs(kx) < h) & (np.abs(ky) < h) & (kz < h)
    else:
        out = np.ones(grid.spectral_shape, dtype=bool)
    out.flags.writeable = False
    return out


_PADDED = re.compile(r"^padded\((\d+)\)$")


def parse_dealias(text):
    if isinstance(text, DealiasRule):
        return text
    text = str(text).strip()
    m = _PADDED.match(text)
    if m:
        return DealiasRule("padded", int(m.group(1)))
    return DealiasRule(text)


def dealias(F, rule):
    """Zero the modes the rule discards.  Idempotent."""
    rule = parse_dealias(rule)
    return SpectralField(F.grid, np.where(rule.mask(F.grid), F.coeffs, 0))


def _embed(coeffs, N, M):
    """Copy modes ``|k_j| < N/2`` of an N-grid spectrum into an M-grid spectrum."""
    h = N // 2
    out = np.zeros((M, M, M // 2 + 1), dtype=np.complex128)
    lo = slice(0, h)
    hi_src = slice(N - h + 1, N)
    hi_dst = slice(M - h + 1, M)
    for sx, dx_ in ((lo, lo), (hi_src, hi_dst)):
        for sy, dy in ((lo, lo), (hi_src, hi_dst)):
            out[dx_, dy, :h] = coeffs[sx, sy, :h]
    return out


def _extract(coeffs, N, M):
    """Inverse of :func:`_embed`: pull ``|k_j| < N/2`` modes back, Nyquist zero."""
    h = N // 2
    out = np.zeros((N, N, N // 2 + 1), dtype=np.complex128)
    lo = slice(0, h)
    hi_dst = slice(N - h + 1, N)
    hi_src = slice(M - h + 1, M)
    for dx_, sx in ((lo, lo), (hi_dst, hi_src)):
        for dy, sy in ((lo, lo), (hi_dst, hi_src)):
            out[dx_, dy, :h] = coeffs[sx, sy, :h]
    return out


def pointwise_coeffs(func, coeffs, grid, rule, samples=None):
    """Coefficients of ``func(u1, u2, ...)`` for spectra ``coeffs`` under ``rule``.

    ``coeffs`` is a sequence of half-complex arrays on ``grid``.  Grid
    ``samples`` of the same fields may be passed to skip inverse transforms
    (ignored by the padded rule, which needs its own finer grid).
    """
    N = grid.N
    if rule.kind == "padded":
        M = rule.padded_size(N)
        values = [irfft3(_embed(c, N, M), M) for c in coeffs]
        out = rfft3(func(*values))
        return _extract(out, N, M)
    values = samples if samples is not None else [irfft3(c, N) for c in coeffs]
    out = rfft3(func(*values))
    if rule.kind == "two_thirds":
        out = np.where(rule.mask(grid), out, 0)
    return out


def apply_pointwise(func, *fields, rule="two_thirds"):
    """Evaluate ``func`` on the sample values of spectral ``fields`` under a dealias rule."""
    rule = parse_dealias(rule)
    grid = fields[0].grid
    return SpectralField(grid, pointwise_coeffs(func, [F.coeffs for F in fields], grid, rule))


def dealiased_product(F, G, rule="padded(2)"):
    return apply_pointwise(np.multiply, F, G, rule=rule)
