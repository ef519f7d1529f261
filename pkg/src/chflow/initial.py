"""Initial data generators."""
from __future__ import annotations

import numpy as np

from .spectral import RealField, irfft3, rfft3


def random_field(grid, mean=0.0, amplitude=0.05, seed=0, smoothing=None):
    """``mean`` plus a seeded uniform perturbation of peak size ``amplitude``.

    Without ``smoothing`` every sample is perturbed independently.  With a
    wavenumber ``smoothing`` the noise spectrum is damped by
    ``exp(-|xi|^2 / (2 smoothing^2))`` (an analytic field), then made
    mean-free and rescaled to the requested peak amplitude.
    """
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-1.0, 1.0, grid.shape)
    if smoothing is not None:
        c = rfft3(noise) * np.exp(-grid.xi2 / (2.0 * smoothing**2))
        c[0, 0, 0] = 0.0
        noise = irfft3(c, grid.N)
        peak = np.max(np.abs(noise))
        noise = noise / peak if peak > 0 else noise
    return RealField(grid, mean + amplitude * noise)


def unit_perturbation(grid, seed=0, smoothing=None):
    """Seeded mean-free smooth field with unit L2 norm."""
    smoothing = 2.0 * grid.unit if smoothing is None else smoothing
    u = random_field(grid, 0.0, 1.0, seed, smoothing).samples
    norm = np.sqrt(np.sum(u * u) * grid.dx**3)
    return RealField(grid, u / norm)


def modes_field(grid, modes, mean=0.0):
    """Sum of cosine modes; ``modes`` holds ``(k1, k2, k3, amplitude)`` entries."""
    x1, x2, x3 = grid.coords
    u = np.full(grid.shape, float(mean))
    for k1, k2, k3, a in modes:
        u = u + a * np.cos(grid.unit * (k1 * x1 + k2 * x2 + k3 * x3))
    return RealField(grid, u)


def tanh_front(grid, width=2.0, mean=0.0):
    """Front ``tanh(X/width)`` along ``x1``, constant in ``x2`` and ``x3``.

    ``X = (L/2pi) sin(2pi x1/L)`` agrees with ``x1`` near the origin and makes
    the profile periodic and analytic, so the box holds one rising and one
    falling front.
    """
    x1 = grid.coords[0]
    X = np.sin(grid.unit * x1) / grid.unit
    u = np.broadcast_to(mean + np.tanh(X / width), grid.shape)
    return RealField(grid, np.array(u))


def from_spec(grid, kind, mean=0.0, amplitude=0.05, seed=0, modes=(), smoothing=None,
              width=2.0):
    if kind == "random":
        return random_field(grid, mean, amplitude, seed, smoothing)
    if kind == "modes":
        return modes_field(grid, modes, mean)
    if kind == "tanh_front":
        return tanh_front(grid, width, mean)
    raise ValueError(f"unknown initial data kind {kind!r}")
