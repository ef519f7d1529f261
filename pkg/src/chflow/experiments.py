"""Scripted studies: cutoff/resolution convergence, run checks."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .diagnostics import EnergyMonitor, l2_distance
from .flow import solve
from .spectral import SpectralField, _extract, forward, inverse, make_grid


@dataclass(frozen=True)
class ConvergenceReport:
    """Final-time L2 distance of each ladder member to the reference run."""

    parameter: str
    values: tuple
    reference: float
    errors: tuple

    @property
    def strictly_decreasing(self):
        return all(b < a for a, b in zip(self.errors, self.errors[1:]))

    @property
    def ratios(self):
        return tuple(b / a if a > 0 else math.nan for a, b in zip(self.errors, self.errors[1:]))

    def as_dict(self):
        return {
            "parameter": self.parameter,
            "values": list(self.values),
            "reference": self.reference,
            "errors": list(self.errors),
            "ratios": list(self.ratios),
            "strictly_decreasing": self.strictly_decreasing,
        }


def _map(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def cutoff_ladder(u0, spec, config, n_list, reference=None, workers=1):
    """Solve with each cutoff radius in ``n_list`` and compare to ``reference``.

    Without an explicit ``reference`` the largest radius in the list serves
    as the reference and is dropped from the ladder.
    """
    n_list = sorted(float(n) for n in n_list)
    if reference is None:
        reference = n_list.pop()
    reference = float(reference)
    if not n_list:
        raise ValueError("ladder needs at least one cutoff below the reference")

    def run(n):
        return solve(u0, spec, replace(config, n_cutoff=n))[0].u_hat

    finals = _map(run, n_list + [reference], workers)
    ref = finals[-1]
    errors = tuple(l2_distance(f, ref) for f in finals[:-1])
    return ConvergenceReport("n_cutoff", tuple(n_list), reference, errors)


def restrict(u, grid):
    """Spectral restriction of a field onto a coarser grid of the same box."""
    if grid.L != u.grid.L:
        raise ValueError("grids describe different boxes")
    if grid.N == u.grid.N:
        return u
    coeffs = _extract(forward(u).coeffs, grid.N, u.grid.N)
    return inverse(SpectralField(grid, coeffs))


def resolution_ladder(u0_fine, spec, config, N_list, workers=1):
    """Solve the same problem on grids of ``N_list`` points per axis.

    Initial data is given on the finest grid and restricted spectrally; the
    finest run is the reference.
    """
    N_list = sorted(int(n) for n in N_list)
    if N_list[-1] != u0_fine.grid.N:
        raise ValueError("initial data must live on the finest grid of the ladder")
    L = u0_fine.grid.L

    def run(N):
        u0 = restrict(u0_fine, make_grid(N, L))
        return solve(u0, spec, config)[0].u_hat

    finals = _map(run, N_list, workers)
    ref = finals[-1]
    errors = tuple(l2_distance(f, ref) for f in finals[:-1])
    return ConvergenceReport("N", tuple(N_list[:-1]), N_list[-1], errors)


@dataclass
class RunChecks:
    """Invariants checked along one run.

    ``mass_drift`` is the largest ``|mass(t) - mass(0)| / (1 + |mass(0)|)``
    over the records; ``energy_monotone`` holds when every step satisfies
    ``F_{k+1} <= F_k + slack``; ``h2_ok`` compares the largest H2 norm with
    ``10 ||u0||_H2 + 10``.
    """

    mass_drift: float
    energy_monotone: bool
    max_residual: float
    h2_max: float
    h2_bound: float

    MASS_TOL = 1e-10

    @property
    def mass_ok(self):
        return self.mass_drift <= self.MASS_TOL

    @property
    def h2_ok(self):
        return self.h2_max <= self.h2_bound

    @property
    def ok(self):
        return self.mass_ok and self.energy_monotone and self.h2_ok

    def as_dict(self):
        return {
            "mass_drift": self.mass_drift,
            "mass_ok": self.mass_ok,
            "energy_monotone": self.energy_monotone,
            "max_energy_residual": self.max_residual,
            "h2_max": self.h2_max,
            "h2_bound": self.h2_bound,
            "h2_ok": self.h2_ok,
        }


def checked_solve(u0, spec, config, **kwargs):
    """:func:`solve` with a per-step energy monitor; returns ``(result, checks, monitor)``."""
    mon = EnergyMonitor(spec, config.dealias, config.n_cutoff)
    result = solve(u0, spec, config, observer=mon, **kwargs)
    records = result[1]
    m0 = records[0].mass
    drift = max(abs(r.mass - m0) for r in records) / (1.0 + abs(m0))
    monotone = bool(np.all(mon.monotone())) if mon.residuals else True
    checks = RunChecks(
        mass_drift=drift,
        energy_monotone=monotone,
        max_residual=mon.max_residual() if mon.residuals else 0.0,
        h2_max=max(r.h2 for r in records),
        h2_bound=10.0 * records[0].h2 + 10.0,
    )
    return result, checks, mon


__all__ = [
    "ConvergenceReport",
    "RunChecks",
    "checked_solve",
    "cutoff_ladder",
    "resolution_ladder",
    "restrict",
]
