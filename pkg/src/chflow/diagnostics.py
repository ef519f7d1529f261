"""Scalar functionals, norms, and inequality checks along a flow.

Integrals over the box are computed two ways where possible: by the
rectangle rule on the samples (spectrally accurate for periodic data) and by
Parseval's identity on the coefficients.  First-derivative symbols omit the
Nyquist index, as :func:`chflow.spectral.gradient` does, so both routes agree
to round-off on arbitrary fields.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from functools import lru_cache

import numpy as np

from .potentials import NonFiniteError
from .spectral import (
    RealField,
    SpectralField,
    ball_mask,
    forward,
    gradient,
    inverse,
    irfft3,
    parse_dealias,
    pointwise_coeffs,
    rfft3,
)

CSV_COLUMNS = ("t", "mass", "F", "D", "l2", "gradl2", "lapl2", "h2", "linf", "l6")


def _pair(u):
    """Return ``(samples, coeffs, grid)`` for a real or spectral field."""
    if isinstance(u, SpectralField):
        return irfft3(u.coeffs, u.grid.N), u.coeffs, u.grid
    return u.samples, rfft3(u.samples), u.grid


def _cell(grid):
    return grid.dx**3


def _mu_hat(samples, coeffs, grid, spec, rule=None, n_cutoff=math.inf):
    """Coefficients of ``-Lap u + phi(u)``.

    With a dealias ``rule`` (and optional cutoff radius) the potential term is
    evaluated exactly as the integrators do, which makes the discrete energy
    identity hold for the semi-discrete system.
    """
    if rule is None:
        with np.errstate(all="ignore"):
            values = spec.phi(samples)
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("phi(u) is not finite")
        ph = rfft3(values)
    else:
        ph = pointwise_coeffs(spec.phi, [coeffs], grid, parse_dealias(rule), [samples])
        if not np.all(np.isfinite(ph)):
            raise NonFiniteError("phi(u) is not finite")
    if not math.isinf(n_cutoff):
        ph = np.where(ball_mask(grid, n_cutoff), ph, 0)
    return grid.xi2 * coeffs + ph


def mass(u):
    """Integral of ``u`` over the box, ``L^3 * mean(u)``."""
    samples, _, grid = _pair(u)
    return float(grid.volume * np.mean(samples))


def _bulk(samples, grid, spec):
    with np.errstate(all="ignore"):
        values = spec.Phi(samples)
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("Phi(u) is not finite")
    return float(np.sum(values) * _cell(grid))


def _gradient_energy(c, grid):
    return 0.5 * grid.volume * float(np.sum(grid.parseval_weight * grid.xi2_odd * np.abs(c) ** 2))


def bulk_energy(u, spec):
    samples, _, grid = _pair(u)
    return _bulk(samples, grid, spec)


def gradient_energy(u):
    """``(1/2) ||grad u||^2`` by Parseval."""
    _, c, grid = _pair(u)
    return _gradient_energy(c, grid)


def free_energy(u, spec):
    """``int Phi(u) + |grad u|^2 / 2``."""
    samples, c, grid = _pair(u)
    return _bulk(samples, grid, spec) + _gradient_energy(c, grid)


@lru_cache(maxsize=8)
def _gauss_nodes(nodes):
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def _energy_difference(a, ca, b, cb, grid, spec, nodes=4):
    s, w = _gauss_nodes(nodes)
    d = b - a
    avg = np.zeros_like(a)
    for si, wi in zip(s, w):
        avg += wi * spec.phi(a + si * d)
    bulk = float(np.sum(d * avg) * _cell(grid))
    cross = ((cb - ca) * np.conj(cb + ca)).real
    grad = 0.5 * grid.volume * float(np.sum(grid.parseval_weight * grid.xi2_odd * cross))
    return bulk + grad


def free_energy_difference(u_old, u_new, spec, nodes=4):
    """``F(u_new) - F(u_old)`` without subtracting two large numbers.

    The bulk part uses ``Phi(b) - Phi(a) = (b - a) int_0^1 phi(a + s(b - a)) ds``
    with Gauss-Legendre quadrature (exact for polynomial ``phi`` of degree
    below ``2*nodes``); the gradient part is a Parseval sum of
    ``(b - a) * conj(b + a)``.
    """
    a, ca, grid = _pair(u_old)
    b, cb, _ = _pair(u_new)
    return _energy_difference(a, ca, b, cb, grid, spec, nodes)


def chemical_potential(u, spec, rule=None, n_cutoff=math.inf):
    """``mu = -Lap u + phi(u)`` as a real field."""
    samples, c, grid = _pair(u)
    return RealField(grid, irfft3(_mu_hat(samples, c, grid, spec, rule, n_cutoff), grid.N))


def _dissipation(samples, c, grid, spec, rule, n_cutoff):
    mu = _mu_hat(samples, c, grid, spec, rule, n_cutoff)
    return grid.volume * float(np.sum(grid.parseval_weight * grid.xi2_odd * np.abs(mu) ** 2))


def dissipation_rate(u, spec, rule=None, n_cutoff=math.inf):
    """``D = int |grad mu|^2`` by Parseval; ``-dF/dt`` along the flow."""
    samples, c, grid = _pair(u)
    return _dissipation(samples, c, grid, spec, rule, n_cutoff)


def dissipation_rate_quadrature(u, spec, rule=None, n_cutoff=math.inf):
    """Same quantity as :func:`dissipation_rate` via sample-space quadrature."""
    samples, c, grid = _pair(u)
    mu = SpectralField(grid, _mu_hat(samples, c, grid, spec, rule, n_cutoff))
    return float(sum(np.sum(inverse(g).samples ** 2) for g in gradient(mu)) * _cell(grid))


def lp_norm(u, p):
    samples, _, grid = _pair(u)
    if p == math.inf or p == "inf":
        return float(np.max(np.abs(samples)))
    p = float(p)
    return float((np.sum(np.abs(samples) ** p) * _cell(grid)) ** (1.0 / p))


def sobolev_norm(u, s):
    """``||(1 + |xi|^2)^(s/2) u_hat||_{L2}`` by Parseval."""
    _, c, grid = _pair(u)
    weight = (1.0 + grid.xi2) ** (s / 2.0)
    return math.sqrt(grid.volume * grid.parseval_sum(weight * c))


def grad_l2(u):
    _, c, grid = _pair(u)
    return math.sqrt(grid.volume * grid.parseval_sum(np.sqrt(grid.xi2_odd) * c))


def lap_l2(u):
    _, c, grid = _pair(u)
    return math.sqrt(grid.volume * grid.parseval_sum(grid.xi2 * c))


def bilap_l2(u):
    _, c, grid = _pair(u)
    return math.sqrt(grid.volume * grid.parseval_sum(grid.xi4 * c))


def dual_path_norms(u, spec=None, s=2.0):
    """``{name: (quadrature, parseval)}`` for every norm with two routes."""
    samples, c, grid = _pair(u)
    F = SpectralField(grid, c)
    cell = _cell(grid)

    def quad(values):
        return math.sqrt(float(np.sum(values**2)) * cell)

    out = {
        "l2": (lp_norm(u, 2), sobolev_norm(u, 0)),
        "gradl2": (
            math.sqrt(sum(float(np.sum(inverse(g).samples ** 2)) for g in gradient(F)) * cell),
            grad_l2(u),
        ),
        "lapl2": (quad(irfft3(-grid.xi2 * c, grid.N)), lap_l2(u)),
        f"h{s:g}": (quad(irfft3((1.0 + grid.xi2) ** (s / 2) * c, grid.N)), sobolev_norm(u, s)),
    }
    if spec is not None:
        out["D"] = (dissipation_rate_quadrature(u, spec), dissipation_rate(u, spec))
    return out


# -- inequality instances -------------------------------------------------------


def _mean_free(samples):
    return samples - np.mean(samples)


def _lp(samples, p, grid):
    return float((np.sum(np.abs(samples) ** p) * _cell(grid)) ** (1.0 / p))


def _negligible(value, samples, grid):
    # round-off of a transform of a constant sits near 1e-16 relative
    return value <= 1e-12 * (1.0 + float(np.max(np.abs(samples)))) * math.sqrt(grid.volume)


def gns_ratio(u):
    """``||u - mean(u)||_{L6} / ||grad u||_{L2}``."""
    samples, _, grid = _pair(u)
    g = grad_l2(u)
    if _negligible(g, samples, grid):
        raise ValueError("gradient vanishes; the ratio is undefined")
    return _lp(_mean_free(samples), 6, grid) / g


def _l8_lap_l6(u):
    samples, _, grid = _pair(u)
    v = _mean_free(samples)
    lap = lap_l2(u)
    if _negligible(lap, samples, grid):
        raise ValueError("zero denominator")
    return _lp(v, 8, grid) / (lap**0.125 * _lp(v, 6, grid) ** 0.875)


def _grad_l4(u):
    _, c, grid = _pair(u)
    F = SpectralField(grid, c)
    g2 = sum(inverse(g).samples ** 2 for g in gradient(F))
    lhs = float(np.sum(g2 * g2) * _cell(grid))
    g = grad_l2(u)
    if _negligible(g, inverse(F).samples, grid):
        raise ValueError("zero denominator")
    return lhs / (bilap_l2(u) * g**3)


INTERPOLATION_INSTANCES = {
    # ||u||_8 <= C ||Lap u||_2^(1/8) ||u||_6^(7/8)   (mean removed)
    "l8_lap_l6": _l8_lap_l6,
    # ||u||_6 <= C ||grad u||_2   (mean removed)
    "l6_grad": gns_ratio,
    # ||grad u||_4^4 <= C ||Lap^2 u||_2 ||grad u||_2^3
    "grad_l4": _grad_l4,
}


def interpolation_check(u, instance):
    """Left side over right side (without the constant) for a named inequality."""
    try:
        f = INTERPOLATION_INSTANCES[instance]
    except KeyError:
        raise ValueError(
            f"unknown instance {instance!r}; known: {sorted(INTERPOLATION_INSTANCES)}"
        ) from None
    return f(u)


# -- records -----------------------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    F: float
    D: float
    l2: float
    gradl2: float
    lapl2: float
    h2: float
    linf: float
    l6: float
    hs: float | None = None

    def values(self):
        out = [getattr(self, name) for name in CSV_COLUMNS]
        if self.hs is not None:
            out.append(self.hs)
        return out


RECORD_FIELDS = tuple(f.name for f in fields(DiagnosticsRecord))


def compute_record(u, spec, t=0.0, hs=None, rule=None, n_cutoff=math.inf):
    """All scalar diagnostics of one state.

    ``rule`` and ``n_cutoff`` select how ``phi(u)`` enters the chemical
    potential for ``D``; pass the solver's values to get the dissipation of
    the discretized system.
    """
    samples, c, grid = _pair(u)
    return DiagnosticsRecord(
        t=float(t),
        mass=float(grid.volume * c[0, 0, 0].real),
        F=free_energy(u, spec),
        D=dissipation_rate(u, spec, rule, n_cutoff),
        l2=sobolev_norm(u, 0),
        gradl2=grad_l2(u),
        lapl2=lap_l2(u),
        h2=sobolev_norm(u, 2),
        linf=float(np.max(np.abs(samples))),
        l6=_lp(samples, 6, grid),
        hs=None if hs is None else sobolev_norm(u, hs),
    )


# -- energy identity -----------------------------------------------------------------


class EnergyMonitor:
    """Streaming check of ``dF/dt = -D`` along a trajectory.

    Feed it ``(t, u)`` pairs (or flow states) with a uniform time step.  For
    every interval it stores ``dF`` (cancellation free), the residual
    ``r_k = dF/dt + D(u_mid)`` with ``u_mid`` the average of the end states,
    and the slack ``max(1e-8 (1 + |F_k|), 2 |r_k| dt)`` used by
    :meth:`monotone`.
    """

    def __init__(self, spec, rule=None, n_cutoff=math.inf):
        self.spec = spec
        self.rule = rule
        self.n_cutoff = n_cutoff
        self.times = []
        self.F = []
        self.dF = []
        self.D_mid = []
        self.residuals = []
        self._prev = None

    def __call__(self, item):
        if hasattr(item, "u_hat"):
            t, u = item.t, item.u_hat
        else:
            t, u = item
        samples, c, grid = _pair(u)
        self.times.append(float(t))
        self.F.append(_bulk(samples, grid, self.spec) + _gradient_energy(c, grid))
        if self._prev is not None:
            prev_samples, prev_c = self._prev
            dt = self.times[-1] - self.times[-2]
            dt0 = self.times[1] - self.times[0]
            if abs(dt - dt0) > 1e-9 * dt0:
                raise ValueError("energy monitor needs a uniform time step")
            dF = _energy_difference(prev_samples, prev_c, samples, c, grid, self.spec)
            D = _dissipation(0.5 * (prev_samples + samples), 0.5 * (prev_c + c), grid,
                             self.spec, self.rule, self.n_cutoff)
            self.dF.append(dF)
            self.D_mid.append(D)
            self.residuals.append(dF / dt + D)
        self._prev = (samples, c)

    @property
    def dt(self):
        return self.times[1] - self.times[0]

    def max_residual(self):
        return float(np.max(np.abs(self.residuals)))

    def monotone(self):
        """Per interval, whether ``F_{k+1} <= F_k + slack``."""
        F = np.asarray(self.F[:-1])
        r = np.abs(np.asarray(self.residuals))
        tol = np.maximum(1e-8 * (1.0 + np.abs(F)), 2.0 * r * self.dt)
        return np.asarray(self.dF) <= tol


def energy_identity_residual(trajectory, spec, rule=None, n_cutoff=math.inf):
    """Residuals ``(F_{k+1} - F_k)/dt + D(u_{k+1/2})`` over a sampled trajectory."""
    mon = EnergyMonitor(spec, rule, n_cutoff)
    count = 0
    for item in trajectory:
        mon(item)
        count += 1
    if count < 2:
        raise ValueError("need at least two samples")
    return np.asarray(mon.residuals)


# -- continuous dependence --------------------------------------------------------------


@dataclass(frozen=True)
class DependenceReport:
    times: np.ndarray
    diff_l2: np.ndarray
    fitted_C: float
    bound_ok: bool
    tolerance: float = 0.1

    def as_dict(self):
        return {
            "times": [float(t) for t in self.times],
            "diff_l2": [float(d) for d in self.diff_l2],
            "fitted_C": self.fitted_C,
            "bound_ok": self.bound_ok,
            "tolerance": self.tolerance,
        }


def fit_growth_rate(times, diff):
    """Slope ``C`` of the least-squares line ``log(diff/diff0) ~ b + C t``.

    The intercept is free so that a fast initial transient (stiff modes of the
    perturbation decaying) does not drag the rate below the later growth.
    """
    times = np.asarray(times, dtype=float)
    diff = np.asarray(diff, dtype=float)
    if diff[0] == 0 or len(times) < 2:
        return 0.0
    y = np.log(diff / diff[0])
    tc = times - times.mean()
    return float(np.sum(tc * (y - y.mean())) / np.sum(tc * tc))


def continuous_dependence(u0, delta, spec, config, seed=None, tolerance=0.1, workers=1):
    """Evolve ``u0`` and ``u0 + delta * w`` (``w`` a seeded unit-L2 field).

    ``C`` is fitted on samples in ``[0, T/2]``; the report checks
    ``diff(t) <= diff(0) exp(C t) (1 + tolerance)`` at every sample.
    """
    from .flow import solve
    from .initial import unit_perturbation

    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    grid = u0.grid
    w = unit_perturbation(grid, config.seed if seed is None else seed)
    u1 = RealField(grid, u0.samples + delta * w.samples)
    n_steps = config.n_steps

    def run(u):
        kept = []

        def keep(state):
            n = state.step_count
            if n % config.record_every == 0 or n == n_steps:
                kept.append((state.t, state.u_hat.coeffs))

        solve(u, spec, config, observer=keep)
        return kept

    if workers > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            a, b = pool.map(run, (u0, u1))
    else:
        a, b = run(u0), run(u1)
    times = np.array([t for t, _ in a])
    diff = np.array([
        math.sqrt(grid.volume * grid.parseval_sum(cb - ca)) for (_, ca), (_, cb) in zip(a, b)
    ])
    half = times <= 0.5 * config.T + 1e-12
    C = fit_growth_rate(times[half], diff[half])
    if diff[0] == 0:
        ok = bool(np.all(diff == 0))
    else:
        ok = bool(np.all(diff <= diff[0] * np.exp(C * times) * (1.0 + tolerance)))
    return DependenceReport(times, diff, C, ok, tolerance)


def l2_distance(a, b):
    """``||a - b||_{L2}`` for spectral fields on possibly different grids.

    The coarser spectrum is zero-padded onto the finer grid's modes.
    """
    if a.grid.L != b.grid.L:
        raise ValueError("fields live on boxes of different size")
    if a.grid.N > b.grid.N:
        a, b = b, a
    from .spectral import _embed

    if a.grid.N == b.grid.N:
        d = b.coeffs - a.coeffs
    else:
        emb = _embed(a.coeffs, a.grid.N, b.grid.N)
        # a's Nyquist modes have no counterpart in the embedding
        d = b.coeffs - emb
    return math.sqrt(b.grid.volume * b.grid.parseval_sum(d))


__all__ = [
    "CSV_COLUMNS",
    "DiagnosticsRecord",
    "DependenceReport",
    "EnergyMonitor",
    "INTERPOLATION_INSTANCES",
    "bulk_energy",
    "chemical_potential",
    "compute_record",
    "continuous_dependence",
    "dissipation_rate",
    "dissipation_rate_quadrature",
    "dual_path_norms",
    "energy_identity_residual",
    "fit_growth_rate",
    "free_energy",
    "free_energy_difference",
    "gns_ratio",
    "gradient_energy",
    "interpolation_check",
    "l2_distance",
    "lp_norm",
    "mass",
    "sobolev_norm",
]
