"""Time evolution of the cut-off Cahn-Hilliard system.

The evolved quantity is ``u_n`` with spectrum confined to the ball
``|xi| <= n``::

    du_n/dt = P_n Lap mu_n,    mu_n = P_n phi(P_n u_n) - Lap P_n u_n

Two integrators are provided.  ``galerkin_rk4`` is classical RK4 on the
right-hand side above.  ``etd1``/``etdrk2`` split off the linear part exactly
(``exp(-t |xi|^4)``) and treat ``f_n = Lap P_n phi(u_n)`` by exponential time
differencing (Cox & Matthews 2002).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .spectral import (
    DealiasRule,
    RealField,
    SpectralField,
    ball_mask,
    forward,
    irfft3,
    parse_dealias,
    pointwise_coeffs,
)

SCHEMES = ("galerkin_rk4", "etd1", "etdrk2")
BLOWUP_THRESHOLD = 1e12
# linear stability limit of classical RK4 on the negative real axis
RK4_STABILITY = 2.785


class BlowUpError(RuntimeError):
    """Raised when a coefficient becomes non-finite or exceeds the threshold."""

    def __init__(self, message, state=None, records=None, snapshots=None):
        super().__init__(message)
        self.state = state
        self.records = records if records is not None else []
        self.snapshots = snapshots if snapshots is not None else []


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = "etdrk2"
    dt: float = 1e-4
    T: float = 0.0
    n_cutoff: float = math.inf
    dealias: DealiasRule = field(default_factory=DealiasRule)
    record_every: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dealias", parse_dealias(self.dealias))
        object.__setattr__(self, "n_cutoff", float(self.n_cutoff))
        errors = self.validate()
        if errors:
            raise ValueError("; ".join(errors))

    def validate(self):
        errors = []
        if self.scheme not in SCHEMES:
            errors.append(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            errors.append(f"dt must be positive, got {self.dt}")
        if not (self.T >= 0 and math.isfinite(self.T)):
            errors.append(f"T must be non-negative, got {self.T}")
        if not self.n_cutoff > 0:
            errors.append(f"n_cutoff must be positive, got {self.n_cutoff}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            errors.append(f"record_every must be an integer >= 1, got {self.record_every}")
        return errors

    @property
    def n_steps(self):
        n = round(self.T / self.dt)
        if abs(n * self.dt - self.T) > 1e-9 * max(self.T, self.dt):
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        return int(n)


@dataclass(frozen=True)
class FlowState:
    t: float
    u_hat: SpectralField
    step_count: int = 0

    @property
    def grid(self):
        return self.u_hat.grid


def max_resolved_xi(grid, n_cutoff):
    """Largest ``|xi|`` the integrator sees (grid corner or the cutoff radius)."""
    corner = math.sqrt(3) * grid.unit * (grid.N // 2)
    return min(corner, n_cutoff)


def rk4_stable(grid, config):
    return config.dt * max_resolved_xi(grid, config.n_cutoff) ** 4 <= RK4_STABILITY


def nonlinear_cfl(grid, config, u, spec):
    """``dt * max|xi|^2 * max|phi'(u)|``; values above one deserve a warning."""
    dphi = np.max(np.abs(spec.dphi(u.samples)))
    return config.dt * max_resolved_xi(grid, config.n_cutoff) ** 2 * float(dphi)


# -- linear propagator --------------------------------------------------------


def biharmonic_propagate(F, t):
    """Exact bi-harmonic heat flow: multiply each coefficient by ``exp(-t |xi|^4)``."""
    if t < 0:
        raise ValueError(f"propagation time must be non-negative, got {t}")
    return SpectralField(F.grid, np.exp(-t * F.grid.xi4) * F.coeffs)


# -- right-hand side ----------------------------------------------------------


class _Operator:
    """Array-level pieces of the cut-off system for one grid/potential/rule."""

    def __init__(self, grid, spec, n_cutoff, rule):
        self.grid = grid
        self.spec = spec
        self.rule = parse_dealias(rule)
        self.mask = ball_mask(grid, n_cutoff)
        self.finite_cutoff = not math.isinf(n_cutoff)
        self.lap = np.where(self.mask, -grid.xi2, 0.0)
        self.zero = spec.is_zero

    def project(self, c):
        return np.where(self.mask, c, 0) if self.finite_cutoff else c

    def phi_hat(self, c):
        """``P_n phi(u)`` under the dealias rule."""
        if self.zero:
            return np.zeros_like(c)
        out = pointwise_coeffs(self.spec.phi, [c], self.grid, self.rule)
        return self.project(out)

    def forcing(self, c):
        """``f = Lap P_n phi(u)``."""
        if self.zero:
            return np.zeros_like(c)
        return self.lap * self.phi_hat(c)

    def rhs(self, c):
        c = self.project(c)
        return self.lap * (self.phi_hat(c) - self.lap * c)


def rhs_galerkin(state, spec, n=math.inf, rule="two_thirds"):
    """``P_n Lap (P_n phi(u) - Lap u)`` in coefficient space."""
    op = _Operator(state.grid, spec, n, rule)
    out = op.rhs(state.u_hat.coeffs)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite nonlinearity in right-hand side")
    return SpectralField(state.grid, out)


# -- integrators --------------------------------------------------------------


def phi1(z):
    """``(e^z - 1)/z`` with the removable singularity filled in."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = z != 0
    out[nz] = np.expm1(z[nz]) / z[nz]
    return out


def phi2(z):
    """``(e^z - 1 - z)/z^2``; Taylor series near zero to avoid cancellation."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 0.1
    zs = z[small]
    # 1/2 + z/6 + z^2/24 + ... ; truncation below 1e-16 for |z| < 0.1
    acc = np.zeros_like(zs)
    for m in range(12, 1, -1):
        acc = acc * zs + 1.0 / math.factorial(m)
    out[small] = acc
    zl = z[~small]
    out[~small] = (np.expm1(zl) - zl) / (zl * zl)
    return out


class Integrator:
    """One-step map for a fixed grid, potential, and solver configuration."""

    def __init__(self, grid, spec, config):
        self.grid = grid
        self.config = config
        self.op = _Operator(grid, spec, config.n_cutoff, config.dealias)
        dt = config.dt
        if config.scheme in ("etd1", "etdrk2"):
            E, h1, h2 = _etd_coefficients(grid, dt)
            mask = self.op.mask
            self.E = np.where(mask, E, 0.0) if self.op.finite_cutoff else E
            self.h1 = h1
            self.h2 = h2
        self._step = {
            "galerkin_rk4": self._rk4,
            "etd1": self._etd1,
            "etdrk2": self._etdrk2,
        }[config.scheme]

    def _rk4(self, c):
        dt = self.config.dt
        f = self.op.rhs
        k1 = f(c)
        k2 = f(c + (0.5 * dt) * k1)
        k3 = f(c + (0.5 * dt) * k2)
        k4 = f(c + dt * k3)
        return c + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def _etd1(self, c):
        return self.E * c + self.h1 * self.op.forcing(c)

    def _etdrk2(self, c):
        Nc = self.op.forcing(c)
        a = self.E * c + self.h1 * Nc
        return a + self.h2 * (self.op.forcing(a) - Nc)

    def initial(self, u0):
        c = forward(u0).coeffs if isinstance(u0, RealField) else u0.coeffs
        return self.op.project(c)

    def advance(self, c):
        new = self._step(c)
        bad = ~np.isfinite(new)
        if bad.any() or np.max(np.abs(new)) > BLOWUP_THRESHOLD:
            raise BlowUpError("blow-up detected: coefficient non-finite or above 1e12")
        return new

    def step(self, state):
        try:
            new = self.advance(state.u_hat.coeffs)
        except BlowUpError as exc:
            raise BlowUpError(f"{exc} at step {state.step_count + 1}", state=state) from None
        n = state.step_count + 1
        return FlowState(n * self.config.dt, SpectralField(self.grid, new), n)


@lru_cache(maxsize=32)
def _etd_coefficients(grid, dt):
    z = -dt * grid.xi4
    return np.exp(z), dt * phi1(z), dt * phi2(z)


@lru_cache(maxsize=32)
def _integrator(grid, spec, config):
    return Integrator(grid, spec, config)


def step_galerkin_rk4(state, spec, config):
    return _integrator(state.grid, spec, replace(config, scheme="galerkin_rk4")).step(state)


def step_etd(state, spec, config):
    if config.scheme not in ("etd1", "etdrk2"):
        raise ValueError(f"step_etd needs scheme etd1 or etdrk2, got {config.scheme!r}")
    return _integrator(state.grid, spec, config).step(state)


# -- driver --------------------------------------------------------------------


def solve(u0, spec, config, snapshot_every=0, hs=None, observer=None, on_record=None):
    """Advance ``u0`` from ``t = 0`` to ``config.T``.

    Returns ``(final_state, records, snapshots)``.  A record is taken at step 0,
    every ``config.record_every`` steps, and at the final step.  ``observer`` is
    called with every state (including the initial one); ``on_record`` with
    every :class:`~chflow.diagnostics.DiagnosticsRecord` as it is produced.
    On blow-up a :class:`BlowUpError` carrying the partial records, snapshots,
    and last good state is raised.
    """
    from .diagnostics import compute_record

    grid = u0.grid
    n_steps = config.n_steps
    integ = Integrator(grid, spec, config)
    c = integ.initial(u0)
    state = FlowState(0.0, SpectralField(grid, c), 0)
    records, snapshots = [], []

    def emit(s):
        rec = compute_record(s.u_hat, spec, t=s.t, hs=hs, rule=config.dealias,
                             n_cutoff=config.n_cutoff)
        records.append(rec)
        if on_record is not None:
            on_record(rec)

    emit(state)
    if snapshot_every:
        snapshots.append(state)
    if observer is not None:
        observer(state)
    for n in range(1, n_steps + 1):
        try:
            c = integ.advance(c)
        except BlowUpError as exc:
            raise BlowUpError(
                f"{exc} at step {n} (t={n * config.dt:.6g})", state, records, snapshots
            ) from None
        state = FlowState(n * config.dt, SpectralField(grid, c), n)
        if n % config.record_every == 0 or n == n_steps:
            emit(state)
        if snapshot_every and (n % snapshot_every == 0 or n == n_steps):
            snapshots.append(state)
        if observer is not None:
            observer(state)
    return state, records, snapshots


# -- semigroup probe ------------------------------------------------------------


@dataclass(frozen=True)
class ProbeResult:
    """Outcome of :func:`linf_semigroup_probe`.

    ``first_violation`` is the earliest sampled time at which the max norm of
    the propagated field exceeds the initial max norm, or ``None``; in the
    latter case ``t_max`` is an empirical lower bound for the time up to which
    the max norm does not grow.
    """

    first_violation: float | None
    times: np.ndarray
    linf: np.ndarray
    linf0: float
    t_max: float

    def as_dict(self):
        return {
            "first_violation": self.first_violation,
            "empirical_T1": self.t_max if self.first_violation is None else None,
            "linf0": self.linf0,
            "max_linf": float(np.max(self.linf)),
            "t_max": self.t_max,
            "samples": int(len(self.times)),
        }


def linf_semigroup_probe(u0, t_max, samples=101, rtol=1e-12):
    """Scan ``||exp(-t Lap^2) u0||_inf`` over ``samples`` times in ``[0, t_max]``.

    A violation needs the max norm to exceed the initial one by more than
    ``rtol`` relative, so transform round-off alone never triggers it.
    """
    if not t_max > 0:
        raise ValueError(f"t_max must be positive, got {t_max}")
    if samples < 2:
        raise ValueError(f"need at least 2 samples, got {samples}")
    F = forward(u0) if isinstance(u0, RealField) else u0
    grid = F.grid
    times = np.linspace(0.0, float(t_max), int(samples))
    linf = np.empty_like(times)
    for i, t in enumerate(times):
        linf[i] = np.max(np.abs(irfft3(np.exp(-t * grid.xi4) * F.coeffs, grid.N)))
    linf0 = linf[0]
    violating = np.flatnonzero(linf[1:] > linf0 * (1.0 + rtol)) + 1
    first = float(times[violating[0]]) if violating.size else None
    return ProbeResult(first, times, linf, float(linf0), float(t_max))
