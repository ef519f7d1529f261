"""Bulk free-energy densities and their growth checks.

A potential is carried as the quadruple ``(Phi, phi, dphi, ddphi)`` with
``phi = Phi'``, together with a growth exponent ``p``.  Admissible potentials
satisfy, for some constant ``C``::

    Phi >= 0,  |phi| <= C(|s|^p + 1),  |phi'| <= C(|s|^(p-1) + 1),
    |phi''| <= C(|s|^(p-2) + 1),       2 <= p <= 21/5
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

from .spectral import RealField

P_MIN = 2.0
P_MAX = 21.0 / 5.0


class NonFiniteError(FloatingPointError):
    """A potential evaluation produced NaN or Inf."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class PotentialSpec:
    name: str
    Phi: Callable
    phi: Callable
    dphi: Callable
    ddphi: Callable
    p: float
    coefficients: tuple | None = None

    def __post_init__(self):
        if not P_MIN <= self.p <= P_MAX:
            warnings.warn(
                f"growth exponent p={self.p} of {self.name!r} lies outside [2, 21/5]",
                stacklevel=3,
            )

    def __call__(self, which):
        """Return the scalar function named ``which`` (Phi, phi, dphi, ddphi)."""
        if which not in ("Phi", "phi", "dphi", "ddphi"):
            raise ValueError(f"unknown potential component {which!r}")
        return getattr(self, which)

    @property
    def is_zero(self):
        return self.coefficients is not None and not any(self.coefficients)


def _quartic_Phi(u):
    w = u * u - 1.0
    return w * w


def double_well():
    """``Phi(u) = (u^2 - 1)^2`` with ``phi(u) = 4u^3 - 4u``."""
    return PotentialSpec(
        name="double_well",
        Phi=_quartic_Phi,
        phi=lambda u: 4.0 * u * (u * u - 1.0),
        dphi=lambda u: 12.0 * u * u - 4.0,
        ddphi=lambda u: 24.0 * u,
        p=3.0,
        coefficients=(0.0, -4.0, 0.0, 4.0, 0.0),
    )


def zero_potential():
    """``Phi = phi = 0``: the flow reduces to the bi-harmonic heat equation."""

    def zero(u):
        return np.zeros_like(u) if isinstance(u, np.ndarray) else 0.0 * u

    return PotentialSpec("zero", zero, zero, zero, zero, p=2.0,
                         coefficients=(0.0, 0.0, 0.0, 0.0, 0.0))


def _horner(coef):
    coef = [float(c) for c in coef]

    def f(u):
        acc = np.zeros_like(u) + coef[-1] if isinstance(u, np.ndarray) else coef[-1]
        for c in reversed(coef[:-1]):
            acc = acc * u + c
        return acc

    return f


def _phi_shift(antider, phi_poly, validation_range):
    """Additive constant making the antiderivative's minimum zero.

    Uses the global minimum when the antiderivative is bounded below, else the
    minimum over ``validation_range`` (with a warning, since ``Phi >= 0`` then
    fails somewhere outside the range).
    """
    if not np.any(phi_poly.coef):
        return 0.0
    deg = antider.degree()
    lead = antider.coef[-1] if deg > 0 else 0.0
    crit = [r.real for r in phi_poly.roots() if abs(r.imag) < 1e-12] if phi_poly.degree() > 0 else []
    if deg > 0 and deg % 2 == 0 and lead > 0:
        candidates = crit
    else:
        lo, hi = validation_range
        candidates = [lo, hi] + [r for r in crit if lo <= r <= hi]
        warnings.warn(
            "Phi is unbounded below; Phi >= 0 is only enforced on "
            f"[{lo}, {hi}]",
            stacklevel=3,
        )
    if not candidates:
        return 0.0
    return -min(float(antider(c)) for c in candidates)


def from_polynomial(a, name=None, p=None, validation_range=(-4.0, 4.0)):
    """Potential with ``phi(u) = sum_i a[i] u^i``, without the sign checks."""
    a = tuple(float(c) for c in a)
    phi_poly = Polynomial(a).trim()
    antider = phi_poly.integ()
    shift = _phi_shift(antider, phi_poly, validation_range)
    Phi_coef = list(antider.coef)
    Phi_coef[0] += shift
    d1 = phi_poly.deriv()
    d2 = d1.deriv()
    if p is None:
        p = float(phi_poly.degree())
    return PotentialSpec(
        name=name or "polynomial",
        Phi=_horner(Phi_coef),
        phi=_horner(phi_poly.coef),
        dphi=_horner(d1.coef),
        ddphi=_horner(d2.coef),
        p=float(p),
        coefficients=a,
    )


def polynomial_potential(a, validation_range=(-4.0, 4.0)):
    """Quartic-or-lower ``phi`` with ``a[3] > 0`` and ``a[1] < 0``."""
    a = tuple(float(c) for c in a)
    if len(a) != 5:
        raise ValueError(f"need exactly five coefficients a0..a4, got {len(a)}")
    errors = []
    if not a[3] > 0:
        errors.append(f"a3 must be > 0, got {a[3]}")
    if not a[1] < 0:
        errors.append(f"a1 must be < 0, got {a[1]}")
    if errors:
        raise ValueError("; ".join(errors))
    return from_polynomial(a, validation_range=validation_range)


def by_name(name):
    table = {"double_well": double_well, "zero": zero_potential}
    try:
        return table[name]()
    except KeyError:
        raise ValueError(f"unknown potential {name!r}; known: {sorted(table)}") from None


@dataclass(frozen=True)
class GrowthReport:
    satisfied: dict
    fitted_C: dict
    sample_range: tuple
    positivity_ok: bool
    p: float

    def as_dict(self):
        return {
            "p": self.p,
            "p_admissible": P_MIN <= self.p <= P_MAX,
            "satisfied": dict(self.satisfied),
            "fitted_C": dict(self.fitted_C),
            "sample_range": list(self.sample_range),
            "positivity_ok": self.positivity_ok,
        }


def validate_growth(spec, sample_range=(-4.0, 4.0), samples=1001):
    """Fit the smallest constants for which the growth bounds hold on samples.

    The samples are ``samples`` equispaced points including both endpoints.
    """
    lo, hi = (float(v) for v in sample_range)
    if not lo < hi:
        raise ValueError(f"empty sample range [{lo}, {hi}]")
    if samples < 100:
        raise ValueError(f"need at least 100 samples, got {samples}")
    s = np.linspace(lo, hi, int(samples))
    a = np.abs(s)
    fitted, satisfied = {}, {}
    with np.errstate(all="ignore"):
        Phi = np.asarray(spec.Phi(s), dtype=float)
        for which, exponent in (("phi", spec.p), ("dphi", spec.p - 1), ("ddphi", spec.p - 2)):
            values = np.abs(np.asarray(spec(which)(s), dtype=float))
            if not np.all(np.isfinite(values)):
                raise NonFiniteError(f"{which} is not finite on [{lo}, {hi}]")
            bound = a**exponent + 1.0
            C = float(np.max(values / bound))
            # the quotient can round down by an ulp; nudge until the bound holds exactly
            while not np.all(values <= C * bound):
                C = float(np.nextafter(C, np.inf))
            fitted[which] = C
            satisfied[which] = True
    if not np.all(np.isfinite(Phi)):
        raise NonFiniteError(f"Phi is not finite on [{lo}, {hi}]")
    tol = 1e-12 * (1.0 + float(np.max(np.abs(Phi))))
    return GrowthReport(
        satisfied=satisfied,
        fitted_C=fitted,
        sample_range=(lo, hi),
        positivity_ok=bool(np.min(Phi) >= -tol),
        p=spec.p,
    )


def eval_on_field(spec, which, u):
    """Apply one component of the potential to every sample of ``u``."""
    f = spec(which)
    with np.errstate(all="ignore"):
        out = np.asarray(f(u.samples), dtype=float)
    bad = ~np.isfinite(out)
    if bad.any():
        index = int(np.flatnonzero(bad.ravel())[0])
        raise NonFiniteError(
            f"{which} overflowed at sample {index} (u={u.samples.ravel()[index]!r})", index
        )
    return RealField(u.grid, out)
