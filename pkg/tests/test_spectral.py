import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chflow.spectral import (
    DealiasRule,
    RealField,
    SpectralField,
    bessel_weight,
    biharmonic,
    dealias,
    dealiased_product,
    forward,
    gradient,
    inverse,
    laplacian,
    make_grid,
    parse_dealias,
    project_low_modes,
)

from conftest import TWO_PI, constant, cosine, random_real


# -- grid ---------------------------------------------------------------------


def test_wavenumbers_n4_transform_order():
    g = make_grid(4, TWO_PI)
    assert g.wavenumbers.tolist() == [0.0, 1.0, -2.0, -1.0]


def test_max_wavenumber_unit_box():
    g = make_grid(8, 1.0)
    assert np.max(np.abs(g.wavenumbers)) == pytest.approx(8 * math.pi, rel=1e-15)


@pytest.mark.parametrize("N,L", [(3, 1.0), (2, 1.0), (7, 2.0), (8, 0.0), (8, -1.0)])
def test_bad_grid_rejected(N, L):
    with pytest.raises(ValueError):
        make_grid(N, L)


def test_grid_tables_deterministic():
    a, b = make_grid(8, 3.0), make_grid(8, 3.0)
    assert a == b and hash(a) == hash(b)
    assert np.array_equal(a.xi2, b.xi2)
    assert a.wavenumbers[0] == 0.0 and len(a.wavenumbers) == 8


def test_realfield_guards(grid8):
    with pytest.raises(ValueError):
        RealField(grid8, np.zeros((8, 8, 7)))
    bad = np.zeros(grid8.shape)
    bad[1, 2, 3] = np.nan
    with pytest.raises(ValueError):
        RealField(grid8, bad)


def test_spectralfield_shape_guard(grid8):
    with pytest.raises(ValueError):
        SpectralField(grid8, np.zeros((8, 8, 8), complex))


# -- transforms -----------------------------------------------------------------


def test_constant_only_dc(grid8):
    F = forward(constant(grid8, 2.5))
    assert F.coeffs[0, 0, 0] == pytest.approx(2.5, rel=1e-15)
    rest = F.coeffs.copy()
    rest[0, 0, 0] = 0
    assert np.max(np.abs(rest)) < 1e-15


def test_cosine_two_half_coefficients():
    g = make_grid(8, 3.0)
    F = forward(cosine(g, (1, 0, 0)))
    assert F[(1, 0, 0)] == pytest.approx(0.5, abs=1e-15)
    assert F[(-1, 0, 0)] == pytest.approx(0.5, abs=1e-15)
    full = np.fft.fftn(cosine(g, (1, 0, 0)).samples) / g.N**3
    big = np.argwhere(np.abs(full) > 1e-12)
    assert sorted(map(tuple, big.tolist())) == [(1, 0, 0), (7, 0, 0)]


def test_round_trip_random(grid8):
    u = random_real(grid8, 3)
    v = inverse(forward(u))
    err = np.linalg.norm(v.samples - u.samples) / np.linalg.norm(u.samples)
    assert err < 1e-12


def test_parseval(grid8):
    u = random_real(grid8, 4)
    quad = np.sum(u.samples**2) * grid8.dx**3
    pars = grid8.volume * grid8.parseval_sum(forward(u).coeffs)
    assert pars == pytest.approx(quad, rel=1e-12)


def test_hermitian_defect_small_for_real(grid8):
    assert forward(random_real(grid8, 5)).hermitian_defect() < 1e-12


# -- operators -------------------------------------------------------------------


def test_laplacian_biharmonic_single_mode(grid8):
    F = forward(cosine(grid8, (1, 0, 0)))
    assert laplacian(F)[(1, 0, 0)] == pytest.approx(-0.5, abs=1e-15)
    assert biharmonic(F)[(1, 0, 0)] == pytest.approx(0.5, abs=1e-15)


def test_laplacian_of_constant_is_zero(grid8):
    assert np.max(np.abs(laplacian(forward(constant(grid8, 3.0))).coeffs)) == 0.0


def test_lap_lap_is_biharmonic(grid8):
    F = forward(random_real(grid8, 6))
    assert np.array_equal(laplacian(laplacian(F)).coeffs, biharmonic(F).coeffs)


def test_gradient_of_sine_matches_derivative():
    g = make_grid(16, 3.0)
    x1 = g.coords[0]
    u = RealField(g, np.broadcast_to(np.sin(2 * g.unit * x1), g.shape).copy())
    gx, gy, gz = (inverse(c).samples for c in gradient(forward(u)))
    exact = 2 * g.unit * np.cos(2 * g.unit * x1)
    assert np.max(np.abs(gx - exact)) < 1e-12
    assert np.max(np.abs(gy)) < 1e-14 and np.max(np.abs(gz)) < 1e-14


def test_operators_keep_real(grid8):
    F = forward(random_real(grid8, 7))
    for G in (laplacian(F), biharmonic(F), bessel_weight(F, 1.5), *gradient(F)):
        assert G.hermitian_defect() < 1e-12


# -- projection -------------------------------------------------------------------


def test_projection_identity_for_large_radius(grid8):
    F = forward(random_real(grid8, 8))
    big = math.sqrt(3) * 4 + 1e-9
    assert np.array_equal(project_low_modes(F, big).coeffs, F.coeffs)


def test_projection_half_keeps_dc(grid8):
    F = forward(random_real(grid8, 9))
    P = project_low_modes(F, 0.5).coeffs
    assert P[0, 0, 0] == F.coeffs[0, 0, 0]
    P[0, 0, 0] = 0
    assert not P.any()


def test_projection_idempotent(grid8):
    F = forward(random_real(grid8, 10))
    once = project_low_modes(F, 2.3)
    assert np.array_equal(project_low_modes(once, 2.3).coeffs, once.coeffs)


@pytest.mark.parametrize("n", [0.0, -1.0])
def test_projection_rejects_nonpositive(grid8, n):
    with pytest.raises(ValueError):
        project_low_modes(forward(random_real(grid8)), n)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.floats(0.1, 8.0), s=st.floats(-2.0, 3.0))
def test_projection_never_increases_norms(seed, n, s):
    from chflow.diagnostics import sobolev_norm

    g = make_grid(8, TWO_PI)
    F = forward(random_real(g, seed))
    P = project_low_modes(F, n)
    assert sobolev_norm(P, 0) <= sobolev_norm(F, 0) * (1 + 1e-14)
    assert sobolev_norm(P, s) <= sobolev_norm(F, s) * (1 + 1e-14)


# -- Bessel weight ------------------------------------------------------------------


def test_bessel_s0_identity(grid8):
    F = forward(random_real(grid8, 11))
    assert np.array_equal(bessel_weight(F, 0).coeffs, F.coeffs)


def test_bessel_s2_doubles_unit_mode_keeps_dc(grid8):
    F = forward(cosine(grid8, (0, 1, 0), mean=1.0))
    W = bessel_weight(F, 2)
    assert W[(0, 1, 0)] == pytest.approx(2 * F[(0, 1, 0)], rel=1e-15)
    assert W[(0, 0, 0)] == F[(0, 0, 0)]


# -- dealiasing -----------------------------------------------------------------------


def test_parse_dealias_forms():
    assert parse_dealias("two_thirds") == DealiasRule("two_thirds")
    assert parse_dealias("padded(3)") == DealiasRule("padded", 3)
    assert str(parse_dealias("padded(4)")) == "padded(4)"
    with pytest.raises(ValueError):
        parse_dealias("three_halves")


def test_two_thirds_on_8_zeroes_k3_and_up(grid8):
    F = forward(random_real(grid8, 12))
    D = dealias(F, "two_thirds")
    kx, ky, kz = grid8.k_index
    high = (np.abs(kx) >= 3) | (np.abs(ky) >= 3) | (kz >= 3)
    assert not D.coeffs[np.broadcast_to(high, D.coeffs.shape)].any()
    low = ~np.broadcast_to(high, D.coeffs.shape)
    assert np.array_equal(D.coeffs[low], F.coeffs[low])


@pytest.mark.parametrize("rule", ["two_thirds", "padded(2)", "padded(3)"])
def test_dealias_idempotent(grid8, rule):
    F = forward(random_real(grid8, 13))
    once = dealias(F, rule)
    assert np.array_equal(dealias(once, rule).coeffs, once.coeffs)


def _exact_product(F, G):
    """Alias-free product by direct convolution of the full spectra (oracle)."""
    N = F.grid.N
    a = np.fft.fftn(inverse(F).samples) / N**3
    b = np.fft.fftn(inverse(G).samples) / N**3
    k = F.grid.k1d
    out = np.zeros((N, N, N), complex)
    nz_a = np.argwhere(np.abs(a) > 0)
    nz_b = np.argwhere(np.abs(b) > 0)
    for i in nz_a:
        for j in nz_b:
            m = k[i] + k[j]
            if np.all(np.abs(m) < N // 2):
                out[tuple(m % N)] += a[tuple(i)] * b[tuple(j)]
    return out


def test_padded2_product_of_modes_lands_at_sum(grid8):
    F = SpectralField.from_modes(grid8, {(1, 2, 0): 0.7})
    G = SpectralField.from_modes(grid8, {(2, -1, 1): -1.3})
    P = dealiased_product(F, G, "padded(2)")
    # cos a cos b = (cos(a+b) + cos(a-b)) / 2 ; each cos carries 1/2 per sign
    assert P[(3, 1, 1)] == pytest.approx(0.7 * -1.3 / 4, abs=1e-15)
    assert P[(-1, 3, -1)] == pytest.approx(0.7 * -1.3 / 4, abs=1e-15)
    full = np.fft.fftn(inverse(P).samples) / 8**3
    assert np.max(np.abs(full - _exact_product(F, G))) < 1e-15


def test_padded2_matches_convolution_random_low_modes(grid8):
    rng = np.random.default_rng(14)
    modes_f = {tuple(rng.integers(-3, 4, 3)): rng.normal() for _ in range(4)}
    modes_g = {tuple(rng.integers(-3, 4, 3)): rng.normal() for _ in range(4)}
    F = SpectralField.from_modes(grid8, modes_f)
    G = SpectralField.from_modes(grid8, modes_g)
    P = dealiased_product(F, G, "padded(2)")
    full = np.fft.fftn(inverse(P).samples) / 8**3
    assert np.max(np.abs(full - _exact_product(F, G))) < 1e-14
