import math

import numpy as np
import pytest

from fockbench.fock_core import ResourceError
from fockbench.semiclassics import bec_level_eigenvalues
from fockbench.weyl import (AliasingError, PhaseSpaceGrid, SingularWeight, Symbol, WignerPairing, bump,
                            bump_symbol, gaussian_symbol, harmonic_grid, harmonic_levels, harmonic_symbol,
                            phase_space_integral, singular_trace, trace_pair, weyl_quantize)


@pytest.mark.parametrize("kw", [dict(d=3, L=1.0, n_pts=8), dict(d=1, L=1.0, n_pts=12), dict(d=1, L=0.0, n_pts=8)])
def test_grid_validation(kw):
    with pytest.raises(ValueError):
        PhaseSpaceGrid(**kw)


def test_grid_geometry():
    g = PhaseSpaceGrid(1, 4.0, 16)
    assert g.dx == 0.5 and g.x[0] == -4.0
    assert np.max(np.abs(g.xi)) == pytest.approx(g.nyquist)
    assert PhaseSpaceGrid(2, 4.0, 8).points().shape == (64, 2)


def test_symbol_tags_are_checked():
    with pytest.raises(ValueError):
        Symbol(lambda X: np.ones(X.shape[:-1]), tag="compact_support", radius=1.0)
    with pytest.raises(ValueError):
        Symbol(lambda X: np.full(X.shape[:-1], 0.5), tag="quadratic_elliptic")
    with pytest.raises(ValueError):
        Symbol(lambda X: np.ones(X.shape[:-1]), tag="smooth")


def test_bump_profile():
    r = np.array([0.0, 0.5, 0.8, 0.9, 1.0, 2.0])
    v = bump(r)
    assert np.allclose(v[:3], 1) and np.allclose(v[-2:], 0)
    assert 0 < v[3] < 1
    assert bump_symbol(2.0).radius == 2.0


@pytest.mark.parametrize("h", [0.5, 0.1])
def test_harmonic_spectrum(h):
    grid = harmonic_grid(h, 8.0)
    lam = np.linalg.eigvalsh(weyl_quantize(harmonic_symbol(), h, 0.5, grid))
    assert np.allclose(lam[:6], harmonic_levels(h, 1, 6), atol=1e-8)


def test_harmonic_levels_multiplicity():
    assert np.allclose(harmonic_levels(1.0, 2, 6), [1, 2, 2, 3, 3, 3])


@pytest.mark.parametrize("t", [0.0, 0.5, 1.0])
def test_separable_and_general_paths_agree(t):
    a = gaussian_symbol(2.0, center=(0.3, -0.5))
    b = Symbol(a.func, tag="S1", radius=a.radius)
    grid = PhaseSpaceGrid(1, 24.0, 512)
    A = weyl_quantize(a, 0.2, t, grid)
    B = weyl_quantize(b, 0.2, t, grid)
    assert np.abs(A - B).max() <= 1e-12
    assert np.abs(A - A.conj().T).max() <= 1e-14


def test_position_symbol_is_diagonal_in_both_orderings():
    a = Symbol(lambda X: np.exp(-X[..., 0] ** 2), tag="S1", radius=6.0)
    grid = PhaseSpaceGrid(1, 8.0, 64)
    W = weyl_quantize(a, 1.0, 0.5, grid)
    S = weyl_quantize(a, 1.0, 0.5, grid, ordering="standard")
    assert np.allclose(S, np.diag(np.exp(-grid.x**2)))
    assert np.allclose(W, S, atol=1e-12)
    with pytest.raises(ValueError):
        weyl_quantize(a, 1.0, 0.5, grid, ordering="anti")


def test_aliasing_guard():
    with pytest.raises(AliasingError):
        weyl_quantize(gaussian_symbol(1.0), 0.01, 0.5, PhaseSpaceGrid(1, 4.0, 16))


def test_dense_cap_in_two_dimensions():
    with pytest.raises(ResourceError):
        weyl_quantize(gaussian_symbol(1.0, d=2), 1.0, 0.5, PhaseSpaceGrid(2, 8.0, 128), check=False)


@pytest.mark.parametrize("h", [0.25, 0.05])
def test_trace_pair_matches_phase_space_integral(h):
    a = gaussian_symbol(1.0, center=(0.5, 0.0))
    b = gaussian_symbol(2.0)
    grid = harmonic_grid(h, max(a.radius, b.radius))
    exact = phase_space_integral(lambda X: a(X) * b(X))
    assert trace_pair(a, b, h, grid) == pytest.approx(exact, rel=1e-6)


def test_phase_space_integral_gaussian():
    assert phase_space_integral(lambda X: np.exp(-np.sum(X**2, axis=-1))) == pytest.approx(0.5)
    assert phase_space_integral(lambda r: np.exp(-r * r), d=2, radial=True) == pytest.approx(0.25)


@pytest.mark.parametrize("t", [0.5, 0.25])
def test_wigner_pairing_matches_matrix_trace(t):
    rng = np.random.default_rng(0)
    grid = PhaseSpaceGrid(1, 10.0, 128)
    V = rng.standard_normal((128, 3)) + 1j * rng.standard_normal((128, 3))
    w = np.array([0.5, 0.3, 0.2])
    rho = (V * w) @ V.conj().T
    a = Symbol(lambda X: np.exp(-X[..., 0] ** 2 - 0.5 * (X[..., 1] - 0.3) ** 2), tag="S1", radius=8.0)
    M = weyl_quantize(a, 0.3, t, grid, check=False)
    pairing = WignerPairing(grid, V, w)
    assert pairing.trace == pytest.approx(np.trace(rho).real)
    assert pairing.pair(a, 0.3, t, check=False) == pytest.approx(np.trace(rho @ M).real, rel=1e-12)
    many = WignerPairing.pair_many(a, [pairing, WignerPairing(grid, V[:, :1])], 0.3, t, check=False)
    assert many[0] == pytest.approx(pairing.pair(a, 0.3, t, check=False), rel=1e-12)


def test_bec_level_eigenvalues_match_grid_quantization():
    h, kappa = 1.0, 1.0
    a = gaussian_symbol(kappa / 2, d=2)
    grid = harmonic_grid(h, a.radius, d=2)
    lam = np.sort(np.linalg.eigvalsh(weyl_quantize(a, h, 0.5, grid)))[::-1]
    levels = np.repeat(np.arange(4), np.arange(1, 5))
    assert np.allclose(lam[:10], bec_level_eigenvalues(h, kappa, levels), atol=1e-8)


def test_singular_weight_validation():
    with pytest.raises(ValueError):
        SingularWeight(lambda u: u**-0.5, 0.5, 0.8, 1.0)
    with pytest.raises(ValueError):
        SingularWeight(lambda u: 2 * u**-0.5 * (1 + u * u) ** -0.75, 0.5, 2.0, 1.0)
    fw = SingularWeight.standard(c=2.0)
    assert fw.shift(0.25) == pytest.approx(2.0 * 0.25**2)


def test_singular_trace_rows_converge():
    fw = SingularWeight.standard()
    alpha = harmonic_symbol()
    a = gaussian_symbol(1.0)
    out = singular_trace(fw, alpha, a, [2.0**-3, 2.0**-5], lambda h: harmonic_grid(h, 10.0), c_values=[1.0, 2.0])
    rows = out["rows"]
    assert len(rows) == 4
    errs = [r["rel_error"] for r in rows if r["c"] == 1.0]
    assert errs[1] < errs[0]
    cond = {r["c"]: r["condensate"] for r in rows if r["h"] == 2.0**-5}
    assert cond[1.0] / cond[2.0] == pytest.approx(math.sqrt(2), rel=0.05)
