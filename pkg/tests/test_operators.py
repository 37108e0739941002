import numpy as np
import pytest
import scipy.linalg as sla

from fockbench.fock_core import BOSON, FERMION
from fockbench.operators import (Gamma, TruncatedFock, annihilation, creation, dGamma, exp_dGamma,
                                 field_and_weyl, number_operator)


def _safe(fock, width=1):
    # projector onto sectors where the CCR is exact
    return np.diag((fock.particle_numbers <= fock.N_max - width).astype(float))


@pytest.mark.parametrize("eps", [1.0, 0.25])
def test_single_mode_boson_example(eps):
    fock = TruncatedFock(1, BOSON, 4, eps=eps)
    a = annihilation(fock, [1.0]).toarray()
    assert np.allclose(np.diag(a, 1), np.sqrt(eps * np.arange(1, 5)))
    comm = a @ a.conj().T - a.conj().T @ a
    P = _safe(fock)
    assert np.abs(P @ (comm - eps * np.eye(fock.dim)) @ P).max() <= 1e-12


@pytest.mark.parametrize("stat", [BOSON, FERMION])
@pytest.mark.parametrize("eps", [1.0, 0.5])
def test_canonical_relations(stat, eps):
    fock = TruncatedFock(3, stat, 4, eps=eps)
    rng = np.random.default_rng(7)
    f, g = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
    af = annihilation(fock, f).toarray()
    ag_star = creation(fock, g).toarray()
    ag = annihilation(fock, g).toarray()
    sign = -1 if stat is BOSON else 1
    rel = af @ ag_star + sign * ag_star @ af
    P = _safe(fock) if stat is BOSON else np.eye(fock.dim)
    assert np.abs(P @ (rel - eps * np.vdot(f, g) * np.eye(fock.dim)) @ P).max() <= 1e-12
    assert np.abs(af @ ag + sign * ag @ af).max() <= 1e-12


def test_annihilation_antilinear():
    fock = TruncatedFock(2, BOSON, 3)
    f = np.array([1.0, 2.0j])
    assert np.allclose(annihilation(fock, 1j * f).toarray(), -1j * annihilation(fock, f).toarray())
    assert np.allclose(creation(fock, f).toarray(), annihilation(fock, f).toarray().conj().T)


@pytest.mark.parametrize("stat", [BOSON, FERMION])
def test_number_and_dGamma_identity(stat):
    fock = TruncatedFock(3, stat, 3, eps=0.5)
    N = number_operator(fock).toarray()
    assert np.allclose(np.diag(N), 0.5 * fock.particle_numbers)
    assert np.allclose(dGamma(fock, np.eye(3)).toarray(), N)


@pytest.mark.parametrize("stat", [BOSON, FERMION])
def test_gamma_is_tensor_power(stat):
    rng = np.random.default_rng(3)
    C = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    fock = TruncatedFock(3, stat, 3)
    G = Gamma(fock, C)
    assert np.allclose(G.block(1, 1), C)
    assert np.allclose(G.block(0, 0), [[1.0]])
    D = rng.standard_normal((3, 3))
    assert np.allclose(Gamma(fock, C @ D).toarray(), G.toarray() @ Gamma(fock, D).toarray())


@pytest.mark.parametrize("stat", [BOSON, FERMION])
def test_exp_dGamma_matches_expm(stat):
    rng = np.random.default_rng(11)
    A = rng.standard_normal((2, 2))
    A = A + A.T
    fock = TruncatedFock(2, stat, 3, eps=0.5)
    lhs = exp_dGamma(fock, A, 0.3).toarray()
    rhs = sla.expm(0.3 * dGamma(fock, A).toarray())
    assert np.abs(lhs - rhs).max() <= 1e-10


def test_field_and_weyl_unitary_and_vacuum():
    fock = TruncatedFock(1, BOSON, 30)
    phi, W, leak = field_and_weyl(fock, [0.5])
    assert np.allclose(phi.toarray(), phi.toarray().conj().T)
    Wm = W.toarray()
    assert np.abs(Wm.conj().T @ Wm - np.eye(fock.dim)).max() <= 1e-10
    # <Ω, W(f) Ω> = exp(-|f|²/4)
    assert Wm[0, 0] == pytest.approx(np.exp(-0.25 / 4), abs=1e-10)
    assert leak < 1e-12


def test_field_rejects_fermions():
    with pytest.raises(ValueError):
        field_and_weyl(TruncatedFock(2, FERMION, 2), [1.0, 0.0])


@pytest.mark.parametrize("bad", [dict(eps=0.0), dict(N_max=-1)])
def test_invalid_construction(bad):
    kw = dict(m=2, stat=BOSON, N_max=2, eps=1.0) | bad
    with pytest.raises(ValueError):
        TruncatedFock(**kw)


def test_fermionic_cutoff_clamped():
    assert TruncatedFock(2, FERMION, 10).N_max == 2
