import itertools

import numpy as np
import pytest

from fockbench.fock_core import (BOSON, FERMION, ResourceError, Statistics, embed_restrict, occupation_vectors,
                                 odot, sector_basis, sector_dimension, symmetrizer)


@pytest.mark.parametrize("stat,m,n,expected", [
    (BOSON, 2, 3, 4),
    (FERMION, 2, 3, 0),
    (BOSON, 3, 0, 1),
    (FERMION, 3, 0, 1),
    (FERMION, 4, 2, 6),
    (BOSON, 3, 2, 6),
])
def test_sector_dimension(stat, m, n, expected):
    assert sector_dimension(stat, m, n) == expected


def test_occupations_descending():
    occ = occupation_vectors(BOSON, 2, 3)
    assert occ == ((3, 0), (2, 1), (1, 2), (0, 3))
    assert list(occ) == sorted(occ, reverse=True)


def test_statistics_parse():
    assert Statistics.parse("boson") is BOSON
    assert Statistics.parse("fermionic") is FERMION
    with pytest.raises(ValueError):
        Statistics.parse("anyon")


@pytest.mark.parametrize("stat", [BOSON, FERMION])
@pytest.mark.parametrize("m,p", [(m, p) for m in (1, 2, 3) for p in (1, 2, 3, 4)])
def test_symmetrizer_projector_laws(stat, m, p):
    S = symmetrizer(stat, m, p)
    assert np.abs(S @ S - S).max() <= 1e-12
    assert np.abs(S - S.conj().T).max() <= 1e-12
    assert np.linalg.matrix_rank(S) == sector_dimension(stat, m, p)


def test_symmetrizer_small_cases():
    assert np.allclose(symmetrizer(BOSON, 3, 1), np.eye(3))
    e1, e2 = np.eye(2)
    S = symmetrizer(BOSON, 2, 2)
    assert np.allclose(S @ np.kron(e1, e2), 0.5 * (np.kron(e1, e2) + np.kron(e2, e1)))
    A = symmetrizer(FERMION, 2, 2)
    assert np.allclose(A @ np.kron(e1, e1), 0)


def test_embed_restrict_examples():
    E, R = embed_restrict(BOSON, 3, 0)
    assert E.shape == (1, 1) and E[0, 0] == 1
    E, _ = embed_restrict(BOSON, 1, 2)
    assert np.allclose(E, [[1.0]])


@pytest.mark.parametrize("stat", [BOSON, FERMION])
@pytest.mark.parametrize("m,p", [(2, 2), (3, 2), (2, 3), (3, 3)])
def test_embed_restrict_isometry(stat, m, p):
    E, R = embed_restrict(stat, m, p)
    assert np.abs(R @ E - np.eye(E.shape[1])).max(initial=0.0) <= 1e-12
    assert np.abs(E @ R - symmetrizer(stat, m, p)).max() <= 1e-12


def test_fermionic_wedge_sign_convention():
    # occupation (1, 1) is e_0 ∧ e_1 with the + sign on e_0 ⊗ e_1
    E, _ = embed_restrict(FERMION, 2, 2)
    assert E[1, 0] == pytest.approx(1 / np.sqrt(2))
    assert E[2, 0] == pytest.approx(-1 / np.sqrt(2))


def test_normalizations_are_exact():
    basis = sector_basis(BOSON, 2, 4)
    assert [int(x) for x in basis.norm_squared] == [1, 4, 6, 4, 1]


def test_odot_examples():
    rng = np.random.default_rng(0)
    b = rng.standard_normal((3, 3))
    assert np.allclose(odot(b), b)
    assert np.allclose(odot(b, b), np.kron(b, b))


def test_odot_polarization():
    rng = np.random.default_rng(1)
    b1, b2 = rng.standard_normal((2, 3, 3))
    pol = (np.kron(b1 + b2, b1 + b2) - np.kron(b1 - b2, b1 - b2)) / 4
    assert np.abs(odot(b1, b2) - pol).max() <= 1e-12


@pytest.mark.parametrize("stat", [BOSON, FERMION])
@pytest.mark.parametrize("p", [2, 3])
def test_quantum_symmetrization(stat, p):
    rng = np.random.default_rng(p)
    m = 3
    ops = [rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m)) for _ in range(p)]
    T = ops[0]
    for o in ops[1:]:
        T = np.kron(T, o)
    E, R = embed_restrict(stat, m, p)
    assert np.abs(R @ T @ E - R @ odot(*ops) @ E).max() <= 1e-12


def test_tensor_cap(monkeypatch):
    monkeypatch.setenv("FOCKBENCH_TENSOR_CAP", "16")
    with pytest.raises(ResourceError):
        symmetrizer(BOSON, 3, 3)
