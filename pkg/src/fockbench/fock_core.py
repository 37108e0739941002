"""One-particle space, n-particle sector bases and (anti)symmetrizers.

Two coordinate systems are used for the symmetric (bosonic) or antisymmetric
(fermionic) p-particle sector:

* the occupation basis, indexed by occupation vectors in lexicographically
  descending order (polynomial size, main path);
* the ordered tensor basis of C^m ⊗ ... ⊗ C^m (size m**p, oracle path).

``embed_restrict`` converts between the two.
"""
from __future__ import annotations

import enum
import itertools
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

__all__ = [
    "ResourceError",
    "Statistics",
    "BOSON",
    "FERMION",
    "OneParticleSpace",
    "SectorBasis",
    "tensor_cap",
    "occupation_vectors",
    "sector_basis",
    "sector_dimension",
    "symmetrizer",
    "embed_restrict",
    "odot",
    "permutation_sign",
]


class ResourceError(RuntimeError):
    """Raised when an operation would exceed a configured size cap."""


DEFAULT_TENSOR_CAP = 4096


def tensor_cap() -> int:
    """Largest admissible ordered tensor dimension m**p."""
    return int(os.environ.get("FOCKBENCH_TENSOR_CAP", DEFAULT_TENSOR_CAP))


def permutation_sign(perm) -> int:
    """Signature of a permutation given as a sequence of images."""
    perm = list(perm)
    sign = 1
    seen = [False] * len(perm)
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


class Statistics(enum.Enum):
    BOSONIC = "bosonic"
    FERMIONIC = "fermionic"

    @property
    def is_fermionic(self) -> bool:
        return self is Statistics.FERMIONIC

    @property
    def pm(self) -> int:
        """+1 for bosons, -1 for fermions (the ± of the (anti)commutator)."""
        return -1 if self.is_fermionic else 1

    def sign(self, perm) -> int:
        if self.is_fermionic:
            return permutation_sign(perm)
        return 1

    @classmethod
    def parse(cls, value) -> "Statistics":
        if isinstance(value, Statistics):
            return value
        key = str(value).lower()
        if key in ("boson", "bosonic", "bose", "+"):
            return cls.BOSONIC
        if key in ("fermion", "fermionic", "fermi", "-"):
            return cls.FERMIONIC
        raise ValueError(f"unknown statistics {value!r}")


BOSON = Statistics.BOSONIC
FERMION = Statistics.FERMIONIC


@dataclass(frozen=True)
class OneParticleSpace:
    """C^m with the inner product antilinear in the left argument."""

    m: int

    def __post_init__(self):
        if int(self.m) < 1:
            raise ValueError("one-particle dimension must be >= 1")

    @staticmethod
    def inner(f, g) -> complex:
        return complex(np.vdot(f, g))


def _bosonic_occupations(m: int, n: int):
    if m == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _bosonic_occupations(m - 1, n - first):
            yield (first,) + rest


def _fermionic_occupations(m: int, n: int):
    if n > m:
        return
    if m == 0:
        if n == 0:
            yield ()
        return
    if n == 0:
        yield (0,) * m
        return
    # descending lexicographic: a leading 1 comes first
    if n >= 1:
        for rest in _fermionic_occupations(m - 1, n - 1):
            yield (1,) + rest
    if n <= m - 1:
        for rest in _fermionic_occupations(m - 1, n):
            yield (0,) + rest


@lru_cache(maxsize=None)
def occupation_vectors(stat: Statistics, m: int, n: int) -> tuple:
    """Occupation vectors of the n-particle sector, lexicographically descending."""
    if n < 0:
        return ()
    if stat.is_fermionic:
        return tuple(_fermionic_occupations(m, n))
    return tuple(_bosonic_occupations(m, n))


def sector_dimension(stat, m: int, n: int) -> int:
    stat = Statistics.parse(stat)
    if m < 1 or n < 0:
        raise ValueError("need m >= 1 and n >= 0")
    if stat.is_fermionic:
        return math.comb(m, n)
    return math.comb(n + m - 1, n)


@dataclass(frozen=True)
class SectorBasis:
    """Occupation basis of the n-particle sector.

    ``norm_squared[i]`` is the exact rational n!/prod(mu!) (bosons) or n!
    (fermions): the number of signed orderings collapsed into basis vector i.
    """

    stat: Statistics
    m: int
    n: int
    occupations: tuple
    norm_squared: tuple = field(repr=False)
    index: dict = field(repr=False, compare=False)

    def __len__(self):
        return len(self.occupations)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.occupations, dtype=np.int64).reshape(len(self), self.m)

    def labels(self, i: int) -> tuple:
        """Sorted single-particle labels (with repetition) of basis vector i."""
        occ = self.occupations[i]
        return tuple(j for j, k in enumerate(occ) for _ in range(k))


@lru_cache(maxsize=None)
def sector_basis(stat: Statistics, m: int, n: int) -> SectorBasis:
    stat = Statistics.parse(stat)
    occs = occupation_vectors(stat, m, n)
    norms = []
    for occ in occs:
        denom = 1
        if not stat.is_fermionic:
            for k in occ:
                denom *= math.factorial(k)
        norms.append(Fraction(math.factorial(n), denom))
    index = {occ: i for i, occ in enumerate(occs)}
    return SectorBasis(stat, m, n, occs, tuple(norms), index)


def _check_cap(m: int, p: int):
    size = m**p
    if size > tensor_cap():
        raise ResourceError(f"ordered tensor dimension {m}^{p}={size} exceeds cap {tensor_cap()}")
    return size


def _tensor_index(labels, m: int) -> int:
    idx = 0
    for j in labels:
        idx = idx * m + j
    return idx


@lru_cache(maxsize=64)
def _permutation_actions(m: int, p: int):
    """For every permutation σ of p slots, the image index array of the tensor basis."""
    size = m**p
    digits = np.array(list(itertools.product(range(m), repeat=p)), dtype=np.int64).reshape(size, p)
    weights = m ** np.arange(p - 1, -1, -1, dtype=np.int64)
    out = []
    for perm in itertools.permutations(range(p)):
        # (σ·v)(i_1..i_p) = v(i_{σ(1)}..i_{σ(p)})
        out.append((perm, digits[:, list(perm)] @ weights))
    return out


def symmetrizer(stat, m: int, p: int) -> np.ndarray:
    """Orthogonal projector (1/p!) Σ_σ s(σ) σ on (C^m)^{⊗p}."""
    stat = Statistics.parse(stat)
    size = _check_cap(m, p)
    S = np.zeros((size, size))
    rows = np.arange(size)
    for perm, image in _permutation_actions(m, p):
        np.add.at(S, (rows, image), stat.sign(perm))
    return S / math.factorial(p)


@lru_cache(maxsize=128)
def _embed_cached(stat: Statistics, m: int, p: int) -> np.ndarray:
    size = _check_cap(m, p)
    basis = sector_basis(stat, m, p)
    E = np.zeros((size, len(basis)))
    for col, occ in enumerate(basis.occupations):
        labels = basis.labels(col)
        if stat.is_fermionic:
            # wedge in increasing label order: (1/sqrt(p!)) Σ_σ sgn(σ) e_{j_σ}
            amp = 1.0 / math.sqrt(math.factorial(p))
            for perm in itertools.permutations(range(p)):
                E[_tensor_index([labels[k] for k in perm], m), col] += permutation_sign(perm) * amp
        else:
            orderings = set(itertools.permutations(labels))
            amp = 1.0 / math.sqrt(float(basis.norm_squared[col]))
            for lab in orderings:
                E[_tensor_index(lab, m), col] = amp
    E.setflags(write=False)
    return E


def embed_restrict(stat, m: int, p: int):
    """Return (embed, restrict): occupation basis -> tensor basis isometry and its adjoint.

    restrict @ embed = Id on the sector; embed @ restrict = symmetrizer.
    """
    stat = Statistics.parse(stat)
    E = _embed_cached(stat, m, p)
    return E, E.T


def odot(*ops) -> np.ndarray:
    """Symmetrized tensor product (1/p!) Σ_σ b_σ(1) ⊗ ... ⊗ b_σ(p)."""
    if len(ops) == 1 and not isinstance(ops[0], np.ndarray):
        ops = tuple(ops[0])
    p = len(ops)
    if p == 0:
        return np.ones((1, 1))
    total = None
    for perm in itertools.permutations(range(p)):
        term = ops[perm[0]]
        for k in perm[1:]:
            term = np.kron(term, ops[k])
        total = term if total is None else total + term
    return total / math.factorial(p)
