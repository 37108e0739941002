"""Truncated ε-scaled Fock space and basic second-quantized operators.

All operators act on the direct sum of the sectors n = 0..N_max written in
occupation coordinates (see :mod:`fockbench.fock_core`).  The cutoff breaks
the CCR on the top sectors only: any product of ladder operators in which
every annihilator stands to the right of every creator is exact on the
blocks that exist.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .fock_core import OneParticleSpace, Statistics, sector_basis, sector_dimension

__all__ = [
    "TruncatedFock",
    "FockOperator",
    "annihilation",
    "creation",
    "number_operator",
    "dGamma",
    "Gamma",
    "field_and_weyl",
    "exp_dGamma",
]


class TruncatedFock:
    """Sectors n = 0..N_max of the bosonic or fermionic Fock space over C^m."""

    def __init__(self, m: int, stat, N_max: int, eps: float = 1.0):
        self.space = OneParticleSpace(int(m))
        self.stat = Statistics.parse(stat)
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.eps = float(eps)
        N_max = int(N_max)
        if N_max < 0:
            raise ValueError("N_max must be >= 0")
        if self.stat.is_fermionic:
            N_max = min(N_max, self.m)
        self.N_max = N_max
        self.sectors = [sector_basis(self.stat, self.m, n) for n in range(N_max + 1)]
        dims = [len(s) for s in self.sectors]
        self.offsets = np.concatenate([[0], np.cumsum(dims)]).astype(np.int64)
        self.dim = int(self.offsets[-1])

    @property
    def m(self) -> int:
        return self.space.m

    def __repr__(self):
        return (f"TruncatedFock(m={self.m}, stat={self.stat.value}, "
                f"N_max={self.N_max}, eps={self.eps:g}, dim={self.dim})")

    def sector_slice(self, n: int) -> slice:
        return slice(int(self.offsets[n]), int(self.offsets[n + 1]))

    def sector_dim(self, n: int) -> int:
        if n < 0 or n > self.N_max:
            return 0
        return sector_dimension(self.stat, self.m, n)

    def index(self, occupation) -> int:
        occupation = tuple(int(k) for k in occupation)
        n = sum(occupation)
        return int(self.offsets[n]) + self.sectors[n].index[occupation]

    @cached_property
    def particle_numbers(self) -> np.ndarray:
        out = np.empty(self.dim, dtype=np.int64)
        for n in range(self.N_max + 1):
            out[self.sector_slice(n)] = n
        return out

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[0] = 1.0
        return v

    def top_projector_diag(self, width: int = 1) -> np.ndarray:
        """Indicator of the top ``width`` sectors (used for leakage)."""
        return (self.particle_numbers > self.N_max - width).astype(float)

    @cached_property
    def _creators(self):
        """Sparse ε-scaled a*(e_j), j = 0..m-1."""
        eps = self.eps
        out = []
        for j in range(self.m):
            rows, cols, vals = [], [], []
            for n in range(self.N_max):
                src = self.sectors[n]
                dst = self.sectors[n + 1]
                off_src = int(self.offsets[n])
                off_dst = int(self.offsets[n + 1])
                for i, occ in enumerate(src.occupations):
                    k = occ[j]
                    if self.stat.is_fermionic:
                        if k:
                            continue
                        amp = math.sqrt(eps) * (-1) ** sum(occ[:j])
                    else:
                        amp = math.sqrt(eps * (k + 1))
                    new = occ[:j] + (k + 1,) + occ[j + 1:]
                    rows.append(off_dst + dst.index[new])
                    cols.append(off_src + i)
                    vals.append(amp)
            out.append(sp.csr_array((vals, (rows, cols)), shape=(self.dim, self.dim)))
        return out

    def raising(self, j: int):
        return self._creators[j]

    def lowering(self, j: int):
        return self._lowerings[j]

    @cached_property
    def _lowerings(self):
        return [c.T.tocsr() for c in self._creators]


@dataclass
class FockOperator:
    """Matrix on a :class:`TruncatedFock` (sparse or dense)."""

    matrix: object
    fock: TruncatedFock = field(repr=False)

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def toarray(self) -> np.ndarray:
        if self.is_sparse:
            return self.matrix.toarray()
        return np.asarray(self.matrix)

    def block(self, n_out: int, n_in: int) -> np.ndarray:
        A = self.matrix[self.fock.sector_slice(n_out), :][:, self.fock.sector_slice(n_in)]
        return A.toarray() if sp.issparse(A) else np.asarray(A)

    def blocks(self, tol: float = 1e-14) -> set:
        """Set of (n_out, n_in) pairs with a nonzero block."""
        out = set()
        N = self.fock.N_max
        for a in range(N + 1):
            for b in range(N + 1):
                B = self.block(a, b)
                if B.size and np.max(np.abs(B)) > tol:
                    out.add((a, b))
        return out

    def adjoint(self) -> "FockOperator":
        return FockOperator(self.matrix.conj().T, self.fock)

    @property
    def H(self):
        return self.adjoint()

    def apply(self, v):
        return self.matrix @ v

    def _wrap(self, other):
        return other.matrix if isinstance(other, FockOperator) else other

    def __matmul__(self, other):
        if isinstance(other, FockOperator):
            return FockOperator(self.matrix @ other.matrix, self.fock)
        return self.matrix @ other

    def __add__(self, other):
        return FockOperator(self.matrix + self._wrap(other), self.fock)

    def __sub__(self, other):
        return FockOperator(self.matrix - self._wrap(other), self.fock)

    def __neg__(self):
        return FockOperator(-self.matrix, self.fock)

    def __mul__(self, scalar):
        return FockOperator(self.matrix * scalar, self.fock)

    __rmul__ = __mul__


def _as_vector(fock: TruncatedFock, f) -> np.ndarray:
    f = np.asarray(f, dtype=complex).ravel()
    if f.shape != (fock.m,):
        raise ValueError(f"one-particle vector must have length {fock.m}")
    return f


def annihilation(fock: TruncatedFock, f) -> FockOperator:
    """a(f) = Σ_j conj(f_j) a(e_j), antilinear in f."""
    f = _as_vector(fock, f)
    M = sp.csr_array((fock.dim, fock.dim), dtype=complex)
    for j, c in enumerate(f):
        if c != 0:
            M = M + np.conj(c) * fock._lowerings[j]
    return FockOperator(M.tocsr(), fock)


def creation(fock: TruncatedFock, f) -> FockOperator:
    """a*(f) = Σ_j f_j a*(e_j); the exact conjugate transpose of a(f)."""
    return annihilation(fock, f).adjoint()


def number_operator(fock: TruncatedFock) -> FockOperator:
    """Scaled number operator, ε·n on sector n."""
    return FockOperator(sp.diags(fock.eps * fock.particle_numbers.astype(float)).tocsr(), fock)


def dGamma(fock: TruncatedFock, A) -> FockOperator:
    """Second quantization dΓ(A) = Σ_ij A_ij a*(e_i) a(e_j)."""
    A = np.asarray(A)
    if A.shape != (fock.m, fock.m):
        raise ValueError("dGamma needs an m x m matrix")
    M = sp.csr_array((fock.dim, fock.dim), dtype=complex)
    for i in range(fock.m):
        for j in range(fock.m):
            if A[i, j] != 0:
                M = M + A[i, j] * (fock._creators[i] @ fock._lowerings[j])
    return FockOperator(M.tocsr(), fock)


def gamma_blocks(fock: TruncatedFock, C) -> list:
    """Blocks C^{⊗n} on each sector, built sector by sector.

    Uses Γ(C) a*(f) = a*(Cf) Γ(C): a basis vector ν of sector n is
    a*(e_j)|ν - e_j> / sqrt(ε ν_j) (bosons) or a*(e_j)|ν - e_j>/sqrt(ε) with
    j the smallest occupied label (fermions, no sign).
    """
    C = np.asarray(C, dtype=complex)
    m = fock.m
    eps = fock.eps
    blocks = [np.ones((1, 1), dtype=complex)]
    for n in range(1, fock.N_max + 1):
        basis = fock.sectors[n]
        prev = fock.sectors[n - 1]
        rows_n = fock.sector_slice(n)
        cols_prev = fock.sector_slice(n - 1)
        raise_blocks = [fock._creators[i][rows_n, :][:, cols_prev].tocsr() for i in range(m)]
        occ = basis.array
        first = np.argmax(occ > 0, axis=1)
        out = np.zeros((len(basis), len(basis)), dtype=complex)
        G_prev = blocks[n - 1]
        for j in range(m):
            cols = np.nonzero(first == j)[0]
            if cols.size == 0:
                continue
            lowered = occ[cols].copy()
            lowered[:, j] -= 1
            src = G_prev[:, [prev.index[tuple(row)] for row in lowered]]
            acc = np.zeros((len(basis), cols.size), dtype=complex)
            for i in range(m):
                if C[i, j] != 0:
                    acc += C[i, j] * (raise_blocks[i] @ src)
            if fock.stat.is_fermionic:
                norm = np.full(cols.size, math.sqrt(eps))
            else:
                norm = np.sqrt(eps * occ[cols, j])
            out[:, cols] = acc / norm
        blocks.append(out)
    return blocks


def Gamma(fock: TruncatedFock, C) -> FockOperator:
    """Γ(C), equal to C^{⊗n} on sector n."""
    C = np.asarray(C)
    if C.shape != (fock.m, fock.m):
        raise ValueError("Gamma needs an m x m matrix")
    return FockOperator(sp.block_diag(gamma_blocks(fock, C), format="csr"), fock)


def field_and_weyl(fock: TruncatedFock, f):
    """Field Φ(f) = (a(f) + a*(f))/√2 and Weyl operator W(f) = exp(iΦ(f)).

    Returns (Φ, W, leakage) where leakage is the weight of W(f)Ω on the top
    sector, a proxy for the truncation error of W(f).
    """
    if fock.stat.is_fermionic:
        raise ValueError("field and Weyl operators are defined for bosons only")
    a = annihilation(fock, f)
    phi = (a.matrix + a.matrix.conj().T) / math.sqrt(2.0)
    phi = FockOperator(phi.tocsr(), fock)
    W = sla.expm(1j * phi.toarray())
    top = fock.top_projector_diag()
    leakage = float(np.sum(top * np.abs(W[:, 0]) ** 2))
    return phi, FockOperator(W, fock), leakage


def exp_dGamma(fock: TruncatedFock, A, s: complex) -> FockOperator:
    """exp(s dΓ(A)) = Γ(exp(ε s A))."""
    A = np.asarray(A, dtype=complex)
    return Gamma(fock, sla.expm(fock.eps * s * A))
