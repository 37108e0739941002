"""Wick quantization of p -> q particle kernels and its composition calculus.

A kernel b̃ maps the p-particle sector to the q-particle sector and is stored
in occupation coordinates.  Its Wick quantization acts on sector n + p as

    ε^{(p+q)/2} sqrt((n+p)! (n+q)!)/n!  S^{n+q} (b̃ ⊗ Id) S^{n+p,*}.

The main path realizes this as sqrt(p! q!) Σ b̃[μ,ν] A*_μ A_ν with products of
scaled ladder operators; the tensor path evaluates the formula literally and
serves as an oracle.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .fock_core import ResourceError, Statistics, embed_restrict, sector_basis, sector_dimension, tensor_cap
from .operators import FockOperator, TruncatedFock, dGamma

__all__ = [
    "WickKernel",
    "wick_quantize",
    "wick_quantize_tensor",
    "contract",
    "compose_wick",
    "poisson_bracket_k",
    "dGamma_power_expansion",
    "partition_coefficients",
    "bell",
    "stirling2",
    "CombinatoricsTable",
    "weighted_norm",
]


@dataclass(frozen=True)
class WickKernel:
    """Operator from the p-particle sector to the q-particle sector (occupation coordinates)."""

    p: int
    q: int
    matrix: np.ndarray
    stat: Statistics
    m: int

    def __post_init__(self):
        object.__setattr__(self, "stat", Statistics.parse(self.stat))
        M = np.asarray(self.matrix, dtype=complex)
        shape = (sector_dimension(self.stat, self.m, self.q), sector_dimension(self.stat, self.m, self.p))
        if M.shape != shape:
            raise ValueError(f"kernel shape {M.shape} does not match sector dimensions {shape}")
        object.__setattr__(self, "matrix", M)

    @classmethod
    def from_tensor(cls, stat, m: int, p: int, q: int, B) -> "WickKernel":
        """Compress an operator on the ordered tensor basis to the sectors."""
        stat = Statistics.parse(stat)
        E_p, _ = embed_restrict(stat, m, p)
        _, R_q = embed_restrict(stat, m, q)
        return cls(p, q, R_q @ np.asarray(B) @ E_p, stat, m)

    @classmethod
    def identity(cls, stat, m: int, p: int) -> "WickKernel":
        stat = Statistics.parse(stat)
        d = sector_dimension(stat, m, p)
        return cls(p, p, np.eye(d), stat, m)

    @classmethod
    def one_body(cls, stat, A) -> "WickKernel":
        A = np.asarray(A)
        return cls(1, 1, A, stat, A.shape[0])

    @classmethod
    def ket(cls, stat, f) -> "WickKernel":
        """0 -> 1 kernel |f>; its Wick quantization is a*(f)."""
        f = np.asarray(f, dtype=complex).reshape(-1, 1)
        return cls(0, 1, f, stat, f.shape[0])

    @classmethod
    def bra(cls, stat, g) -> "WickKernel":
        """1 -> 0 kernel <g|; its Wick quantization is a(g)."""
        g = np.asarray(g, dtype=complex).reshape(1, -1)
        return cls(1, 0, g.conj(), stat, g.shape[1])

    @classmethod
    def random(cls, rng, stat, m: int, p: int, q: int, hermitian: bool = False) -> "WickKernel":
        stat = Statistics.parse(stat)
        shape = (sector_dimension(stat, m, q), sector_dimension(stat, m, p))
        M = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        if hermitian:
            if p != q:
                raise ValueError("hermitian kernels need p == q")
            M = (M + M.conj().T) / 2
        return cls(p, q, M, stat, m)

    def to_tensor(self) -> np.ndarray:
        E_p, _ = embed_restrict(self.stat, self.m, self.p)
        _, R_q = embed_restrict(self.stat, self.m, self.q)
        return R_q.T @ self.matrix @ E_p.T

    def adjoint(self) -> "WickKernel":
        return WickKernel(self.q, self.p, self.matrix.conj().T, self.stat, self.m)

    def __add__(self, other: "WickKernel") -> "WickKernel":
        _check_same_shape(self, other)
        return WickKernel(self.p, self.q, self.matrix + other.matrix, self.stat, self.m)

    def __sub__(self, other: "WickKernel") -> "WickKernel":
        _check_same_shape(self, other)
        return WickKernel(self.p, self.q, self.matrix - other.matrix, self.stat, self.m)

    def __mul__(self, scalar) -> "WickKernel":
        return WickKernel(self.p, self.q, self.matrix * scalar, self.stat, self.m)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2)) if self.matrix.size else 0.0

    def symbol(self, z) -> complex:
        """Bosonic symbol <z^{⊗q}, b̃ z^{⊗p}>."""
        if self.stat.is_fermionic:
            raise ValueError("the polynomial symbol is defined for bosonic kernels")
        return complex(np.vdot(symmetric_power(z, self.q), self.matrix @ symmetric_power(z, self.p)))


def _check_same_shape(a: WickKernel, b: WickKernel):
    if (a.p, a.q, a.m, a.stat) != (b.p, b.q, b.m, b.stat):
        raise ValueError("kernels live on different sectors")


def symmetric_power(z, p: int) -> np.ndarray:
    """Occupation coordinates of z^{⊗p} (bosons): sqrt(p!/μ!) z^μ."""
    z = np.asarray(z, dtype=complex)
    basis = sector_basis(Statistics.BOSONIC, len(z), p)
    out = np.empty(len(basis), dtype=complex)
    for i, occ in enumerate(basis.occupations):
        val = math.sqrt(float(basis.norm_squared[i]))
        for zj, k in zip(z, occ):
            val = val * zj**k
        out[i] = val
    return out


@lru_cache(maxsize=32)
def _lowering_products(fock: TruncatedFock, p: int) -> tuple:
    """Sparse A_ν over the occupation basis of sector p.

    Bosons: a^ν / sqrt(ν!).  Fermions: a_{j_p} ... a_{j_1} for labels j_1 < ... < j_p.
    """
    basis = sector_basis(fock.stat, fock.m, p)
    ident = sp.identity(fock.dim, dtype=float, format="csr")
    out = []
    for i, occ in enumerate(basis.occupations):
        op = ident
        norm = 1.0
        for j, k in enumerate(occ):
            for _ in range(k):
                op = fock._lowerings[j] @ op
            norm *= math.factorial(k)
        out.append((op / math.sqrt(norm)).tocsr())
    return tuple(out)


def wick_quantize(kernel: WickKernel, fock: TruncatedFock) -> FockOperator:
    """Wick quantization sqrt(p! q!) Σ_{μ,ν} b̃[μ,ν] A*_μ A_ν on the truncated space."""
    if kernel.stat is not fock.stat or kernel.m != fock.m:
        raise ValueError("kernel and Fock space disagree on statistics or dimension")
    p, q = kernel.p, kernel.q
    if p > fock.N_max or q > fock.N_max:
        raise ValueError("kernel particle numbers exceed the cutoff")
    A_in = _lowering_products(fock, p)
    A_out = _lowering_products(fock, q)
    pref = math.sqrt(math.factorial(p) * math.factorial(q))
    M = sp.csr_array((fock.dim, fock.dim), dtype=complex)
    B = kernel.matrix
    for mu in range(B.shape[0]):
        row = B[mu]
        nz = np.nonzero(row)[0]
        if nz.size == 0:
            continue
        inner = sp.csr_array((fock.dim, fock.dim), dtype=complex)
        for nu in nz:
            inner = inner + row[nu] * A_in[nu]
        M = M + A_out[mu].T @ inner
    return FockOperator((pref * M).tocsr(), fock)


def wick_quantize_tensor(kernel: WickKernel, fock: TruncatedFock) -> FockOperator:
    """Oracle: evaluate the sector formula with explicit (anti)symmetrizers."""
    p, q = kernel.p, kernel.q
    m = fock.m
    B = kernel.to_tensor()
    eps = fock.eps
    M = np.zeros((fock.dim, fock.dim), dtype=complex)
    for n in range(0, fock.N_max + 1):
        n_in, n_out = n + p, n + q
        if n_in > fock.N_max or n_out > fock.N_max:
            break
        if fock.sector_dim(n_in) == 0 or fock.sector_dim(n_out) == 0:
            continue
        if m ** max(n_in, n_out) > tensor_cap():
            raise ResourceError("tensor oracle exceeds the ordered-basis cap")
        E_in, _ = embed_restrict(fock.stat, m, n_in)
        _, R_out = embed_restrict(fock.stat, m, n_out)
        lifted = np.kron(B, np.eye(m**n))
        coef = eps ** ((p + q) / 2) * math.sqrt(math.factorial(n_in) * math.factorial(n_out)) / math.factorial(n)
        M[fock.sector_slice(n_out), fock.sector_slice(n_in)] = coef * (R_out @ lifted @ E_in)
    return FockOperator(M, fock)


def contract(b1: WickKernel, b2: WickKernel, k: int) -> WickKernel:
    """k-fold contraction b̃1 ♯^k b̃2, a (p1+p2-k) -> (q1+q2-k) kernel."""
    if b1.stat is not b2.stat or b1.m != b2.m:
        raise ValueError("kernels disagree on statistics or dimension")
    if not 0 <= k <= min(b1.p, b2.q):
        raise ValueError(f"contraction order k={k} outside [0, min(p1, q2)]")
    m = b1.m
    p_out = b1.p + b2.p - k
    q_out = b1.q + b2.q - k
    if m ** max(p_out, q_out) > tensor_cap():
        raise ResourceError("contraction lift exceeds the ordered-basis cap")
    coef = (math.factorial(b1.p) // math.factorial(b1.p - k)) * (math.factorial(b2.q) // math.factorial(b2.q - k))
    E_in, _ = embed_restrict(b1.stat, m, p_out)
    _, R_out = embed_restrict(b1.stat, m, q_out)
    d_in = E_in.shape[1]
    # (Id^{p1-k} ⊗ b2) acting on the trailing p2 slots of the embedded input
    Y = E_in.reshape(m ** (b1.p - k), m**b2.p, d_in)
    Y = np.einsum("ab,ibk->iak", b2.to_tensor(), Y)
    # (b1 ⊗ Id^{q2-k}) acting on the leading p1 slots
    Y = Y.reshape(m**b1.p, m ** (b2.q - k), d_in)
    Y = np.einsum("ab,bjk->ajk", b1.to_tensor(), Y)
    Y = Y.reshape(m**q_out, d_in)
    return WickKernel(p_out, q_out, float(coef) * (R_out @ Y), b1.stat, m)


def _comparable_sectors(fock: TruncatedFock, b1: WickKernel, b2: WickKernel):
    """Input sectors n on which every intermediate and output sector exists."""
    out = []
    for n in range(fock.N_max + 1):
        if n < b2.p:
            continue
        mid = n - b2.p + b2.q
        if mid > fock.N_max or mid < b1.p:
            continue
        end = mid - b1.p + b1.q
        if end > fock.N_max:
            continue
        if fock.sector_dim(n) == 0 or fock.sector_dim(end) == 0:
            continue
        out.append((n, end))
    return out


def compose_wick(b1: WickKernel, b2: WickKernel, fock: TruncatedFock) -> dict:
    """Compare b̃1^Wick b̃2^Wick with Σ_k (±1)^{(p1-k)(p2+q2)} ε^k/k! (b̃1 ♯^k b̃2)^Wick."""
    lhs = wick_quantize(b1, fock) @ wick_quantize(b2, fock)
    rhs = None
    sign = fock.stat.pm
    for k in range(0, min(b1.p, b2.q) + 1):
        term_kernel = contract(b1, b2, k)
        if term_kernel.p > fock.N_max or term_kernel.q > fock.N_max:
            continue
        w = (sign ** ((b1.p - k) * (b2.p + b2.q))) * fock.eps**k / math.factorial(k)
        term = wick_quantize(term_kernel, fock) * w
        rhs = term if rhs is None else rhs + term
    sectors = _comparable_sectors(fock, b1, b2)
    if not sectors:
        raise ValueError("cutoff too small to compare any sector")
    diff = 0.0
    for n_in, n_out in sectors:
        L = lhs.block(n_out, n_in)
        R = rhs.block(n_out, n_in) if rhs is not None else np.zeros_like(L)
        if L.size:
            diff = max(diff, float(np.max(np.abs(L - R))))
    return {"lhs": lhs, "rhs": rhs, "max_diff": diff, "sectors": sectors}


def poisson_bracket_k(b1: WickKernel, b2: WickKernel, k: int) -> WickKernel:
    """k-th bracket kernel b̃1 ♯^k b̃2 - b̃2 ♯^k b̃1 (bosons).

    With these kernels [b̃1^Wick, b̃2^Wick] = Σ_{k>=1} ε^k/k! ({b̃1,b̃2}^(k))^Wick.
    """
    if b1.stat.is_fermionic or b2.stat.is_fermionic:
        raise ValueError("Poisson brackets are defined for bosonic kernels")
    p_out = b1.p + b2.p - k
    q_out = b1.q + b2.q - k
    if p_out < 0 or q_out < 0 or k < 0:
        raise ValueError("contraction order out of range")
    zero = WickKernel(
        p_out, q_out,
        np.zeros((sector_dimension(b1.stat, b1.m, q_out), sector_dimension(b1.stat, b1.m, p_out))),
        b1.stat, b1.m,
    )
    first = contract(b1, b2, k) if k <= min(b1.p, b2.q) else zero
    second = contract(b2, b1, k) if k <= min(b2.p, b1.q) else zero
    return first - second


# ---------------------------------------------------------------- combinatorics

COMBINATORICS_CAP = 25


@lru_cache(maxsize=None)
def stirling2(p: int, k: int) -> int:
    """Stirling numbers of the second kind by the standard recurrence."""
    if p < 0 or k < 0:
        raise ValueError("negative argument")
    if p > COMBINATORICS_CAP:
        raise OverflowError(f"p={p} exceeds the combinatorics cap {COMBINATORICS_CAP}")
    if p == 0 and k == 0:
        return 1
    if p == 0 or k == 0:
        return 0
    return k * stirling2(p - 1, k) + stirling2(p - 1, k - 1)


def bell(p: int) -> int:
    return sum(stirling2(p, k) for k in range(p + 1))


@dataclass(frozen=True)
class CombinatoricsTable:
    cap: int = COMBINATORICS_CAP

    @property
    def bell_numbers(self) -> list:
        return [bell(p) for p in range(self.cap + 1)]

    def stirling_row(self, p: int) -> list:
        return [stirling2(p, k) for k in range(p + 1)]


@lru_cache(maxsize=None)
def partition_coefficients(p: int) -> dict:
    """Coefficients of dΓ(b)^p = Σ ε^{p-k} C_{j_1..j_k} (⊙ b^{j_i})^Wick.

    Keys are sorted block-size tuples (j_1 >= ... >= j_k).  Built by the
    recursion dΓ(b)·(...)^Wick: either a new block of size one or one existing
    block grows by one.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    table = Counter({(1,): 1})
    for _ in range(p - 1):
        nxt = Counter()
        for blocks, c in table.items():
            nxt[tuple(sorted(blocks + (1,), reverse=True))] += c
            for i in range(len(blocks)):
                grown = list(blocks)
                grown[i] += 1
                nxt[tuple(sorted(grown, reverse=True))] += c
        table = nxt
    return dict(table)


def _power_kernel(b: np.ndarray, blocks, stat) -> WickKernel:
    m = b.shape[0]
    factors = [np.linalg.matrix_power(b, j) for j in blocks]
    T = factors[0]
    for F in factors[1:]:
        T = np.kron(T, F)
    k = len(blocks)
    return WickKernel.from_tensor(stat, m, k, k, T)


def weighted_norm(op: FockOperator, m_left: float, m_right: float) -> float:
    """‖(1+N)^{-m/2} op (1+N)^{-m'/2}‖ for number-conserving op (sector by sector)."""
    fock = op.fock
    worst = 0.0
    for n in range(fock.N_max + 1):
        B = op.block(n, n)
        if B.size == 0:
            continue
        w = (1 + fock.eps * n) ** (-(m_left + m_right) / 2)
        worst = max(worst, w * float(np.linalg.norm(B, 2)))
    return worst


def dGamma_power_expansion(b, p: int, fock: TruncatedFock, weights=None) -> dict:
    """Remainder dΓ(b)^p - (b^{⊗p})^Wick, computed directly and through the partition sum.

    Returns the remainder operator, the difference between the two routes, the
    weighted norm and the bound ε B_p ‖b‖^p.
    """
    b = np.asarray(b, dtype=complex)
    stat = fock.stat
    if p < 1:
        raise ValueError("p must be >= 1")
    dG = dGamma(fock, b)
    power = FockOperator(sp.identity(fock.dim, dtype=complex, format="csr"), fock)
    for _ in range(p):
        power = dG @ power
    top_kernel = _power_kernel(b, (1,) * p, stat)
    direct = power - wick_quantize(top_kernel, fock) if p <= fock.N_max else power

    summed = FockOperator(sp.csr_array((fock.dim, fock.dim), dtype=complex), fock)
    for blocks, c in partition_coefficients(p).items():
        k = len(blocks)
        if k == p or k > fock.N_max:
            continue
        kern = _power_kernel(b, blocks, stat)
        summed = summed + wick_quantize(kern, fock) * (c * fock.eps ** (p - k))
    route_diff = float(np.max(np.abs((direct - summed).toarray()))) if fock.dim else 0.0
    if weights is None:
        weights = (p - 1, p - 1)
    wnorm = weighted_norm(direct, *weights)
    bound = fock.eps * bell(p) * float(np.linalg.norm(b, 2)) ** p
    return {
        "remainder": direct,
        "route_difference": route_diff,
        "weighted_norm": wnorm,
        "bound": bound,
        "holds": wnorm <= bound + 1e-10,
    }
