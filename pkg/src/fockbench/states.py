"""States on the truncated Fock space, reduced density matrices and quasi-free formulas."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fock_core import Statistics, embed_restrict, sector_basis, sector_dimension
from .operators import FockOperator, TruncatedFock, annihilation, creation, gamma_blocks
from .wick import WickKernel, _lowering_products, symmetric_power, wick_quantize

__all__ = [
    "FockState",
    "ReducedDensityMatrix",
    "GibbsSpec",
    "coherent_state",
    "coherent_amplitudes",
    "coherent_cutoff",
    "gibbs_state",
    "bosonic_gibbs_cutoff",
    "quasifree_trace",
    "quasifree_trace_sector_sum",
    "reduced_density",
    "reduced_density_duality",
    "quasifree_reduced_density",
    "normalized_reduced",
    "falling_number_moment",
    "exponential_moment",
    "generating_Phi",
    "generating_Psi",
    "gibbs_log_Phi",
    "taylor_coefficients",
    "fermionic_wick_bound",
    "pi_moments",
    "state_to_json",
    "rdm_to_json",
]


class FockState:
    """Density matrix on a truncated Fock space.

    Stored as one of: an ensemble Σ w_k |v_k><v_k| (``vectors``), a
    block-diagonal list of sector blocks (``blocks``), or a dense matrix.
    """

    def __init__(self, fock: TruncatedFock, *, vectors=None, weights=None, blocks=None, rho=None,
                 quasi_free=None, moment_c=None, meta=None):
        given = [x is not None for x in (vectors, blocks, rho)]
        if sum(given) != 1:
            raise ValueError("give exactly one of vectors, blocks, rho")
        self.fock = fock
        self.quasi_free = quasi_free
        self.moment_c = moment_c
        self.meta = dict(meta or {})
        if vectors is not None:
            V = np.asarray(vectors, dtype=complex)
            if V.ndim == 1:
                V = V[:, None]
            w = np.ones(V.shape[1]) if weights is None else np.asarray(weights, dtype=float)
            self.kind = "ensemble"
            self.vectors, self.weights = V, w
        elif blocks is not None:
            if len(blocks) != fock.N_max + 1:
                raise ValueError("need one block per sector")
            self.kind = "blocks"
            self.blocks = [np.asarray(b, dtype=complex) for b in blocks]
        else:
            self.kind = "dense"
            self.rho = np.asarray(rho, dtype=complex)
        self._factors = None

    @property
    def eps(self) -> float:
        return self.fock.eps

    @property
    def stat(self) -> Statistics:
        return self.fock.stat

    @classmethod
    def pure(cls, fock, psi, **kw):
        return cls(fock, vectors=np.asarray(psi)[:, None], weights=[1.0], **kw)

    def density(self) -> np.ndarray:
        if self.kind == "dense":
            return self.rho
        if self.kind == "blocks":
            return sla.block_diag(*self.blocks)
        V = self.vectors
        return (V * self.weights) @ V.conj().T

    def factors(self):
        """List of (slice or None, L) with ρ = Σ L L^† on the given rows/columns."""
        if self._factors is not None:
            return self._factors
        if self.kind == "ensemble":
            out = [(None, self.vectors * np.sqrt(np.clip(self.weights, 0, None)))]
        elif self.kind == "blocks":
            out = []
            for n, B in enumerate(self.blocks):
                if B.size == 0:
                    continue
                w, U = np.linalg.eigh((B + B.conj().T) / 2)
                keep = w > 1e-300
                if np.any(keep):
                    out.append((self.fock.sector_slice(n), U[:, keep] * np.sqrt(w[keep])))
        else:
            w, U = np.linalg.eigh((self.rho + self.rho.conj().T) / 2)
            keep = w > 1e-300
            out = [(None, U[:, keep] * np.sqrt(w[keep]))]
        self._factors = out
        return out

    def expect(self, op) -> complex:
        """Tr[ϱ op]."""
        M = op.matrix if isinstance(op, FockOperator) else op
        if self.kind == "ensemble":
            V = self.vectors
            return complex(np.sum(self.weights * np.einsum("ik,ik->k", V.conj(), M @ V)))
        if self.kind == "blocks":
            total = 0j
            for n, B in enumerate(self.blocks):
                s = self.fock.sector_slice(n)
                Mn = M[s, :][:, s]
                Mn = Mn.toarray() if sp.issparse(Mn) else np.asarray(Mn)
                total += np.sum(Mn * B.T)
            return complex(total)
        R = M @ self.rho
        return complex(np.trace(R.toarray() if sp.issparse(R) else R))

    def sector_weights(self) -> np.ndarray:
        """Tr[ϱ P_n] for each sector."""
        out = np.zeros(self.fock.N_max + 1)
        if self.kind == "blocks":
            for n, B in enumerate(self.blocks):
                out[n] = float(np.real(np.trace(B)))
            return out
        if self.kind == "ensemble":
            diag = np.sum(self.weights * np.abs(self.vectors) ** 2, axis=1)
        else:
            diag = np.real(np.diag(self.rho))
        np.add.at(out, self.fock.particle_numbers, diag)
        return out

    @property
    def trace(self) -> float:
        return float(np.sum(self.sector_weights()))

    @property
    def leakage(self) -> float:
        return float(self.sector_weights()[-1])

    def min_eigenvalue(self) -> float:
        if self.kind == "ensemble":
            return 0.0 if np.all(self.weights >= 0) else float(np.min(self.weights))
        if self.kind == "blocks":
            return min(float(np.linalg.eigvalsh((B + B.conj().T) / 2).min()) for B in self.blocks if B.size)
        return float(np.linalg.eigvalsh((self.rho + self.rho.conj().T) / 2).min())

    def check(self, leakage_tol: float | None = None) -> dict:
        report = {
            "min_eigenvalue": self.min_eigenvalue(),
            "trace_error": abs(self.trace - 1.0),
            "leakage": self.leakage,
        }
        report["ok"] = report["min_eigenvalue"] >= -1e-12 and report["trace_error"] <= 1e-12
        if leakage_tol is not None:
            report["ok"] = report["ok"] and report["leakage"] <= leakage_tol
        return report


@dataclass
class ReducedDensityMatrix:
    p: int
    matrix: np.ndarray
    stat: Statistics
    m: int
    trace: float = field(init=False)
    normalized: bool = False

    def __post_init__(self):
        self.trace = float(np.real(np.trace(self.matrix)))

    def pair(self, kernel) -> complex:
        """Tr[γ b̃] for a p -> p kernel."""
        K = kernel.matrix if isinstance(kernel, WickKernel) else np.asarray(kernel)
        return complex(np.sum(self.matrix * K.T))

    def is_psd(self, tol: float = 1e-10) -> bool:
        H = self.matrix
        if np.max(np.abs(H - H.conj().T), initial=0.0) > tol * max(1.0, np.abs(H).max(initial=0.0)):
            return False
        return float(np.linalg.eigvalsh((H + H.conj().T) / 2).min(initial=0.0)) >= -tol


@dataclass(frozen=True)
class GibbsSpec:
    """Quasi-free Gibbs data: C = exp(-β (H - μ))."""

    H: np.ndarray
    beta: float
    mu: float
    stat: Statistics

    def __post_init__(self):
        object.__setattr__(self, "stat", Statistics.parse(self.stat))
        H = np.asarray(self.H, dtype=complex)
        if np.max(np.abs(H - H.conj().T), initial=0.0) > 1e-12 * max(1.0, np.abs(H).max()):
            raise ValueError("H must be Hermitian")
        object.__setattr__(self, "H", H)
        if not self.stat.is_fermionic and np.linalg.norm(self.C, 2) >= 1:
            raise ValueError("bosonic Gibbs state needs ||C|| < 1")

    @property
    def C(self) -> np.ndarray:
        w, U = np.linalg.eigh(self.H)
        return (U * np.exp(-self.beta * (w - self.mu))) @ U.conj().T


# ------------------------------------------------------------------ coherent


def coherent_cutoff(z, eps: float) -> int:
    """Smallest N_max with ε N_max >= |z|² + 8 sqrt(|z|² ε)."""
    z2 = float(np.vdot(z, z).real)
    return int(math.ceil((z2 + 8 * math.sqrt(z2 * eps)) / eps - 1e-12))


def coherent_amplitudes(z, fock: TruncatedFock) -> np.ndarray:
    """Series coefficients e^{-|z|²/2ε} Π (z_j/√ε)^{μ_j}/sqrt(μ_j!)."""
    z = np.asarray(z, dtype=complex)
    eps = fock.eps
    out = np.zeros(fock.dim, dtype=complex)
    logpref = -float(np.vdot(z, z).real) / (2 * eps)
    w = z / math.sqrt(eps)
    for n in range(fock.N_max + 1):
        occ = fock.sectors[n].array
        s = fock.sector_slice(n)
        lg = np.array([sum(math.lgamma(k + 1) for k in row) for row in occ]) / 2
        val = np.ones(len(occ), dtype=complex)
        for j in range(fock.m):
            val = val * w[j] ** occ[:, j]
        out[s] = val * np.exp(logpref - lg)
    return out


def coherent_state(z, fock: TruncatedFock, check_guard: bool = True, cross_check: bool | None = None) -> FockState:
    """Coherent state E_z = exp((a*(z) - a(z))/ε) Ω, built from its series.

    The displacement exponential is evaluated as a cross-check when the space
    is small enough; the discrepancy is stored in ``meta['construction_gap']``.
    """
    if fock.stat.is_fermionic:
        raise ValueError("coherent states are bosonic")
    z = np.asarray(z, dtype=complex)
    need = coherent_cutoff(z, fock.eps)
    if check_guard and fock.N_max < need:
        raise ValueError(f"N_max={fock.N_max} violates the Poisson-tail guard; need N_max >= {need}")
    psi = coherent_amplitudes(z, fock)
    meta = {"z": z.tolist() if z.size < 16 else None, "required_N_max": need}
    if cross_check is None:
        cross_check = fock.dim <= 20000
    if cross_check:
        gen = (creation(fock, z).matrix - annihilation(fock, z).matrix) / fock.eps
        disp = spla.expm_multiply(gen.tocsc(), fock.vacuum())
        safe = fock.particle_numbers <= max(0, need - 1)
        meta["construction_gap"] = float(np.max(np.abs((disp - psi)[safe]), initial=0.0))
    state = FockState.pure(fock, psi, meta=meta)
    return state


# ------------------------------------------------------------------ Gibbs


def bosonic_gibbs_cutoff(C, tol: float = 1e-10, n_cap: int = 100000) -> int:
    """N_max such that Σ_{n>N_max} dim_n ‖C‖^n < tol."""
    c = float(np.linalg.norm(C, 2))
    m = np.asarray(C).shape[0]
    if c >= 1:
        raise ValueError("bosonic cutoff needs ||C|| < 1")
    if c == 0:
        return 0
    # tail of Σ binom(n+m-1, m-1) c^n, evaluated in log space
    terms = []
    for n in range(n_cap):
        terms.append(math.exp(math.lgamma(n + m) - math.lgamma(n + 1) - math.lgamma(m) + n * math.log(c)))
        if n > m and terms[-1] < tol * 1e-3 and terms[-1] < terms[-2]:
            break
    tail = np.cumsum(terms[::-1])[::-1]
    for N in range(len(terms) - 1):
        if tail[N + 1] < tol:
            return N
    raise ValueError("cutoff search failed")


def gibbs_state(spec: GibbsSpec, fock: TruncatedFock) -> FockState:
    """Γ(C)/Tr Γ(C) restricted to the truncated space (block-diagonal)."""
    if spec.stat is not fock.stat:
        raise ValueError("statistics mismatch")
    C = spec.C
    blocks = gamma_blocks(fock, C)
    Z = float(sum(np.real(np.trace(B)) for B in blocks))
    blocks = [B / Z for B in blocks]
    moment_c = None
    if not fock.stat.is_fermionic:
        moment_c = -math.log(float(np.linalg.norm(C, 2))) / (2 * fock.eps)
    return FockState(fock, blocks=blocks, quasi_free=C, moment_c=moment_c, meta={"beta": spec.beta, "mu": spec.mu})


def quasifree_trace(C, stat) -> complex:
    """Tr Γ(C) = exp(∓ Tr log(1 ∓ C))."""
    stat = Statistics.parse(stat)
    C = np.asarray(C, dtype=complex)
    eye = np.eye(C.shape[0])
    if stat.is_fermionic:
        sign, logdet = np.linalg.slogdet(eye + C)
        return complex(sign * np.exp(logdet))
    if np.linalg.norm(C, 2) >= 1:
        raise ValueError("bosonic trace formula needs ||C|| < 1")
    sign, logdet = np.linalg.slogdet(eye - C)
    return complex(np.exp(-logdet) / sign)


def quasifree_trace_sector_sum(C, stat, n_max: int | None = None, tol: float = 1e-13) -> dict:
    """Σ_n Tr[S^n C^{⊗n} S^n] from power sums Tr C^k (Newton recursion).

    Fermionic sectors give elementary symmetric functions, bosonic sectors the
    complete homogeneous ones.  Returns the sum and the bosonic tail bound.
    """
    stat = Statistics.parse(stat)
    C = np.asarray(C, dtype=complex)
    m = C.shape[0]
    if n_max is None:
        n_max = m if stat.is_fermionic else bosonic_gibbs_cutoff(C, tol)
    powers = [np.eye(m, dtype=complex)]
    traces = [complex(m)]
    for _ in range(n_max):
        powers.append(powers[-1] @ C)
        traces.append(complex(np.trace(powers[-1])))
    e = [1.0 + 0j]
    for n in range(1, n_max + 1):
        acc = 0j
        for k in range(1, n + 1):
            coef = (-1) ** (k - 1) if stat.is_fermionic else 1
            acc += coef * e[n - k] * traces[k]
        e.append(acc / n)
    tail = 0.0
    if not stat.is_fermionic:
        c = float(np.linalg.norm(C, 2))
        tail = sum(math.comb(n + m - 1, m - 1) * c**n for n in range(n_max + 1, n_max + 2000))
    return {"value": complex(sum(e)), "sectors": e, "n_max": n_max, "tail_bound": tail}


# ------------------------------------------------------------------ reduced densities


def falling_number_moment(state: FockState, p: int) -> float:
    """Tr[ϱ N(N-ε)...(N-(p-1)ε)]."""
    eps = state.eps
    weights = state.sector_weights()
    n = np.arange(len(weights))
    fall = np.ones_like(n, dtype=float)
    for k in range(p):
        fall = fall * eps * (n - k)
    return float(np.sum(weights * fall))


def reduced_density(state: FockState, p: int) -> ReducedDensityMatrix:
    """γ^(p)[J, I] = Tr[ϱ (|e_I><e_J|)^Wick] = p! Tr[A_J ϱ A_I^†]."""
    fock = state.fock
    if p > fock.N_max:
        raise ValueError("p exceeds the cutoff")
    A = _lowering_products(fock, p)
    D = len(A)
    gamma = np.zeros((D, D), dtype=complex)
    for sl, L in state.factors():
        if sl is None:
            Z = np.stack([(Aj @ L).ravel() for Aj in A])
        else:
            Z = np.stack([(Aj[:, sl] @ L).ravel() for Aj in A])
        gamma += Z @ Z.conj().T
    gamma *= math.factorial(p)
    return ReducedDensityMatrix(p, gamma, fock.stat, fock.m)


def reduced_density_duality(state: FockState, p: int) -> ReducedDensityMatrix:
    """Oracle: one Wick quantization per kernel basis element."""
    fock = state.fock
    D = sector_dimension(fock.stat, fock.m, p)
    gamma = np.zeros((D, D), dtype=complex)
    for I in range(D):
        for J in range(D):
            K = np.zeros((D, D))
            K[I, J] = 1.0
            gamma[J, I] = state.expect(wick_quantize(WickKernel(p, p, K, fock.stat, fock.m), fock))
    return ReducedDensityMatrix(p, gamma, fock.stat, fock.m)


def quasifree_reduced_density(C, stat, eps: float, p: int) -> ReducedDensityMatrix:
    """Untruncated quasi-free closed form γ^(p) = p! S (γ^(1))^{⊗p} S, γ^(1) = εC(1 ∓ C)^{-1}."""
    stat = Statistics.parse(stat)
    C = np.asarray(C, dtype=complex)
    m = C.shape[0]
    eye = np.eye(m)
    g1 = eps * (C @ np.linalg.inv(eye + C) if stat.is_fermionic else C @ np.linalg.inv(eye - C))
    if p == 1:
        return ReducedDensityMatrix(1, g1, stat, m)
    E, R = embed_restrict(stat, m, p)
    T = g1
    for _ in range(p - 1):
        T = np.kron(T, g1)
    return ReducedDensityMatrix(p, math.factorial(p) * (R @ T @ E), stat, m)


def normalized_reduced(state: FockState, p: int) -> ReducedDensityMatrix:
    norm = falling_number_moment(state, p)
    if norm <= 1e-14:
        raise ValueError(f"normalizer Tr[ϱ N(N-ε)...] = {norm:g} vanishes for p={p}")
    g = reduced_density(state, p)
    out = ReducedDensityMatrix(p, g.matrix / norm, g.stat, g.m, normalized=True)
    return out


# ------------------------------------------------------------------ generating functions


def exponential_moment(state: FockState, c: float) -> float:
    """Tr[ϱ e^{cN}] with N the scaled number operator."""
    weights = state.sector_weights()
    n = np.arange(len(weights))
    return float(np.sum(weights * np.exp(c * state.eps * n)))


def _gamma_expectation(state: FockState, B) -> complex:
    fock = state.fock
    blocks = gamma_blocks(fock, B)
    if state.kind == "blocks":
        return complex(sum(np.sum(G * R.T) for G, R in zip(blocks, state.blocks)))
    return state.expect(sp.block_diag(blocks, format="csr"))


def generating_Phi(state: FockState, A, s: complex, moment_c: float | None = None) -> complex:
    """Φ(s) = Tr[ϱ e^{s dΓ(A)}] = Tr[ϱ Γ(e^{εsA})]."""
    A = np.asarray(A, dtype=complex)
    c = moment_c if moment_c is not None else state.moment_c
    if c is not None and abs(s) * np.linalg.norm(A, 2) >= c:
        raise ValueError(f"|s|·||A|| = {abs(s) * np.linalg.norm(A, 2):g} outside the radius {c:g}")
    return _gamma_expectation(state, sla.expm(state.eps * s * A))


def generating_Psi(state: FockState, K, s: complex, moment_c: float | None = None) -> complex:
    """Ψ(s) = Tr[ϱ e^{s dΓ(K)}] for a compact (finite-rank) K."""
    return generating_Phi(state, K, s, moment_c)


def gibbs_log_Phi(C, A, s: complex, eps: float, stat) -> complex:
    """log Tr[Γ(C)Γ(e^{εsA})]/Tr Γ(C) by determinants."""
    stat = Statistics.parse(stat)
    C = np.asarray(C, dtype=complex)
    B = sla.expm(eps * s * np.asarray(A, dtype=complex))
    eye = np.eye(C.shape[0])
    if stat.is_fermionic:
        return complex(np.log(np.linalg.det(eye + C @ B)) - np.log(np.linalg.det(eye + C)))
    return complex(-np.log(np.linalg.det(eye - C @ B)) + np.log(np.linalg.det(eye - C)))


def taylor_coefficients(fun, radius: float, n_terms: int, n_points: int = 64) -> np.ndarray:
    """Taylor coefficients of a holomorphic function by the Cauchy integral on a circle."""
    theta = 2 * np.pi * np.arange(n_points) / n_points
    vals = np.array([fun(radius * np.exp(1j * t)) for t in theta])
    coef = np.fft.fft(vals) / n_points
    return coef[:n_terms] / radius ** np.arange(n_terms)


# ------------------------------------------------------------------ diagnostics


def fermionic_wick_bound(state: FockState, K: WickKernel, p: int | None = None) -> dict:
    """Compare Tr[ϱ K^Wick] with ε^p Tr K for a PSD kernel K."""
    if not state.stat.is_fermionic:
        raise ValueError("the vanishing bound concerns fermions")
    p = K.p if p is None else p
    if K.p != p or K.q != p:
        raise ValueError("K must be a p -> p kernel")
    if np.linalg.eigvalsh((K.matrix + K.matrix.conj().T) / 2).min() < -1e-12:
        raise ValueError("K must be positive semidefinite")
    gamma = reduced_density(state, p)
    value = float(np.real(gamma.pair(K)))
    bound = state.eps**p * float(np.real(np.trace(K.matrix)))
    return {"value": value, "bound": bound, "holds": value <= bound + 1e-12, "p": p, "eps": state.eps}


def pi_moments(family, alpha_max: int, reference) -> list:
    """Table of Tr[ϱ_ε N^α] against reference moments ∫|z|^{2α} dμ.

    ``family`` is an iterable of states; ``reference(alpha)`` returns the
    predicted limit.
    """
    rows = []
    for state in family:
        weights = state.sector_weights()
        n = np.arange(len(weights)) * state.eps
        for alpha in range(alpha_max + 1):
            value = float(np.sum(weights * n**alpha))
            ref = float(reference(alpha))
            rows.append({"eps": state.eps, "alpha": alpha, "value": value, "reference": ref,
                         "abs_error": abs(value - ref)})
    return rows


def _complex_pairs(M: np.ndarray) -> list:
    M = np.asarray(M, dtype=complex)
    return [[float(x.real), float(x.imag)] for x in M.ravel(order="C")]


def state_to_json(state: FockState) -> str:
    fock = state.fock
    rho = state.density()
    payload = {
        "metadata": {"stat": fock.stat.value, "m": fock.m, "N_max": fock.N_max, "eps": fock.eps,
                     "leakage": state.leakage, "shape": list(rho.shape)},
        "data": _complex_pairs(rho),
    }
    return json.dumps(payload)


def rdm_to_json(gamma: ReducedDensityMatrix, fock: TruncatedFock | None = None, leakage: float | None = None) -> str:
    meta = {"stat": gamma.stat.value, "m": gamma.m, "p": gamma.p, "trace": gamma.trace,
            "normalized": gamma.normalized, "shape": list(gamma.matrix.shape)}
    if fock is not None:
        meta.update({"N_max": fock.N_max, "eps": fock.eps})
    if leakage is not None:
        meta["leakage"] = leakage
    return json.dumps({"metadata": meta, "data": _complex_pairs(gamma.matrix)})


def vector_power(z, p: int, stat) -> np.ndarray:
    """Occupation coordinates of z^{⊗p} (bosons)."""
    return symmetric_power(z, p)
