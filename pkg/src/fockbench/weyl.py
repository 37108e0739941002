"""Discretized semiclassical Weyl quantization on T*R^d (d <= 2).

The grid is periodic with n points per axis on [-L, L).  For a symbol b(x, ξ)
in unscaled coordinates, the Weyl matrix is

    M[j, k] = (1/n) Σ_l exp(i ξ_l (x_j - x_k)) b((x_j + x_k)/2, ξ_l),

with ξ_l on the dual lattice.  Differences are taken on the short arc of the
circle; antipodal pairs average the two possible midpoints, which keeps the
matrix exactly Hermitian for real symbols.  The semiclassical operator
a^{W,h} uses b(x, ξ) = a(h^t x, h^{1-t} ξ).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.integrate as si
import scipy.linalg as sla

from .fock_core import ResourceError

__all__ = [
    "PhaseSpaceGrid",
    "Symbol",
    "SingularWeight",
    "AliasingError",
    "weyl_quantize",
    "trace_pair",
    "WignerPairing",
    "harmonic_levels",
    "harmonic_grid",
    "phase_space_integral",
    "singular_trace",
    "gaussian_symbol",
    "harmonic_symbol",
    "bump",
    "bump_symbol",
]

SYMBOL_CLASSES = ("compact_support", "S1", "quadratic_elliptic")


class AliasingError(ValueError):
    """The grid does not resolve the symbol's position or momentum support."""


@dataclass(frozen=True)
class PhaseSpaceGrid:
    d: int
    L: float
    n_pts: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("only d <= 2 is supported for full-matrix quantization")
        if self.n_pts < 2 or self.n_pts & (self.n_pts - 1):
            raise ValueError("n_pts must be a power of two")
        if self.L <= 0:
            raise ValueError("L must be positive")

    @property
    def dx(self) -> float:
        return 2 * self.L / self.n_pts

    @property
    def x(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.n_pts)

    @property
    def xi(self) -> np.ndarray:
        """Dual lattice in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.n_pts, d=self.dx)

    @property
    def nyquist(self) -> float:
        return np.pi / self.dx

    @property
    def size(self) -> int:
        return self.n_pts**self.d

    def points(self) -> np.ndarray:
        """Position points, shape (size, d), first axis slowest."""
        axes = np.meshgrid(*([self.x] * self.d), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)


@dataclass(frozen=True)
class Symbol:
    """Phase-space function a(X), X = (x, ξ) in R^{2d}.

    ``func`` takes an array of shape (..., 2d).  ``terms`` optionally gives a
    separable decomposition Σ p_i(x) q_i(ξ) (d = 1) used by a fast path.
    ``radius`` is the (effective) support radius used by the aliasing guard.
    """

    func: Callable
    d: int = 1
    tag: str = "S1"
    radius: float | None = None
    terms: tuple | None = None
    name: str = ""

    def __post_init__(self):
        if self.tag not in SYMBOL_CLASSES:
            raise ValueError(f"unknown symbol class {self.tag!r}")
        if self.tag == "compact_support" and self.radius is None:
            raise ValueError("compactly supported symbols need a support radius")
        self._spot_check()

    def _spot_check(self):
        rng = np.random.default_rng(12345)
        pts = rng.standard_normal((64, 2 * self.d))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        if self.tag == "compact_support":
            outside = self(pts * self.radius * 1.05)
            if np.max(np.abs(outside)) > 1e-12:
                raise ValueError("symbol tagged compact_support is nonzero outside its radius")
        elif self.tag == "S1":
            vals = self(pts * rng.uniform(0, 50, size=(64, 1)))
            if not np.all(np.isfinite(vals)) or np.max(np.abs(vals)) > 1e12:
                raise ValueError("symbol tagged S1 is not bounded on samples")
        else:
            big = self(pts * 100.0)
            if np.min(np.real(big)) < 1.0:
                raise ValueError("symbol tagged quadratic_elliptic does not grow")

    def __call__(self, X):
        return self.func(np.asarray(X, dtype=float))

    def at_origin(self) -> float:
        return complex(self(np.zeros(2 * self.d))).real

    def scaled(self, h: float, t: float) -> Callable:
        """b(x, ξ) = a(h^t x, h^{1-t} ξ) as a function of (x, ξ) arrays."""
        d = self.d
        sx, sxi = h**t, h ** (1 - t)

        def b(x, xi):
            X = np.concatenate([np.broadcast_to(x, np.broadcast_shapes(x.shape, xi.shape)) * sx,
                                np.broadcast_to(xi, np.broadcast_shapes(x.shape, xi.shape)) * sxi], axis=-1)
            return self.func(X)

        b.d = d
        return b


def gaussian_symbol(width: float = 1.0, center=None, d: int = 1, tol: float = 1e-10) -> Symbol:
    """exp(-width |X - X0|²); separable.  Effective radius where the value drops below ``tol``."""
    c = np.zeros(2 * d) if center is None else np.asarray(center, dtype=float)

    def f(X):
        return np.exp(-width * np.sum((X - c) ** 2, axis=-1))

    terms = None
    if d == 1:
        terms = ((lambda x: np.exp(-width * (x - c[0]) ** 2), lambda xi: np.exp(-width * (xi - c[1]) ** 2)),)
    radius = float(np.linalg.norm(c)) + math.sqrt(math.log(1.0 / tol) / width)
    return Symbol(f, d=d, tag="S1", radius=radius, terms=terms, name=f"gauss({width:g})")


def harmonic_symbol(d: int = 1) -> Symbol:
    """α0(X) = |X|²/2."""

    def f(X):
        return 0.5 * np.sum(X**2, axis=-1)

    terms = None
    if d == 1:
        terms = ((lambda x: 0.5 * x**2, lambda xi: np.ones_like(xi)),
                 (lambda x: np.ones_like(x), lambda xi: 0.5 * xi**2))
    return Symbol(f, d=d, tag="quadratic_elliptic", terms=terms, name="alpha0")


def bump(r, inner: float = 0.8, outer: float = 1.0):
    """Smooth radial cutoff: 1 for r <= inner, 0 for r >= outer."""
    r = np.asarray(r, dtype=float)
    s = np.clip((r - inner) / (outer - inner), 0.0, 1.0)
    out = np.zeros_like(s)
    mid = (s > 0) & (s < 1)
    a = np.exp(-1.0 / np.where(mid, s, 0.5))
    b = np.exp(-1.0 / np.where(mid, 1 - s, 0.5))
    out[mid] = (b / (a + b))[mid]
    out[s <= 0] = 1.0
    return out


def bump_symbol(delta: float = 1.0, d: int = 1, center=None) -> Symbol:
    """χ(|X - X0|/δ) with the smooth cutoff :func:`bump`."""
    c = np.zeros(2 * d) if center is None else np.asarray(center, dtype=float)

    def f(X):
        return bump(np.linalg.norm(X - c, axis=-1) / delta)

    return Symbol(f, d=d, tag="compact_support", radius=float(np.linalg.norm(c)) + delta, name=f"bump({delta:g})")


def _check_aliasing(a: Symbol, h: float, t: float, grid: PhaseSpaceGrid):
    if a.radius is None:
        return
    need_x = a.radius / h**t
    need_xi = a.radius / h ** (1 - t)
    if need_x > grid.L * (1 + 1e-12) or need_xi > grid.nyquist * (1 + 1e-12):
        raise AliasingError(
            f"symbol radius {a.radius:g} needs L >= {need_x:.4g} and Nyquist >= {need_xi:.4g}; "
            f"grid has L={grid.L:.4g}, Nyquist={grid.nyquist:.4g}"
        )


def _pair_structure(n: int):
    """Per (j, k): wrapped difference r in [-n/2, n/2) and midpoint half-index s in [0, 2n).

    Antipodal pairs get two entries with weight 1/2; others one entry with
    weight 1 (second entry has weight 0).
    """
    j = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    diff = j - k
    r = (diff + n // 2) % n - n // 2
    wrapped = np.abs(diff) > n // 2
    antipodal = np.abs(diff) == n // 2
    s0 = (j + k + n * wrapped) % (2 * n)
    s1 = (s0 + n) % (2 * n)
    w0 = np.where(antipodal, 0.5, 1.0)
    w1 = np.where(antipodal, 0.5, 0.0)
    return r, s0, s1, w0, w1


def _midpoints(grid: PhaseSpaceGrid) -> np.ndarray:
    """Midpoint positions for half-indices s = 0..2n-1."""
    n = grid.n_pts
    return -grid.L + 0.5 * grid.dx * np.arange(2 * n)


def _quantize_1d_separable(terms, h, t, grid):
    n = grid.n_pts
    x_mid = _midpoints(grid)
    xi = grid.xi
    sx, sxi = h**t, h ** (1 - t)
    factors = []
    for px, qxi in terms:
        pm = np.asarray(px(x_mid * sx), dtype=complex) * np.ones(2 * n)
        # Q(r) = (1/n) Σ_l e^{i ξ_l r dx} q(ξ_l), r taken modulo n
        Q = np.fft.ifft(np.asarray(qxi(xi * sxi), dtype=complex) * np.ones(n))
        factors.append((pm, Q))
    real = all(np.max(np.abs(pm.imag)) == 0 and np.max(np.abs(Q.imag)) <= 1e-15 * max(1e-300, np.abs(Q).max())
               for pm, Q in factors)
    if real:
        factors = [(pm.real, Q.real) for pm, Q in factors]
    M = np.zeros((n, n), dtype=float if real else complex)
    k = np.arange(n)
    for j in range(n):
        diff = j - k
        r = diff % n
        wrapped = np.abs(diff) > n // 2
        anti = np.abs(diff) == n // 2
        s0 = (j + k + n * wrapped) % (2 * n)
        s1 = (s0 + n) % (2 * n)
        for pm, Q in factors:
            val = np.where(anti, 0.5 * (pm[s0] + pm[s1]), pm[s0])
            M[j] += val * Q[r]
    return M


def _quantize_1d_general(b, h, t, grid, chunk: int = 256):
    n = grid.n_pts
    x_mid = _midpoints(grid)
    xi = grid.xi
    M = np.zeros((n, n), dtype=complex)
    j = np.arange(n)
    for start in range(0, 2 * n, chunk):
        s_vals = np.arange(start, min(start + chunk, 2 * n))
        vals = b(x_mid[s_vals][:, None, None], xi[None, :, None])
        F = np.fft.ifft(np.asarray(vals, dtype=complex).reshape(len(s_vals), n), axis=1)
        for idx, s in enumerate(s_vals):
            k = (s - j) % n
            diff = j - k
            wrapped = np.abs(diff) > n // 2
            anti = np.abs(diff) == n // 2
            s_pair = (j + k + n * wrapped) % (2 * n)
            r = diff % n
            hit = (s_pair == s) & ~anti
            M[j[hit], k[hit]] += F[idx, r[hit]]
            # antipodal pairs: both midpoints s and s + n contribute half
            half = anti & ((s_pair == s) | ((s_pair + n) % (2 * n) == s))
            M[j[half], k[half]] += 0.5 * F[idx, r[half]]
    return M


def _quantize_2d(b, h, t, grid):
    n = grid.n_pts
    if grid.size > 4096:
        raise ResourceError("d=2 grid larger than 64x64 exceeds the dense cap")
    x_mid = _midpoints(grid)
    xi = grid.xi
    X1, X2, K1, K2 = np.meshgrid(x_mid, x_mid, xi, xi, indexing="ij")
    vals = b(np.stack([X1, X2], -1), np.stack([K1, K2], -1))
    F = np.fft.ifft2(np.asarray(vals, dtype=complex), axes=(2, 3))
    r, s0, s1, w0, w1 = _pair_structure(n)
    r = r % n
    M = np.zeros((n, n, n, n), dtype=complex)
    for sa, wa in ((s0, w0), (s1, w1)):
        for sb, wb in ((s0, w0), (s1, w1)):
            weight = wa[:, None, :, None] * wb[None, :, None, :]
            M += weight * F[sa[:, None, :, None], sb[None, :, None, :], r[:, None, :, None], r[None, :, None, :]]
    return M.reshape(n * n, n * n)


def weyl_quantize(a: Symbol, h: float, t: float, grid: PhaseSpaceGrid, ordering: str = "weyl",
                  check: bool = True, hermitize: bool = True) -> np.ndarray:
    """Matrix of a^W(h^t x, h^{1-t} D_x) on the grid space.

    ``ordering='standard'`` samples the symbol at the left point x_j instead of
    the midpoint (d = 1 only).  Real symbols give Hermitian matrices; with
    ``hermitize`` the Hermitian part is returned and, if the imaginary part is
    negligible, a real array.
    """
    if a.d != grid.d:
        raise ValueError("symbol and grid dimensions differ")
    if check:
        _check_aliasing(a, h, t, grid)
    b = a.scaled(h, t)
    if ordering == "standard":
        if grid.d != 1:
            raise ValueError("standard ordering is implemented for d = 1")
        n = grid.n_pts
        vals = b(grid.x[:, None, None], grid.xi[None, :, None])
        F = np.fft.ifft(np.asarray(vals, dtype=complex).reshape(n, n), axis=1)
        j = np.arange(n)[:, None]
        k = np.arange(n)[None, :]
        return F[np.broadcast_to(j, (n, n)), (j - k) % n]
    if ordering != "weyl":
        raise ValueError("ordering must be 'weyl' or 'standard'")
    if grid.d == 2:
        M = _quantize_2d(b, h, t, grid)
    elif a.terms is not None:
        M = _quantize_1d_separable(a.terms, h, t, grid)
    else:
        M = _quantize_1d_general(b, h, t, grid)
    if not hermitize:
        return M
    test = a(np.zeros((1, 2 * a.d)))
    if np.iscomplexobj(test) and np.any(np.imag(test) != 0):
        return M
    M = 0.5 * (M + M.conj().T)
    if np.max(np.abs(M.imag), initial=0.0) <= 1e-13 * max(1.0, np.max(np.abs(M.real), initial=0.0)):
        return np.ascontiguousarray(M.real)
    return M


def trace_pair(a: Symbol, b: Symbol, h: float, grid: PhaseSpaceGrid, t: float = 0.5) -> float:
    """h^d Tr[a^{W,h} b^{W,h}]."""
    A = weyl_quantize(a, h, t, grid)
    B = weyl_quantize(b, h, t, grid)
    return float(np.real(h**grid.d * np.sum(A * B.T)))


class WignerPairing:
    """Discrete Wigner transform of a grid density Σ w_i |v_i><v_i| (d = 1).

    Tr[γ M] for the Weyl matrix M of any symbol equals Σ_{s,l} b(x_s, ξ_l) W[s, l]
    with W built once, so symbols are paired without forming their matrices.
    Only the real part of W is stored; it suffices for real symbols.
    """

    def __init__(self, grid: PhaseSpaceGrid, vectors, weights=None, chunk: int = 1024):
        if grid.d != 1:
            raise ValueError("Wigner pairing is implemented for d = 1")
        V = np.asarray(vectors, dtype=complex)
        if V.ndim == 1:
            V = V[:, None]
        n = grid.n_pts
        if V.shape[0] != n:
            raise ValueError("vectors must live on the grid")
        w = np.ones(V.shape[1]) if weights is None else np.asarray(weights, dtype=float)
        self.grid = grid
        self.trace = float(np.sum(w * np.sum(np.abs(V) ** 2, axis=0)))
        G = np.zeros(2 * n * n, dtype=complex)
        k = np.arange(n)[None, :]
        Vw = V * w
        for start in range(0, n, chunk):
            j = np.arange(start, min(start + chunk, n))[:, None]
            # entry (j, k) of the Weyl matrix pairs with γ[k, j]
            gam = (V[j[:, 0]].conj() @ Vw.T)
            diff = j - k
            r = diff % n
            wrapped = np.abs(diff) > n // 2
            anti = np.abs(diff) == n // 2
            s0 = (j + k + n * wrapped) % (2 * n)
            val = np.where(anti, 0.5, 1.0) * gam
            G += np.bincount((s0 * n + r).ravel(), weights=val.real.ravel(), minlength=2 * n * n)
            G += 1j * np.bincount((s0 * n + r).ravel(), weights=val.imag.ravel(), minlength=2 * n * n)
            if np.any(anti):
                s1 = ((s0 + n) % (2 * n))[anti]
                idx = s1 * n + r[anti]
                G += np.bincount(idx, weights=val[anti].real, minlength=2 * n * n)
                G += 1j * np.bincount(idx, weights=val[anti].imag, minlength=2 * n * n)
        G = G.reshape(2 * n, n)
        self.W = np.fft.ifft(G, axis=1).real
        del G

    def pair(self, a: "Symbol", h: float, t: float = 0.5, check: bool = True) -> float:
        """Re Tr[γ a^{W,h}] on the grid."""
        return float(self.pair_many(a, [self], h, t, check)[0])

    @staticmethod
    def pair_many(a: "Symbol", pairings, h: float, t: float = 0.5, check: bool = True,
                  chunk: int = 256) -> np.ndarray:
        """Pair one symbol with several densities on a common grid, sampling it once."""
        grid = pairings[0].grid
        if any(p.grid != grid for p in pairings):
            raise ValueError("all densities must share one grid")
        if check:
            _check_aliasing(a, h, t, grid)
        b = a.scaled(h, t)
        x_mid = _midpoints(grid)
        xi = grid.xi
        total = np.zeros(len(pairings))
        for start in range(0, 2 * grid.n_pts, chunk):
            xs = x_mid[start:start + chunk]
            vals = np.real(b(xs[:, None, None], xi[None, :, None])).reshape(len(xs), -1)
            for i, p in enumerate(pairings):
                total[i] += float(np.sum(vals * p.W[start:start + chunk]))
        return total


def phase_space_integral(func, d: int = 1, radial: bool = False, r_max: float = np.inf,
                         n_theta: int = 64) -> float:
    """∫ func(X) dX/(2π)^d by polar quadrature (d = 1) or radial reduction.

    With ``radial=True`` func is a function of |X| and the integral reduces to
    a one-dimensional one.
    """
    if radial:
        dim = 2 * d
        area = 2 * math.pi**d / math.gamma(d)
        val, _ = si.quad(lambda r: func(r) * r ** (dim - 1), 0, r_max, limit=400)
        return area * val / (2 * math.pi) ** d
    if d != 1:
        raise ValueError("non-radial quadrature is implemented for d = 1")
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    def ring(r):
        return np.mean(func(r * dirs)) * 2 * np.pi * r

    val, _ = si.quad(ring, 0, r_max, limit=400)
    return val / (2 * np.pi)


def harmonic_levels(h: float, d: int, count: int) -> np.ndarray:
    """Lowest eigenvalues h(d/2 + |n|) of the quantized harmonic symbol, with multiplicity."""
    out = []
    level = 0
    while len(out) < count:
        mult = math.comb(level + d - 1, d - 1)
        out.extend([h * (d / 2 + level)] * mult)
        level += 1
    return np.array(out[:count])


def harmonic_grid(h: float, radius: float, t: float = 0.5, d: int = 1, margin: float = 1.0) -> PhaseSpaceGrid:
    """Smallest power-of-two grid resolving a symbol of given phase-space radius."""
    need_x = margin * radius / h**t
    need_xi = margin * radius / h ** (1 - t)
    n = 2
    while math.pi * n / (2 * need_x) < need_xi:
        n *= 2
    return PhaseSpaceGrid(d, need_x, n)


# ------------------------------------------------------------------ singular trace


@dataclass(frozen=True)
class SingularWeight:
    """Decreasing weight f on (0, ∞) with u^κ0 f(u) -> f0 and f(u) <= C u^{-κ∞}."""

    f: Callable
    kappa0: float
    kappa_inf: float
    f0: float
    c: float = 1.0
    d: int = 1

    def __post_init__(self):
        if not 0 < self.kappa0 < self.d < self.kappa_inf:
            raise ValueError("need 0 < kappa0 < d < kappa_inf")
        u = np.logspace(-12, -6, 7)
        lim = u**self.kappa0 * self.f(u)
        if np.max(np.abs(lim - self.f0)) > 1e-3 * max(1.0, abs(self.f0)):
            raise ValueError("u^kappa0 f(u) does not approach f0")
        big = np.logspace(3, 8, 6)
        ratio = big**self.kappa_inf * self.f(big)
        if np.any(self.f(big) < 0) or not np.all(np.isfinite(ratio)) or ratio.max() > 1e3 * max(1.0, ratio[0]):
            raise ValueError("f is not dominated by u^-kappa_inf")

    def shift(self, h: float, c: float | None = None) -> float:
        c = self.c if c is None else c
        return c * h ** (self.d / self.kappa0)

    @classmethod
    def standard(cls, c: float = 1.0) -> "SingularWeight":
        """f(u) = u^{-1/2} <u>^{-3/2} (κ0 = 1/2, κ∞ = 2, f0 = 1)."""
        return cls(lambda u: u**-0.5 * (1 + u * u) ** -0.75, 0.5, 2.0, 1.0, c, 1)


def _singular_limit(fw: SingularWeight, alpha: Symbol, a: Symbol, c: float) -> dict:
    condensate = fw.f0 / c**fw.kappa0 * a.at_origin()
    thermal = phase_space_integral(lambda X: fw.f(np.maximum(alpha(X), 1e-300)) * a(X), d=fw.d)
    return {"condensate": condensate, "thermal": thermal, "total": condensate + thermal}


def _diag_sandwich(V: np.ndarray, A: np.ndarray, block: int = 512) -> np.ndarray:
    """diag(V^† A V) without forming the full product."""
    out = np.empty(V.shape[1])
    for start in range(0, V.shape[1], block):
        Vb = V[:, start:start + block]
        out[start:start + block] = np.real(np.sum(Vb.conj() * (A @ Vb), axis=0))
    return out


def singular_trace(fw: SingularWeight, alpha: Symbol, a: Symbol, h_schedule, grid_for_h,
                   c_values=None, t: float = 0.5) -> dict:
    """h^d Tr[f(H + c h^{d/κ0}) a^{W,h}] with H = α^{W,h} - λ0, along a schedule of h.

    ``grid_for_h`` maps h to a :class:`PhaseSpaceGrid`.  For every h and c the
    row holds the value, the predicted limit f0 c^{-κ0} a(0) + ∫ f(α) a, the
    ground-mode (condensate-type) contribution and its prediction.
    """
    c_values = [fw.c] if c_values is None else list(c_values)
    preds = {c: _singular_limit(fw, alpha, a, c) for c in c_values}
    rows = []
    for h in h_schedule:
        grid = grid_for_h(h)
        Halpha = weyl_quantize(alpha, h, t, grid)
        lam, V = sla.eigh(Halpha, overwrite_a=True, driver="evd")
        del Halpha
        lam = lam - lam[0]
        A = weyl_quantize(a, h, t, grid)
        weights = _diag_sandwich(V, A)
        del A, V
        for c in c_values:
            fvals = fw.f(lam + fw.shift(h, c))
            value = h**fw.d * float(np.sum(fvals * weights))
            cond = h**fw.d * float(fvals[0] * weights[0])
            pred = preds[c]
            rows.append({
                "h": h, "c": c, "n_pts": grid.n_pts, "L": grid.L,
                "value": value, "predicted": pred["total"],
                "abs_error": abs(value - pred["total"]),
                "rel_error": abs(value - pred["total"]) / abs(pred["total"]) if pred["total"] else abs(value),
                "condensate": cond, "condensate_predicted": pred["condensate"],
            })
    return {"rows": rows, "predictions": preds}
