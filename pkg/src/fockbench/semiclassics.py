"""Mean-field/semiclassical coupling, multiscale triples and scenario runners.

Grid families live on L²(R) discretized by :class:`~fockbench.weyl.PhaseSpaceGrid`
in unscaled coordinates Y = X/√h (t = 1/2), so a macroscopic point X sits at
grid position X/√h.  Wigner measures are represented only through pairings
with test symbols.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.optimize as so

from .cli import fit_order
from .fock_core import BOSON, FERMION, embed_restrict
from .operators import TruncatedFock
from .states import (GibbsSpec, bosonic_gibbs_cutoff, coherent_cutoff, coherent_state, falling_number_moment,
                     generating_Phi, gibbs_state, quasifree_reduced_density, reduced_density,
                     taylor_coefficients)
from .wick import symmetric_power
from .weyl import (AliasingError, PhaseSpaceGrid, SingularWeight, Symbol, WignerPairing, _check_aliasing,
                   bump, bump_symbol, gaussian_symbol, harmonic_grid, harmonic_symbol, phase_space_integral,
                   singular_trace, weyl_quantize)

__all__ = [
    "ScalingPlan",
    "MomentDictionary",
    "MultiscaleTriple",
    "TwoScaleSymbol",
    "GridDensity",
    "unit_symbol",
    "doublescale_quantize",
    "wavepacket",
    "hermite_functions",
    "family_grid",
    "quantum_family",
    "semiclassical_family",
    "intermediate_family",
    "mixture_family",
    "stationary_family",
    "default_dictionary",
    "estimate_triple",
    "estimate_triples",
    "separating_check",
    "coherent_grid_family",
    "tightness_diagnostic",
    "bec_level_eigenvalues",
    "scenario_coherent",
    "scenario_fermi_gibbs",
    "scenario_bec",
    "scenario_singular_trace",
    "SCENARIOS",
]


def _map_h(fn, hs, jobs: int = 1):
    """Evaluate fn over the schedule; results come back in schedule order."""
    if jobs <= 1:
        return [fn(h) for h in hs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, hs))


# ------------------------------------------------------------------ plan and dictionary


@dataclass(frozen=True)
class ScalingPlan:
    """ε(h) = eps_scale · h^eps_power along a decreasing schedule of h.

    ``tail_tol`` is the truncation budget used to size Fock spaces per h.
    """

    h_schedule: tuple
    eps_power: float = 1.0
    eps_scale: float = 1.0
    tail_tol: float = 1e-10

    def __post_init__(self):
        hs = tuple(float(h) for h in self.h_schedule)
        object.__setattr__(self, "h_schedule", hs)
        if not hs:
            raise ValueError("empty h schedule")
        if any(h <= 0 for h in hs) or any(b >= a for a, b in zip(hs, hs[1:])):
            raise ValueError("h schedule must be positive and strictly decreasing")
        if self.eps_power <= 0 or self.eps_scale <= 0:
            raise ValueError("ε(h) must be positive and vanish as h -> 0")

    def eps(self, h: float) -> float:
        return self.eps_scale * float(h) ** self.eps_power

    @property
    def eps_schedule(self) -> list:
        return [self.eps(h) for h in self.h_schedule]

    @classmethod
    def dyadic(cls, k_min: int, k_max: int, eps_power: float = 1.0, **kw) -> "ScalingPlan":
        """h = 2^-k for k = k_min..k_max."""
        return cls(tuple(2.0**-k for k in range(k_min, k_max + 1)), eps_power, **kw)

    def coherent_cutoff(self, z, h: float) -> int:
        return coherent_cutoff(z, self.eps(h))


def unit_symbol(d: int = 1) -> Symbol:
    """The constant symbol 1; its quantization is the identity."""
    terms = ((lambda x: np.ones_like(x), lambda xi: np.ones_like(xi)),) if d == 1 else None
    return Symbol(lambda X: np.ones(np.shape(X)[:-1]), d=d, tag="S1", terms=terms, name="one")


@dataclass
class MomentDictionary:
    """Test symbols with optional reference values ∫ a dν; always contains the unit symbol."""

    symbols: list
    references: list = field(default_factory=list)

    def __post_init__(self):
        self.symbols = list(self.symbols)
        refs = list(self.references) + [None] * (len(self.symbols) - len(self.references))
        if len(refs) != len(self.symbols):
            raise ValueError("more references than symbols")
        if not any(s.name == "one" for s in self.symbols):
            self.symbols.insert(0, unit_symbol(self.symbols[0].d if self.symbols else 1))
            refs.insert(0, None)
        self.references = refs
        names = self.names
        if len(set(names)) != len(names):
            raise ValueError("symbol names must be unique")

    @property
    def names(self) -> list:
        return [s.name for s in self.symbols]


# ------------------------------------------------------------------ two-scale symbols


@dataclass(frozen=True)
class TwoScaleSymbol:
    """a(X, Y) with X macroscopic and Y = X/√h; quantized through a_h(X) = a(X, X/√h).

    ``x_radius`` bounds the X-support uniformly in Y; ``y_radius`` is the
    radius beyond which a(X, Y) has reached its homogeneous tail.
    """

    func: Callable
    d: int = 1
    x_radius: float = 1.0
    y_radius: float | None = None
    tag: str = "compact_support"
    name: str = ""

    def __call__(self, X, Y):
        return self.func(np.asarray(X, dtype=float), np.asarray(Y, dtype=float))

    def sample(self, h: float) -> Symbol:
        root = math.sqrt(h)

        def f(X):
            return self.func(X, X / root)

        return Symbol(f, d=self.d, tag=self.tag, radius=self.x_radius, name=f"{self.name}@h={h:g}")


def _check_y_scale(a: TwoScaleSymbol, grid: PhaseSpaceGrid):
    if a.y_radius is not None and (grid.nyquist < a.y_radius or grid.L < a.y_radius):
        raise AliasingError(
            f"Y-scale radius {a.y_radius:g} needs L and Nyquist >= {a.y_radius:g}; "
            f"grid has L={grid.L:.4g}, Nyquist={grid.nyquist:.4g}"
        )


def doublescale_quantize(a: TwoScaleSymbol, h: float, grid: PhaseSpaceGrid, check: bool = True) -> np.ndarray:
    """Weyl matrix of a(X, X/√h) with t = 1/2."""
    if check:
        _check_y_scale(a, grid)
    return weyl_quantize(a.sample(h), h, 0.5, grid, check=check)


# ------------------------------------------------------------------ grid families


@dataclass
class GridDensity:
    """γ = Σ w_i |v_i><v_i| on a grid space."""

    grid: PhaseSpaceGrid
    vectors: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.vectors, dtype=complex)
        self.vectors = V[:, None] if V.ndim == 1 else V
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.vectors.shape != (self.grid.size, self.weights.size):
            raise ValueError("vectors and weights do not match the grid")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")

    @property
    def trace(self) -> float:
        return float(np.sum(self.weights * np.sum(np.abs(self.vectors) ** 2, axis=0)))

    def matrix(self) -> np.ndarray:
        return (self.vectors * self.weights) @ self.vectors.conj().T

    def compress(self, basis: np.ndarray) -> np.ndarray:
        """B^† γ B for an orthonormal column basis B."""
        P = basis.conj().T @ self.vectors
        return (P * self.weights) @ P.conj().T

    def pairing(self) -> WignerPairing:
        return WignerPairing(self.grid, self.vectors, self.weights)


def wavepacket(grid: PhaseSpaceGrid, center) -> np.ndarray:
    """ℓ²-normalized Gaussian coherent packet centered at (x0, ξ0) in unscaled coordinates."""
    x0, xi0 = (float(c) for c in center)
    x = grid.x
    v = math.pi**-0.25 * np.exp(-0.5 * (x - x0) ** 2 + 1j * xi0 * (x - x0)) * math.sqrt(grid.dx)
    return v / np.linalg.norm(v)


def hermite_functions(grid: PhaseSpaceGrid, count: int) -> np.ndarray:
    """First ``count`` Hermite functions sampled on the grid, ℓ²-normalized columns."""
    x = grid.x
    out = np.zeros((x.size, count))
    out[:, 0] = math.pi**-0.25 * np.exp(-0.5 * x**2)
    if count > 1:
        out[:, 1] = math.sqrt(2.0) * x * out[:, 0]
    for k in range(1, count - 1):
        out[:, k + 1] = math.sqrt(2.0 / (k + 1)) * x * out[:, k] - math.sqrt(k / (k + 1)) * out[:, k - 1]
    return out * math.sqrt(grid.dx)


def family_grid(h: float, radius: float = 5.0) -> PhaseSpaceGrid:
    """Grid resolving macroscopic symbols of the given radius (t = 1/2)."""
    return harmonic_grid(h, radius)


def quantum_family(radius: float = 5.0):
    """Ground state of the unscaled oscillator, independent of h."""
    def fam(h):
        grid = family_grid(h, radius)
        return GridDensity(grid, wavepacket(grid, (0.0, 0.0)), [1.0])
    fam.name = "quantum"
    return fam


def semiclassical_family(X0=(3.0, 0.0), radius: float = 5.0, mass: float = 1.0):
    """Packet of total mass ``mass`` sitting at the macroscopic point X0."""
    X0 = np.asarray(X0, dtype=float)

    def fam(h):
        grid = family_grid(h, radius)
        return GridDensity(grid, wavepacket(grid, X0 / math.sqrt(h)), [mass])
    fam.name = "semiclassical"
    return fam


def intermediate_family(omega0=(1.0, 0.0), scale: float = 2.0, radius: float = 5.0):
    """Packet at X_h = scale·h^{1/4}·ω0: |X_h| -> 0 while |X_h|/√h -> ∞."""
    w = np.asarray(omega0, dtype=float)
    w = w / np.linalg.norm(w)

    def fam(h):
        grid = family_grid(h, radius)
        return GridDensity(grid, wavepacket(grid, scale * h**-0.25 * w), [1.0])
    fam.name = "intermediate"
    return fam


def mixture_family(families, weights):
    """Convex combination of families sharing a grid rule."""
    weights = [float(w) for w in weights]

    def fam(h):
        parts = [f(h) for f in families]
        grid = parts[0].grid
        if any(p.grid != grid for p in parts):
            raise ValueError("mixture components must share a grid")
        V = np.concatenate([p.vectors for p in parts], axis=1)
        w = np.concatenate([wt * p.weights for wt, p in zip(weights, parts)])
        return GridDensity(grid, V, w)
    fam.name = "mixture"
    return fam


def stationary_family(gamma0, radius: float = 5.0):
    """Fixed density given by its matrix in the Hermite basis."""
    gamma0 = np.asarray(gamma0, dtype=complex)
    lam, U = np.linalg.eigh((gamma0 + gamma0.conj().T) / 2)
    if lam.min() < -1e-12:
        raise ValueError("gamma0 must be positive semidefinite")
    lam = np.clip(lam, 0.0, None)

    def fam(h):
        grid = family_grid(h, radius)
        B = hermite_functions(grid, gamma0.shape[0])
        return GridDensity(grid, B @ U, lam)
    fam.name = "stationary"
    return fam


def default_dictionary(X0=(3.0, 0.0), radius: float = 1.5) -> MomentDictionary:
    """Unit symbol plus bumps around the origin and around X0."""
    return MomentDictionary([
        unit_symbol(),
        replace(bump_symbol(radius), name="bump_origin"),
        replace(bump_symbol(radius, center=X0), name="bump_X0"),
    ])


# ------------------------------------------------------------------ triples


@dataclass
class MultiscaleTriple:
    """Dictionary moments of ν, mass and directions of ν_I, and the quantum-scale part γ0."""

    h_schedule: tuple
    moments: dict
    references: dict
    mass: float
    nu_zero: float
    nu_zero_by_delta: dict
    nu_zero_extrapolated: float
    nu_I_mass: float
    nu_I_direction: np.ndarray
    gamma0: np.ndarray
    gamma0_trace: float
    gamma0_trace_symbol: float
    rows: list
    flags: list
    tolerance: float

    def __post_init__(self):
        for name, val in (("mass", self.mass), ("nu_zero", self.nu_zero), ("nu_I_mass", self.nu_I_mass),
                          ("gamma0_trace", self.gamma0_trace)):
            if val < -self.tolerance:
                self.flags.append(f"negative {name} = {val:.3g}")

    @property
    def nu_away(self) -> float:
        """ν mass outside the origin."""
        return self.mass - self.nu_zero

    @property
    def components(self) -> tuple:
        """(ν away from 0, ν_I mass, Tr γ0)."""
        return (self.nu_away, self.nu_I_mass, self.gamma0_trace)

    @property
    def nu_I_from_identity(self) -> float:
        return self.nu_zero - self.gamma0_trace

    @property
    def consistency_gap(self) -> float:
        """ν({0}) - ν_I(total) - Tr γ0."""
        return self.nu_zero - self.nu_I_mass - self.gamma0_trace

    @property
    def cauchy(self) -> bool:
        return not any(f.startswith("non-Cauchy") for f in self.flags)

    def summary(self) -> dict:
        return {
            "moments": self.moments, "references": self.references, "mass": self.mass,
            "nu_zero": self.nu_zero, "nu_zero_by_delta": self.nu_zero_by_delta,
            "nu_zero_extrapolated": self.nu_zero_extrapolated, "nu_I_mass": self.nu_I_mass,
            "nu_I_direction": self.nu_I_direction.tolist(), "gamma0_trace": self.gamma0_trace,
            "gamma0_trace_symbol": self.gamma0_trace_symbol, "nu_I_from_identity": self.nu_I_from_identity,
            "components": list(self.components), "consistency_gap": self.consistency_gap,
            "flags": list(self.flags),
        }


def _probe_symbols(deltas, R: float, x_cut: float, d: int = 1):
    """Shrinking bumps for ν({0}), two-scale symbols for ν_I and the quantum cutoff."""
    probes = {}
    for delta in deltas:
        probes[f"bump_{delta:g}"] = bump_symbol(delta, d)
    delta_I = min(deltas)

    def outer(Y):
        return 1.0 - bump(np.linalg.norm(Y, axis=-1) / R)

    probes["nu_I_mass"] = TwoScaleSymbol(
        lambda X, Y: bump(np.linalg.norm(X, axis=-1) / delta_I) * outer(Y),
        d, x_radius=delta_I, y_radius=R, name="nu_I")
    for k in range(2 * d):
        def f(X, Y, k=k):
            r = np.linalg.norm(Y, axis=-1)
            return bump(np.linalg.norm(X, axis=-1) / delta_I) * outer(Y) * Y[..., k] / np.maximum(r, 1e-300)
        probes[f"nu_I_dir_{k}"] = TwoScaleSymbol(f, d, x_radius=delta_I, y_radius=R, name=f"nu_I_dir{k}")
    probes["gamma0_trace"] = TwoScaleSymbol(
        lambda X, Y: bump(np.linalg.norm(X, axis=-1) / x_cut) * bump(np.linalg.norm(Y, axis=-1) / R),
        d, x_radius=x_cut, y_radius=R, name="quantum_cutoff")
    return probes


def estimate_triples(families: dict, dictionary: MomentDictionary, h_schedule, deltas=(2.5, 2.0, 1.5),
                     R: float = 3.2, x_cut: float = 1.0, n_hermite: int = 8, cauchy_tol: float = 0.02,
                     tail: int = 3) -> dict:
    """Triples for several families; symbols are sampled once per h and shared.

    Limits are the values at the smallest h; a quantity whose spread over the
    last ``tail`` schedule points exceeds ``cauchy_tol`` is flagged.
    """
    deltas = sorted((float(x) for x in deltas), reverse=True)
    hs = [float(h) for h in h_schedule]
    probes = _probe_symbols(deltas, R, x_cut)
    names = list(families)
    series = {name: {} for name in names}
    gammas = {name: [] for name in names}
    rows = {name: [] for name in names}
    for h in hs:
        dens = {name: families[name](h) for name in names}
        grid = dens[names[0]].grid
        if any(g.grid != grid for g in dens.values()):
            raise ValueError("families must share the grid at each h")
        pairings = [dens[name].pairing() for name in names]
        values = {}
        for sym in dictionary.symbols:
            if sym.name == "one":
                values[sym.name] = np.array([dens[name].trace for name in names])
            else:
                values[sym.name] = WignerPairing.pair_many(sym, pairings, h)
        for key, sym in probes.items():
            if isinstance(sym, TwoScaleSymbol):
                _check_y_scale(sym, grid)
                sym = sym.sample(h)
            values[key] = WignerPairing.pair_many(sym, pairings, h)
        del pairings
        basis = hermite_functions(grid, n_hermite)
        for i, name in enumerate(names):
            row = {"h": h, "n_pts": grid.n_pts}
            for key, vals in values.items():
                row[key] = float(vals[i])
                series[name].setdefault(key, []).append(float(vals[i]))
            rows[name].append(row)
            gammas[name].append(dens[name].compress(basis))
    out = {}
    for name in names:
        s = series[name]
        flags = []
        for key, vals in s.items():
            last = np.array(vals[-tail:])
            spread = float(last.max() - last.min())
            if spread > cauchy_tol * max(1.0, abs(last[-1])):
                flags.append(f"non-Cauchy {key}: spread {spread:.3g} over the last {len(last)} h")
        gam = gammas[name]
        g_spread = max((float(np.abs(g - gam[-1]).max()) for g in gam[-tail:]), default=0.0)
        if g_spread > cauchy_tol:
            flags.append(f"non-Cauchy gamma0: spread {g_spread:.3g}")
        by_delta = {d: s[f"bump_{d:g}"][-1] for d in deltas}
        if len(deltas) >= 2:
            d1, d2 = deltas[-2], deltas[-1]
            extrap = by_delta[d2] - d2 * (by_delta[d1] - by_delta[d2]) / (d1 - d2)
        else:
            extrap = by_delta[deltas[-1]]
        out[name] = MultiscaleTriple(
            h_schedule=tuple(hs),
            moments={sym.name: s[sym.name][-1] for sym in dictionary.symbols},
            references=dict(zip(dictionary.names, dictionary.references)),
            mass=s["one"][-1],
            nu_zero=by_delta[deltas[-1]],
            nu_zero_by_delta=by_delta,
            nu_zero_extrapolated=float(extrap),
            nu_I_mass=s["nu_I_mass"][-1],
            nu_I_direction=np.array([s[f"nu_I_dir_{k}"][-1] for k in range(2)]),
            gamma0=gam[-1],
            gamma0_trace=float(np.real(np.trace(gam[-1]))),
            gamma0_trace_symbol=s["gamma0_trace"][-1],
            rows=rows[name],
            flags=flags,
            tolerance=cauchy_tol,
        )
    return out


def estimate_triple(family, dictionary: MomentDictionary, h_schedule, **kw) -> MultiscaleTriple:
    """Triple (ν, ν_I, γ0) of a single family h ↦ GridDensity."""
    return estimate_triples({"family": family}, dictionary, h_schedule, **kw)["family"]


def separating_check(triple: MultiscaleTriple, tol: float = 0.02) -> dict:
    """ν({0}) against Tr γ0 and ν_I, with the consistency identity."""
    gap = triple.consistency_gap
    return {
        "nu_zero": triple.nu_zero,
        "gamma0_trace": triple.gamma0_trace,
        "nu_I_mass": triple.nu_I_mass,
        "consistency_gap": gap,
        "consistent": abs(gap) <= tol,
        "separating": abs(triple.nu_zero - triple.gamma0_trace) <= tol,
        "tolerance": tol,
        "flags": list(triple.flags),
    }


# ------------------------------------------------------------------ tightness


def coherent_grid_family(center_macro, z_norm: float = 1.0, grid=None, radius: float = 5.0):
    """h ↦ (grid, z_h): a packet of norm z_norm at the macroscopic point center_macro(h)."""
    def fam(h):
        g = grid if grid is not None else family_grid(h, radius)
        X = np.asarray(center_macro(h), dtype=float)
        return g, z_norm * wavepacket(g, X / math.sqrt(h))
    return fam


def _coherent_exponent(A: np.ndarray, z: np.ndarray, eps: float, c: float) -> float:
    """⟨z, (e^{εcA} - 1) z⟩/ε, the log of Tr[E_z e^{c dΓ(A)}]."""
    lam, U = np.linalg.eigh(A)
    w = np.abs(U.conj().T @ z) ** 2
    return float(np.sum(w * np.expm1(eps * c * lam)) / eps)


def tightness_diagnostic(family, c_prime: float, deltas, h_schedule, eps_rule=lambda h: h,
                         c_moment: float | None = None, tail: int = 3, tol: float = 0.02) -> dict:
    """s_{c′,χ}(δ) for a coherent family, with χ_δ(X) = χ(|X|/δ).

    For E_z both exponential moments have closed forms, so
    s = Re[exp(⟨z,(e^{εc′}-1)z⟩/ε) - exp(⟨z,(e^{εc′χ_δ}-1)z⟩/ε)] with χ_δ the
    grid Weyl matrix.  The number operator enters through the identity matrix
    on the same code path, so coinciding operators give s = 0 exactly.
    """
    c_moment = 2 * c_prime if c_moment is None else c_moment
    hs = [float(h) for h in h_schedule]
    deltas = [float(d) for d in deltas]
    rows = []
    moments = []
    for h in hs:
        grid, z = family(h)
        eps = eps_rule(h)
        ident = np.eye(grid.size)
        log_n = _coherent_exponent(ident, z, eps, c_prime)
        z2 = float(np.vdot(z, z).real)
        moments.append({"h": h, "eps": eps, "c": c_moment,
                        "moment": math.exp(z2 * math.expm1(eps * c_moment) / eps)})
        for delta in deltas:
            sym = bump_symbol(delta)
            try:
                _check_aliasing(sym, h, 0.5, grid)
                resolved = True
            except AliasingError:
                resolved = False
            A = weyl_quantize(sym, h, 0.5, grid, check=False)
            s = math.exp(log_n) - math.exp(_coherent_exponent(A, z, eps, c_prime))
            rows.append({"h": h, "delta": delta, "eps": eps, "value": s, "resolved": resolved})
    table = []
    for delta in deltas:
        sel = [r for r in rows if r["delta"] == delta]
        last = [r["value"] for r in sel][-tail:]
        table.append({"delta": delta, "limsup": max(last), "values": [r["value"] for r in sel],
                      "resolved": all(r["resolved"] for r in sel),
                      "monotone": bool(np.all(np.diff(last) <= 1e-15) or np.all(np.diff(last) >= -1e-15))})
    moment_vals = [m["moment"] for m in moments]
    # cutoffs beyond the grid resolution say nothing about mass at infinity
    limsups = [t["limsup"] for t in table if t["resolved"]]
    adapted = bool(limsups) and bool(limsups[-1] <= tol and np.all(np.diff(limsups) <= tol))
    return {"rows": rows, "table": table, "moments": moments,
            "moment_bounded": bool(max(moment_vals[-tail:]) <= 1.5 * max(moment_vals[:tail])),
            "adapted": adapted, "tolerance": tol}


# ------------------------------------------------------------------ scenarios


def _report(name, parameters, per_h, fitted, verdicts, tables=None, **extra):
    out = {"scenario": name, "parameters": parameters, "per_h": per_h, "fitted_order": fitted,
           "verdicts": verdicts, "tables": tables or {"main": per_h}}
    out.update(extra)
    return out


def _trace_norm(M: np.ndarray) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh((M + M.conj().T) / 2))))


def scenario_coherent(plan: ScalingPlan | None = None, X0=(3.0, 0.0), z_norm2: float = 1.0, p_max: int = 3,
                      width: float = 6.0, tol: float = 1e-6, triple_tol: float = 0.02, jobs: int = 1) -> dict:
    """Coherent family E_{z_h} with z_h a grid packet at X0, ε = ε(h).

    The Fock computation runs on the two-dimensional space spanned by z_h and
    a^{W,h} z_h, which is invariant for every quantity reported.
    """
    plan = plan or ScalingPlan.dyadic(3, 6)
    a = gaussian_symbol(width, center=X0)
    pred = z_norm2 * float(a(np.asarray(X0, dtype=float)))

    def one(h):
        eps = plan.eps(h)
        grid = family_grid(h)
        z = math.sqrt(z_norm2) * wavepacket(grid, np.asarray(X0) / math.sqrt(h))
        A = weyl_quantize(a, h, 0.5, grid)
        Q, _ = np.linalg.qr(np.stack([z, A @ z], axis=1))
        zc = Q.conj().T @ z
        ac = Q.conj().T @ A @ Q
        fock = TruncatedFock(2, BOSON, coherent_cutoff(zc, eps), eps)
        state = coherent_state(zc, fock)
        row = {"h": h, "eps": eps, "N_max": fock.N_max, "dim": fock.dim,
               "construction_gap": state.meta.get("construction_gap")}
        base = None
        for p in range(1, p_max + 1):
            gam = reduced_density(state, p)
            zp = symmetric_power(zc, p)
            row[f"trace_distance_p{p}"] = _trace_norm(gam.matrix - np.outer(zp, zp.conj()))
            E, Rm = embed_restrict(BOSON, 2, p)
            K = ac
            for _ in range(p - 1):
                K = np.kron(K, ac)
            moment = float(np.real(gam.pair(Rm @ K @ E)))
            if p == 1:
                base = moment
                row["value"] = moment
            row[f"product_deviation_p{p}"] = abs(moment - base**p)
            fall = falling_number_moment(state, p)
            row[f"mass_gap_p{p}"] = abs(gam.trace - fall) / max(1.0, fall)
        row["predicted"] = pred
        row["abs_error"] = abs(row["value"] - pred)
        row["rel_error"] = row["abs_error"] / abs(pred)
        row["tolerance"] = tol
        return row

    per_h = _map_h(one, plan.h_schedule, jobs)
    triple = estimate_triple(semiclassical_family(X0, mass=z_norm2), default_dictionary(X0),
                             plan.h_schedule)
    comps = triple.components
    fitted = fit_order(per_h)
    verdicts = {
        "trace_distance": all(r[f"trace_distance_p{p}"] <= tol for r in per_h for p in range(1, p_max + 1)),
        "product_structure": all(r[f"product_deviation_p{p}"] <= tol for r in per_h for p in range(1, p_max + 1)),
        "mass_bookkeeping": all(r[f"mass_gap_p{p}"] <= 1e-10 for r in per_h for p in range(1, p_max + 1)),
        "semiclassical_limit": per_h[-1]["abs_error"] < per_h[0]["abs_error"],
        "triple": (abs(comps[0] - z_norm2) <= triple_tol * z_norm2 and abs(comps[1]) <= triple_tol
                   and abs(comps[2]) <= triple_tol),
    }
    params = {"X0": list(X0), "z_norm2": z_norm2, "p_max": p_max, "width": width,
              "h_schedule": list(plan.h_schedule), "eps_power": plan.eps_power}
    return _report("coherent", params, per_h, fitted, verdicts, triple=triple.summary())


def fermi_density(F: np.ndarray, beta: float) -> np.ndarray:
    """Fermi function e^{-βF}/(1 + e^{-βF}) evaluated stably."""
    return 0.5 * (1.0 - np.tanh(0.5 * beta * np.asarray(F)))


def scenario_fermi_gibbs(plan: ScalingPlan | None = None, beta: float = 1.0, mu_coeff: float = 1.0,
                         p_max: int = 2, width: float = 1.0, rel_tol: float = 0.03, order_min: float = 0.8,
                         product_tol: float = 0.05, cross_check_h: float = 0.25, cross_check_modes: int = 6,
                         jobs: int = 1) -> dict:
    """Free fermions in the harmonic trap, d = 1, ε = h, μ = mu_coeff·ε.

    γ^(1) = h·G with G = C(1 + C)^{-1}, C = exp(-β(H - μ)), H = α0^{W,h}.
    The p = 2 pairing uses the exact antisymmetric product
    Tr[(a^{W,h})^{⊗2} γ^(2)] = Tr[X]² - Tr[X²], X = a^{W,h} γ^(1).
    """
    if p_max not in (1, 2):
        raise ValueError("p_max must be 1 or 2")
    plan = plan or ScalingPlan.dyadic(4, 8)
    a = gaussian_symbol(width)
    alpha = harmonic_symbol()
    pred = phase_space_integral(lambda r: fermi_density(0.5 * r * r, beta) * np.exp(-width * r * r),
                                d=1, radial=True)

    def one(h):
        eps = plan.eps(h)
        grid = harmonic_grid(h, a.radius)
        H = weyl_quantize(alpha, h, 0.5, grid, check=False)
        lam, U = sla.eigh(H, overwrite_a=True, driver="evd")
        del H
        occ = fermi_density(lam - mu_coeff * eps, beta)
        A = weyl_quantize(a, h, 0.5, grid)
        AU = A @ U
        del A
        M = U.conj().T @ AU  # a^{W,h} in the eigenbasis
        X = M * occ[None, :] * h
        value = float(np.real(np.trace(X)))
        row = {"h": h, "eps": eps, "n_pts": grid.n_pts, "value": value, "predicted": pred,
               "abs_error": abs(value - pred), "rel_error": abs(value - pred) / abs(pred),
               "tolerance": rel_tol, "mass_gamma1": float(h * np.sum(occ))}
        if p_max >= 2:
            exact = value**2 - float(np.real(np.sum(X * X.T)))
            row["pair_p2"] = exact
            row["product_p2"] = value**2
            row["product_deviation_p2"] = abs(exact - value**2) / value**2
            row["factorial_product_p2"] = 2 * value**2
        return row

    per_h = _map_h(one, plan.h_schedule, jobs)
    fitted = fit_order(per_h)
    cross = _fermi_fock_cross_check(cross_check_h, beta, mu_coeff, plan.eps(cross_check_h), cross_check_modes)
    verdicts = {
        "relative_error": per_h[-1]["rel_error"] <= rel_tol,
        "fitted_order": fitted >= order_min,
        "fock_cross_check": cross["max_gap"] <= 1e-10,
    }
    if p_max >= 2:
        verdicts["product_structure"] = per_h[-1]["product_deviation_p2"] <= product_tol
    params = {"beta": beta, "mu_coeff": mu_coeff, "p_max": p_max, "width": width,
              "h_schedule": list(plan.h_schedule), "eps_power": plan.eps_power}
    return _report("fermi_gibbs", params, per_h, fitted, verdicts, cross_check=cross)


def _fermi_fock_cross_check(h: float, beta: float, mu_coeff: float, eps: float, m: int) -> dict:
    """Full Fock-space Gibbs state on the lowest m oscillator modes against closed forms."""
    H = np.diag(h * (0.5 + np.arange(m)))
    spec = GibbsSpec(H, beta, mu_coeff * eps, FERMION)
    fock = TruncatedFock(m, FERMION, m, eps)
    state = gibbs_state(spec, fock)
    gaps = {}
    for p in (1, 2):
        g = reduced_density(state, p)
        ref = quasifree_reduced_density(spec.C, FERMION, eps, p)
        gaps[f"gamma_p{p}"] = float(np.abs(g.matrix - ref.matrix).max())
        gaps[f"mass_p{p}"] = abs(g.trace - falling_number_moment(state, p))
    return {"h": h, "m": m, "eps": eps, **gaps, "max_gap": max(gaps.values())}


def bec_level_eigenvalues(h: float, kappa: float, levels: np.ndarray) -> np.ndarray:
    """Eigenvalue of (e^{-κα0})^{W,h}, d = 2, on the oscillator level N (multiplicity N + 1)."""
    u = 0.5 * kappa * h
    return (1 + u) ** -2 * ((1 - u) / (1 + u)) ** np.asarray(levels, dtype=float)


def _bec_thermal_integral(beta: float, kappa: float) -> float:
    """∫ e^{-βα0}/(1 - e^{-βα0}) e^{-κα0} dX/(2π)², d = 2, reduced to ∫ u(...) du."""
    with np.errstate(over="ignore"):
        return phase_space_integral(lambda r: np.exp(-kappa * r * r / 2) / np.expm1(beta * r * r / 2),
                                    d=2, radial=True)


def _bec_DT(h, s, eps, beta, nu_C, kappa, n_levels):
    N = np.arange(n_levels)
    lam = bec_level_eigenvalues(h, kappa, N)
    logc = -beta * h * N - eps / nu_C
    s = np.asarray(s, dtype=complex)[..., None]
    num = np.log(-np.expm1(logc + eps * s * lam))
    den = np.log(-np.expm1(logc))
    terms = -(N + 1) * (num - den)
    return terms.sum(axis=-1), terms[..., 0]


def scenario_bec(plan: ScalingPlan | None = None, beta: float = 1.0, nu_C: float = 0.5, kappa: float = 1.0,
                 s_fraction: float = 0.5, rel_tol: float = 0.05, pole_tol: float = 0.10,
                 taylor_tol: float = 0.02, taylor_order: int = 3, cross_check_h: float = 1.0, seed: int = 0,
                 jobs: int = 1) -> dict:
    """Ideal Bose gas in the d = 2 harmonic trap with ε = h² and -βμ = ε/ν_C.

    The test symbol is a = e^{-κα0}; its Weyl quantization commutes with the
    oscillator and is diagonal on each level, so Φ_{a,h}(s) = exp DT(s) is
    a sum over levels of one-particle logarithms.
    """
    plan = plan or ScalingPlan.dyadic(3, 10, eps_power=2.0)
    a0 = 1.0
    r_a = 1.0 / (4 * nu_C * a0)
    s_star = s_fraction * r_a
    I_th = _bec_thermal_integral(beta, kappa)

    def phi0(s):
        return np.exp(s * I_th) / (1 - s * nu_C * a0)

    def levels_for(h):
        return int(math.ceil(60.0 / (beta * h))) + 2

    def one(h):
        eps = plan.eps(h)
        nl = levels_for(h)
        DT, cond = _bec_DT(h, s_star, eps, beta, nu_C, kappa, nl)
        value = float(np.real(np.exp(DT)))
        predicted = float(phi0(s_star))
        lam = bec_level_eigenvalues(h, kappa, np.arange(min(nl, 200)))
        calculus = float(np.max(np.abs(np.exp(-kappa * h * (np.arange(lam.size) + 1)) - lam)))
        return {"h": h, "eps": eps, "levels": nl, "s": s_star, "value": value, "predicted": predicted,
                "abs_error": abs(value - predicted), "rel_error": abs(value - predicted) / abs(predicted),
                "tolerance": rel_tol,
                "condensate": float(np.real(cond)), "condensate_predicted": -math.log(1 - s_star * nu_C * a0),
                "thermal": float(np.real(DT - cond)), "thermal_predicted": s_star * I_th,
                "calculus_discrepancy": calculus}

    per_h = _map_h(one, plan.h_schedule, jobs)
    fitted = fit_order(per_h)
    h_min = plan.h_schedule[-1]
    eps_min = plan.eps(h_min)
    nl = levels_for(h_min)
    s_pole = 1.0 / (nu_C * a0)
    s_div = float(1.0 / (nu_C * bec_level_eigenvalues(h_min, kappa, [0])[0]))

    # pole location from a fit of log Φ_h on real s below the divergence
    s_fit = np.linspace(0.05, 0.95, 40) * min(s_div, s_pole)
    logphi = np.real(_bec_DT(h_min, s_fit, eps_min, beta, nu_C, kappa, nl)[0])

    def model(s, logA, sp, B):
        return logA - np.log(np.abs(1 - s / sp)) + B * s

    popt, _ = so.curve_fit(model, s_fit, logphi, p0=(0.0, 1.5 * s_pole, I_th))
    fitted_pole = float(popt[1])

    def fitted_phi(s):
        logA, sp, B = popt
        return np.exp(logA + B * s) / (1 - s / sp)

    # Taylor coefficients: Φ_h at the smallest h, exact Φ_0 and the fitted model
    rho = 0.5 * s_pole
    fac = np.array([math.factorial(k) for k in range(taylor_order + 1)], dtype=float)
    d_h = np.real(taylor_coefficients(
        lambda s: np.exp(_bec_DT(h_min, s, eps_min, beta, nu_C, kappa, nl)[0]), rho, taylor_order + 1)) * fac
    d_0 = np.real(taylor_coefficients(phi0, rho, taylor_order + 1)) * fac
    d_fit = np.real(taylor_coefficients(fitted_phi, rho, taylor_order + 1)) * fac
    taylor = [{"p": p, "phi_h": float(d_h[p]), "phi_0": float(d_0[p]), "fitted": float(d_fit[p]),
               "rel_error": float(abs(d_h[p] - d_0[p]) / abs(d_0[p])),
               "fitted_rel_error": float(abs(d_fit[p] - d_h[p]) / abs(d_h[p]))} for p in range(1, taylor_order + 1)]

    # ground-state projector: Ψ_K(s) = (1 - c0)/(1 - c0 e^{εs}); p!·coefficient -> p! ν_C^p
    c0 = math.exp(-eps_min / nu_C)
    psi = np.real(taylor_coefficients(lambda s: (1 - c0) / (1 - c0 * np.exp(eps_min * s)), 1.0 / nu_C / 2,
                                      taylor_order + 1)) * fac
    psi_rows = [{"p": p, "moment": float(psi[p]), "predicted": math.factorial(p) * nu_C**p,
                 "rel_error": float(abs(psi[p] - math.factorial(p) * nu_C**p) / (math.factorial(p) * nu_C**p))}
                for p in range(1, taylor_order + 1)]

    cross = _bec_fock_cross_check(cross_check_h, plan.eps(cross_check_h), beta, nu_C, kappa, s_star, seed)
    verdicts = {
        "relative_error": per_h[-1]["rel_error"] <= rel_tol,
        "pole": abs(fitted_pole - s_pole) <= pole_tol * s_pole,
        "taylor_reciprocity": all(max(r["rel_error"], r["fitted_rel_error"]) <= taylor_tol for r in taylor),
        "ground_state_moments": all(r["rel_error"] <= taylor_tol for r in psi_rows),
        "fock_cross_check": cross["rel_gap"] <= 1e-8,
    }
    params = {"beta": beta, "nu_C": nu_C, "kappa": kappa, "s": s_star, "r_a": r_a,
              "h_schedule": list(plan.h_schedule), "eps_power": plan.eps_power}
    tables = {"main": per_h, "taylor": taylor, "ground_state": psi_rows}
    return _report("bec", params, per_h, fitted, verdicts, tables,
                   pole={"fitted": fitted_pole, "predicted": s_pole, "divergence_at_h_min": s_div,
                         "fit_parameters": [float(x) for x in popt]},
                   cross_check=cross)


def _bec_fock_cross_check(h, eps, beta, nu_C, kappa, s, seed) -> dict:
    """Fock-space Gibbs state on the two lowest levels (three modes) in a random basis."""
    rng = np.random.Generator(np.random.Philox(seed))
    levels = np.array([0, 1, 1])
    Z = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    U, _ = np.linalg.qr(Z)
    H = U @ np.diag(h * levels).astype(complex) @ U.conj().T
    A = U @ np.diag(bec_level_eigenvalues(h, kappa, levels)).astype(complex) @ U.conj().T
    spec = GibbsSpec(H, beta, -eps / (beta * nu_C), BOSON)
    fock = TruncatedFock(3, BOSON, bosonic_gibbs_cutoff(spec.C, 1e-13), eps)
    state = gibbs_state(spec, fock)
    fock_val = complex(generating_Phi(state, A, s))
    lam = bec_level_eigenvalues(h, kappa, levels)
    logc = -beta * h * levels - eps / nu_C
    DT = -np.sum(np.log(-np.expm1(logc + eps * s * lam)) - np.log(-np.expm1(logc)))
    closed = float(np.exp(DT))
    return {"h": h, "eps": eps, "N_max": fock.N_max, "fock": fock_val.real, "closed_form": closed,
            "rel_gap": abs(fock_val - closed) / abs(closed)}


def scenario_singular_trace(plan: ScalingPlan | None = None, fw: SingularWeight | None = None,
                            a: Symbol | None = None, c_values=(0.5, 1.0, 2.0), rel_tol: float = 0.05,
                            scaling_tol: float = 0.03) -> dict:
    """h Tr[f(H + c h^{1/κ0}) a^{W,h}] for the harmonic trap, d = 1."""
    plan = plan or ScalingPlan.dyadic(4, 9)
    fw = fw or SingularWeight.standard()
    a = a or gaussian_symbol(1.0)
    c_values = [float(c) for c in c_values]
    res = singular_trace(fw, harmonic_symbol(), a, plan.h_schedule, lambda h: harmonic_grid(h, a.radius),
                         c_values=c_values)
    rows = res["rows"]
    for r in rows:
        r["tolerance"] = rel_tol
    ref_c = 1.0 if 1.0 in c_values else c_values[0]
    per_h = [r for r in rows if r["c"] == ref_c]
    fitted = fit_order(per_h)
    h_min = plan.h_schedule[-1]
    last = {r["c"]: r for r in rows if r["h"] == h_min}
    scaling = []
    for c in c_values:
        ratio = last[c]["condensate"] / last[ref_c]["condensate"]
        expect = (c / ref_c) ** -fw.kappa0
        scaling.append({"c": c, "ratio": ratio, "predicted": expect, "rel_error": abs(ratio - expect) / expect})
    verdicts = {
        "relative_error": per_h[-1]["rel_error"] <= rel_tol,
        "condensate_scaling": all(s["rel_error"] <= scaling_tol for s in scaling),
    }
    params = {"kappa0": fw.kappa0, "kappa_inf": fw.kappa_inf, "c_values": c_values,
              "h_schedule": list(plan.h_schedule), "symbol": a.name}
    return _report("singular_trace", params, per_h, fitted, verdicts,
                   {"main": per_h, "all_c": rows, "condensate_scaling": scaling})


SCENARIOS = {
    "coherent": scenario_coherent,
    "fermi_gibbs": scenario_fermi_gibbs,
    "bec": scenario_bec,
    "singular_trace": scenario_singular_trace,
}
