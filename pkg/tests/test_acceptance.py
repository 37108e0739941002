"""Acceptance criteria 1-10, one PASS/FAIL line each."""
import itertools
import time

import numpy as np
import pytest

from fockbench.cli import EXIT_OK, main
from fockbench.fock_core import BOSON, FERMION, sector_dimension
from fockbench.operators import TruncatedFock
from fockbench.semiclassics import (ScalingPlan, default_dictionary, estimate_triples, intermediate_family,
                                    quantum_family, scenario_bec, scenario_fermi_gibbs, scenario_singular_trace,
                                    semiclassical_family)
from fockbench.states import (FockState, GibbsSpec, coherent_cutoff, coherent_state, fermionic_wick_bound,
                              gibbs_state, quasifree_trace, quasifree_trace_sector_sum, reduced_density,
                              vector_power)
from fockbench.wick import WickKernel, compose_wick, dGamma_power_expansion


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def _report(capsys, number, ok, detail, start, budget_s):
    elapsed = time.perf_counter() - start
    ok = bool(ok) and elapsed <= budget_s
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} {detail} ({elapsed:.1f} s of {budget_s} s)")
    return ok


def test_criterion_01_wick_composition(capsys):
    start = time.perf_counter()
    rng = _rng(1)
    ranks = [r for r in itertools.product(range(5), repeat=4) if r[0] + r[2] <= 4 and r[1] + r[3] <= 4]
    worst, checked, empty = 0.0, 0, 0
    for stat in (BOSON, FERMION):
        for m in (1, 2, 3):
            for eps in (1.0, 0.3, 0.05):
                fock = TruncatedFock(m, stat, 6, eps)
                for p1, q1, p2, q2 in ranks:
                    if max(p1, q1, p2, q2) > fock.N_max:
                        # fermionic sectors above m particles are zero-dimensional
                        empty += 1
                        continue
                    b1 = WickKernel.random(rng, stat, m, p1, q1)
                    b2 = WickKernel.random(rng, stat, m, p2, q2)
                    try:
                        res = compose_wick(b1, b2, fock)
                    except ValueError:
                        empty += 1
                        continue
                    worst = max(worst, res["max_diff"])
                    checked += 1
    ok = _report(capsys, 1, worst <= 1e-10, f"max diff {worst:.2e} over {checked} compositions "
                 f"({empty} with empty sectors)", start, 120)
    assert ok


def test_criterion_02_dgamma_power_bound(capsys):
    start = time.perf_counter()
    violations, worst_ratio, route = 0, 0.0, 0.0
    for stat in (BOSON, FERMION):
        rng = _rng(2)
        for i in range(50):
            m = 1 + i % 3
            eps = (1.0, 0.3, 0.05)[(i // 3) % 3]
            b = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
            b *= rng.uniform(0.2, 2.0) / np.linalg.norm(b, 2)
            fock = TruncatedFock(m, stat, 6, eps)
            for p in (1, 2, 3, 4):
                res = dGamma_power_expansion(b, p, fock)
                violations += not res["holds"]
                worst_ratio = max(worst_ratio, res["weighted_norm"] / res["bound"])
                route = max(route, res["route_difference"])
    ok = _report(capsys, 2, violations == 0 and route <= 1e-9,
                 f"{violations} violations, worst norm/bound {worst_ratio:.3f}, route gap {route:.1e}", start, 120)
    assert ok


def test_criterion_03_quasifree_trace(capsys):
    start = time.perf_counter()
    worst, tail = 0.0, 0.0
    for stat in (BOSON, FERMION):
        rng = _rng(3)
        for i in range(50):
            m = 1 + i % 6 if stat is FERMION else 1 + i % 4
            C = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
            if i % 2 == 0:
                C = C + C.conj().T
            if stat is BOSON:
                C *= rng.uniform(0.1, 0.8) / np.linalg.norm(C, 2)
            closed = quasifree_trace(C, stat)
            res = quasifree_trace_sector_sum(C, stat, tol=1e-12)
            worst = max(worst, abs(closed - res["value"]) / abs(closed))
            tail = max(tail, res["tail_bound"])
    ok = _report(capsys, 3, worst <= 1e-10 and tail < 1e-10, f"max rel diff {worst:.2e}, tail {tail:.1e}",
                 start, 60)
    assert ok


def test_criterion_04_coherent_reduced_densities(capsys):
    start = time.perf_counter()
    rng = _rng(4)
    worst = 0.0
    for m in (1, 2):
        for z2 in (0.5, 1.0, 2.0):
            z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            z *= np.sqrt(z2) / np.linalg.norm(z)
            for eps in (0.2, 0.1, 0.05):
                fock = TruncatedFock(m, BOSON, coherent_cutoff(z, eps), eps)
                state = coherent_state(z, fock)
                for p in (1, 2, 3):
                    zp = vector_power(z, p, BOSON)
                    diff = reduced_density(state, p).matrix - np.outer(zp, zp.conj())
                    worst = max(worst, float(np.abs(np.linalg.eigvalsh(diff)).sum()))
    ok = _report(capsys, 4, worst <= 1e-6, f"max trace distance {worst:.2e}", start, 120)
    assert ok


def test_criterion_05_fermi_gibbs(capsys):
    start = time.perf_counter()
    rep = scenario_fermi_gibbs(ScalingPlan.dyadic(4, 8))
    last = rep["per_h"][-1]
    ok = last["rel_error"] <= 0.03 and rep["fitted_order"] >= 0.8 and last["product_deviation_p2"] <= 0.05
    ok = _report(capsys, 5, ok, f"rel error {last['rel_error']:.4f} at h=2^-8, order {rep['fitted_order']:.3f}, "
                 f"p=2 deviation {last['product_deviation_p2']:.4f}", start, 600)
    assert ok


def test_criterion_06_singular_trace(capsys):
    start = time.perf_counter()
    rep = scenario_singular_trace(ScalingPlan.dyadic(4, 9), c_values=(0.5, 1.0, 2.0))
    last = rep["per_h"][-1]
    scaling = max(s["rel_error"] for s in rep["tables"]["condensate_scaling"])
    ok = last["rel_error"] <= 0.05 and scaling <= 0.03
    ok = _report(capsys, 6, ok, f"rel error {last['rel_error']:.4f} at h={last['h']:g}, "
                 f"c^-1/2 scaling error {scaling:.4f}", start, 600)
    assert ok


def test_criterion_07_bec_generating_function(capsys):
    start = time.perf_counter()
    rep = scenario_bec(ScalingPlan.dyadic(3, 10, eps_power=2.0), nu_C=0.5, s_fraction=0.5)
    last = rep["per_h"][-1]
    pole = rep["pole"]
    pole_err = abs(pole["fitted"] - pole["predicted"]) / pole["predicted"]
    ok = last["rel_error"] <= 0.05 and pole_err <= 0.10
    ok = _report(capsys, 7, ok, f"rel error {last['rel_error']:.4f} at h={last['h']:g}, fitted pole "
                 f"{pole['fitted']:.4f} vs {pole['predicted']:.4f}", start, 1200)
    assert ok


def test_criterion_08_fermionic_vanishing(capsys):
    start = time.perf_counter()
    rng = _rng(8)
    m = 4
    eps_sweep = (0.2, 0.1, 0.05, 0.025, 0.0125)
    violations, checked, worst_slope = 0, 0, 0.0
    for p in (1, 2, 3):
        D = sector_dimension(FERMION, m, p)
        for _ in range(10):
            # Gibbs states with H - μ >= 0; for p = 1 also arbitrary pure states
            H = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
            spec = GibbsSpec(H @ H.conj().T / m, rng.uniform(0.2, 3.0), 0.0, FERMION)
            r = int(rng.integers(1, D + 1))
            V = rng.standard_normal((D, r)) + 1j * rng.standard_normal((D, r))
            K = WickKernel(p, p, V @ V.conj().T, FERMION, m)
            psi = rng.standard_normal(2**m) + 1j * rng.standard_normal(2**m)
            values = []
            for eps in eps_sweep:
                fock = TruncatedFock(m, FERMION, m, eps)
                res = fermionic_wick_bound(gibbs_state(spec, fock), K)
                violations += not res["holds"]
                checked += 1
                values.append(res["value"])
                if p == 1:
                    pure = FockState.pure(fock, psi / np.linalg.norm(psi))
                    violations += not fermionic_wick_bound(pure, K)["holds"]
                    checked += 1
            slope = np.polyfit(np.log(eps_sweep), np.log(values), 1)[0]
            worst_slope = max(worst_slope, abs(slope - p))
    ok = _report(capsys, 8, violations == 0 and worst_slope <= 0.1,
                 f"{violations} violations in {checked} checks, max |slope - p| {worst_slope:.1e}", start, 60)
    assert ok


def test_criterion_09_multiscale_triples(capsys):
    start = time.perf_counter()
    families = {"quantum": quantum_family(), "semiclassical": semiclassical_family(),
                "intermediate": intermediate_family()}
    expected = {"quantum": (0, 0, 1), "semiclassical": (1, 0, 0), "intermediate": (0, 1, 0)}
    triples = estimate_triples(families, default_dictionary(), ScalingPlan.dyadic(4, 8).h_schedule)
    comp_err = max(float(np.max(np.abs(np.array(triples[k].components) - expected[k]))) for k in families)
    gap = max(abs(t.consistency_gap) for t in triples.values())
    ok = _report(capsys, 9, comp_err <= 0.02 and gap <= 0.02,
                 f"max component error {comp_err:.4f}, max consistency gap {gap:.4f}", start, 300)
    assert ok


def test_criterion_10_invariant_suite(capsys, tmp_path):
    start = time.perf_counter()
    status = main(["verify-core", "--out", str(tmp_path), "--seed", "0"])
    ok = _report(capsys, 10, status == EXIT_OK, f"verify-core exit {status}", start, 300)
    assert ok
