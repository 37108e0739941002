import math

import numpy as np
import pytest

from fockbench.semiclassics import (GridDensity, MomentDictionary, ScalingPlan, TwoScaleSymbol, bec_level_eigenvalues,
                                    coherent_grid_family, default_dictionary, doublescale_quantize, estimate_triple,
                                    estimate_triples, family_grid, fermi_density, hermite_functions,
                                    intermediate_family, mixture_family, quantum_family, scenario_bec,
                                    scenario_coherent, scenario_fermi_gibbs, scenario_singular_trace,
                                    semiclassical_family, separating_check, stationary_family, tightness_diagnostic,
                                    unit_symbol, wavepacket)
from fockbench.weyl import AliasingError, PhaseSpaceGrid, bump, gaussian_symbol, weyl_quantize

SHORT = (2.0**-4, 2.0**-5, 2.0**-6)


@pytest.mark.parametrize("schedule", [(), (0.5, 0.5), (0.25, 0.5), (0.5, -0.1)])
def test_plan_rejects_bad_schedules(schedule):
    with pytest.raises(ValueError):
        ScalingPlan(schedule)


def test_plan_eps_rule():
    plan = ScalingPlan.dyadic(2, 4, eps_power=2.0, eps_scale=3.0)
    assert plan.h_schedule == (0.25, 0.125, 0.0625)
    assert plan.eps_schedule == pytest.approx([3 / 16, 3 / 64, 3 / 256])
    with pytest.raises(ValueError):
        ScalingPlan((0.5,), eps_power=0.0)


def test_dictionary_inserts_unit_and_checks_names():
    g = gaussian_symbol(1.0)
    d = MomentDictionary([g], [0.5])
    assert d.names[0] == "one" and d.references == [None, 0.5]
    with pytest.raises(ValueError):
        MomentDictionary([g, g])
    assert unit_symbol()(np.zeros((3, 2))).shape == (3,)
    assert default_dictionary().names == ["one", "bump_origin", "bump_X0"]


def test_unit_symbol_quantizes_to_identity():
    grid = PhaseSpaceGrid(1, 4.0, 16)
    assert np.allclose(weyl_quantize(unit_symbol(), 0.5, 0.5, grid), np.eye(16))


def test_doublescale_reduces_to_unscaled_quantization():
    # χ(X)α(Y) with α Schwartz: a(X, X/√h)^{W,h} -> α^W(x, D) on the unscaled grid
    alpha = gaussian_symbol(0.5)
    a = TwoScaleSymbol(lambda X, Y: bump(np.linalg.norm(X, axis=-1)) * alpha(Y), x_radius=1.0, y_radius=8.0)
    h = 2.0**-8
    grid = family_grid(h, 1.0)
    M = doublescale_quantize(a, h, grid)
    ref = weyl_quantize(alpha, 1.0, 0.5, grid, check=False)
    B = hermite_functions(grid, 12)
    assert np.linalg.norm(B.T @ (M - ref) @ B, 2) <= 0.05


def test_doublescale_homogeneous_tail_is_bounded():
    a = TwoScaleSymbol(
        lambda X, Y: bump(np.linalg.norm(X, axis=-1)) * Y[..., 0] / np.maximum(np.linalg.norm(Y, axis=-1), 1e-300),
        x_radius=1.0, y_radius=3.0)
    for h in (2.0**-4, 2.0**-6):
        M = doublescale_quantize(a, h, family_grid(h, 1.0))
        assert np.linalg.norm(M, 2) <= 1.5


def test_doublescale_y_guard():
    a = TwoScaleSymbol(lambda X, Y: bump(np.linalg.norm(X, axis=-1)), x_radius=1.0, y_radius=100.0)
    with pytest.raises(AliasingError):
        doublescale_quantize(a, 0.25, PhaseSpaceGrid(1, 8.0, 64))


def test_hermite_functions_orthonormal():
    grid = family_grid(2.0**-6)
    B = hermite_functions(grid, 10)
    assert np.allclose(B.T @ B, np.eye(10), atol=1e-10)
    assert np.allclose(np.abs(wavepacket(grid, (0, 0))), B[:, 0], atol=1e-12)


def test_grid_density_validation():
    grid = PhaseSpaceGrid(1, 4.0, 8)
    with pytest.raises(ValueError):
        GridDensity(grid, np.ones(8), [-1.0])
    with pytest.raises(ValueError):
        GridDensity(grid, np.ones((4, 1)), [1.0])
    g = GridDensity(grid, np.eye(8)[:, 0], [0.5])
    assert g.trace == 0.5 and g.matrix()[0, 0] == 0.5


@pytest.fixture(scope="module")
def short_triples():
    fams = {"quantum": quantum_family(), "semiclassical": semiclassical_family(),
            "intermediate": intermediate_family()}
    fams["mixture"] = mixture_family([fams["quantum"], fams["semiclassical"]], [0.5, 0.5])
    return estimate_triples(fams, default_dictionary(), SHORT)


@pytest.mark.parametrize("name,expected", [
    ("quantum", (0, 0, 1)),
    ("semiclassical", (1, 0, 0)),
    ("intermediate", (0, 1, 0)),
    ("mixture", (0.5, 0, 0.5)),
])
def test_triple_components(short_triples, name, expected):
    t = short_triples[name]
    assert np.allclose(t.components, expected, atol=0.03)
    assert t.mass == pytest.approx(1.0, abs=1e-10)
    assert abs(t.consistency_gap) <= 0.03


def test_intermediate_direction(short_triples):
    t = short_triples["intermediate"]
    assert t.nu_I_direction[0] == pytest.approx(1.0, abs=0.05)


def test_separating_check(short_triples):
    rep = separating_check(short_triples["quantum"])
    assert rep["separating"] and rep["consistent"]
    assert not separating_check(short_triples["intermediate"])["separating"]
    assert "nu_I_from_identity" in short_triples["quantum"].summary()


def test_stationary_family_recovers_gamma0():
    rng = np.random.default_rng(0)
    V = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    g0 = V @ V.conj().T
    g0 /= np.trace(g0).real
    t = estimate_triple(stationary_family(g0), default_dictionary(), SHORT, n_hermite=4)
    assert np.abs(t.gamma0 - g0).max() <= 1e-10
    with pytest.raises(ValueError):
        stationary_family(-np.eye(2))


def test_tightness_escaping_and_localized():
    h_sched = (1 / 4, 1 / 8, 1 / 16)
    grid = PhaseSpaceGrid(1, 96.0, 1024)
    escaping = coherent_grid_family(lambda h: (1.0 / h, 0.0), grid=grid)
    localized = coherent_grid_family(lambda h: (0.5, 0.0), grid=grid)
    deltas = (1.0, 2.0)
    esc = tightness_diagnostic(escaping, 1.0, deltas, h_sched)
    loc = tightness_diagnostic(localized, 1.0, deltas, h_sched)
    assert not esc["adapted"] and loc["adapted"]
    assert esc["table"][-1]["limsup"] > 1.0
    assert loc["table"][-1]["limsup"] < 0.02
    assert loc["moment_bounded"]


def test_fermi_density_limits():
    assert fermi_density(np.array([-1e6, 0.0, 1e6]), 1.0) == pytest.approx([1.0, 0.5, 0.0])


def test_bec_level_ground_value():
    assert bec_level_eigenvalues(1.0, 1.0, [0])[0] == pytest.approx(1 / 2.25)


def test_scenario_coherent_short():
    rep = scenario_coherent(ScalingPlan(SHORT[:2]), p_max=2)
    assert all(rep["verdicts"].values()), rep["verdicts"]


def test_scenario_fermi_short():
    rep = scenario_fermi_gibbs(ScalingPlan.dyadic(3, 5))
    assert rep["verdicts"]["fock_cross_check"]
    errs = [r["rel_error"] for r in rep["per_h"]]
    assert errs[0] > errs[1] > errs[2]
    assert rep["fitted_order"] > 0.8


def test_scenario_bec_short():
    rep = scenario_bec(ScalingPlan.dyadic(3, 6, eps_power=2.0))
    assert rep["verdicts"]["fock_cross_check"] and rep["verdicts"]["ground_state_moments"]
    assert rep["per_h"][-1]["rel_error"] < rep["per_h"][0]["rel_error"]


def test_scenario_singular_short():
    rep = scenario_singular_trace(ScalingPlan.dyadic(3, 5))
    errs = [r["rel_error"] for r in rep["per_h"]]
    assert errs[-1] < errs[0]
    assert {s["c"] for s in rep["tables"]["condensate_scaling"]} == {0.5, 1.0, 2.0}
