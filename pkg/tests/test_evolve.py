import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wedgeflow.assembly import WedgeGrid
from wedgeflow.evolve import (
    Evolver,
    c_epsilon,
    empirical_prefactor,
    energy_defect,
    evolve,
    fit_decay,
    from_self_similar,
    gaussian_bump_datum,
    generic_datum,
    gronwall_bound,
    ground_state_datum,
    pointwise_bound,
    prepare_initial,
    run_and_fit,
    step,
    to_self_similar,
)
from wedgeflow.geometry import BUILTIN_PROFILES, builtin_profile
from wedgeflow.spectral import eigenvalue_trajectory

STRAIGHT = builtin_profile("straight")
SIN_CAPPED = builtin_profile("sin-capped")


def test_self_similar_examples():
    assert to_self_similar(5.0, 0.0) == (5.0, 0.0)
    rho, s = to_self_similar(6.0, 3.0)
    assert rho == 3.0 and s == pytest.approx(math.log(4.0), rel=1e-15)
    with pytest.raises(ValueError):
        to_self_similar(-1.0, 1.0)
    with pytest.raises(ValueError):
        from_self_similar(1.0, -1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(0.0, 20.0))
def test_self_similar_round_trip(rho, s):
    r, t = from_self_similar(rho, s)
    rho2, s2 = to_self_similar(r, t)
    assert abs(rho2 - rho) <= 1e-14 * rho
    assert abs(s2 - s) <= 1e-14 * max(1.0, s)


def test_prepare_initial():
    g = WedgeGrid(1.0, 12.0, 60, 12)
    zero = prepare_initial(g, lambda r, p: 0 * r)
    assert zero.norm == 0 and not zero.phi_vec.any()
    gs = prepare_initial(g, ground_state_datum(1.0))
    rho, phi = g.mesh()
    expected = np.sqrt(rho) * np.exp(-rho**2 / 8) * np.sin(phi / 2)
    assert np.allclose(gs.phi_vec, expected.reshape(-1), rtol=1e-12)
    bump = prepare_initial(g, gaussian_bump_datum(1.0))
    assert np.all(np.isfinite(bump.phi_vec)) and bump.norm > 0
    unit = prepare_initial(g, generic_datum(1.0), normalize=True)
    assert unit.norm == pytest.approx(1.0, rel=1e-14)
    assert unit.norm**2 == pytest.approx(unit.phi_vec @ (g.mass_diagonal() * unit.phi_vec), rel=1e-12)
    with pytest.raises(ValueError, match="decay"):
        prepare_initial(g, lambda r, p: np.exp(-r**2 / 10) * np.sin(p / 2))


def test_prepare_initial_from_array():
    g = WedgeGrid(1.0, 12.0, 20, 6)
    vals = g.sample(gaussian_bump_datum(1.0))
    assert np.array_equal(prepare_initial(g, vals).phi_vec, prepare_initial(g, gaussian_bump_datum(1.0)).phi_vec)


def test_zero_stays_zero():
    g = WedgeGrid(1.0, 12.0, 30, 8)
    st0 = prepare_initial(g, lambda r, p: 0 * r)
    st1 = step(st0, 0.1, g, SIN_CAPPED)
    assert st1.norm == 0 and st1.s == pytest.approx(0.1)
    with pytest.raises(ValueError):
        step(st0, 0.0, g, SIN_CAPPED)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(sorted(BUILTIN_PROFILES)), st.floats(1e-3, 5.0), st.floats(0.0, 6.0), st.integers(0, 10**6))
def test_norm_dissipation_every_step(name, ds, s0, seed):
    g = WedgeGrid(0.5, 12.0, 24, 8)
    v = np.random.default_rng(seed).standard_normal(g.size)
    from wedgeflow.evolve import SelfSimilarState

    state = SelfSimilarState(s0, v, math.sqrt(v @ (g.mass_diagonal() * v)))
    ev = Evolver(g, builtin_profile(name))
    for _ in range(3):
        new = ev.step(state, ds)
        assert new.norm <= state.norm * (1 + 1e-13)
        state = new


@pytest.mark.parametrize("a", [1.0, 0.25])
def test_straight_ground_state_explicit_solution(a):
    g = WedgeGrid(a, 12.0, 200, 32)
    ds = 0.05
    phi0 = prepare_initial(g, ground_state_datum(a), normalize=True)
    series = evolve(g, STRAIGHT, phi0, 6.0, ds)
    gamma = 0.5 + 1 / (4 * a)
    for s, n in series[1:]:
        rel = abs(n / math.exp(-gamma * s) - 1.0)
        assert rel / s <= 10 * ds**2


def test_energy_defect_second_order():
    g = WedgeGrid(1.0, 12.0, 60, 16)
    phi0 = prepare_initial(g, generic_datum(1.0), normalize=True)
    coarse = energy_defect(g, SIN_CAPPED, phi0, 2.0, 0.1)
    fine = energy_defect(g, SIN_CAPPED, phi0, 2.0, 0.05)
    ratio = coarse["max_cumulative"] / fine["max_cumulative"]
    assert 3.5 <= ratio <= 4.5


def test_fit_decay_exact_exponential():
    s = np.linspace(0, 10, 101)
    fit = fit_decay(list(zip(s, 2.0 * np.exp(-0.8 * s))))
    assert fit.gamma_hat == pytest.approx(0.8, rel=1e-12)
    assert fit.window == (5.0, 10.0)
    assert fit.rms_residual < 1e-12
    assert fit.log_intercept == pytest.approx(math.log(2.0))
    d = fit.to_dict(1.0)
    assert d["gamma_theory"] == 0.75 and d["relative_gap"] == pytest.approx(0.05 / 0.75)


def test_fit_decay_validation():
    s = np.linspace(0, 1, 11)
    series = list(zip(s, np.exp(-s)))
    with pytest.raises(ValueError, match="at least 5"):
        fit_decay(series, (0.0, 0.25))
    with pytest.raises(ValueError):
        fit_decay(series, (0.5, 0.5))


def test_run_and_fit_window_checks():
    g = WedgeGrid(1.0, 12.0, 20, 6)
    phi0 = prepare_initial(g, ground_state_datum(1.0))
    with pytest.raises(ValueError):
        run_and_fit(g, STRAIGHT, phi0, 1.0, 0.1, fit_window=(0.5, 2.0))
    with pytest.raises(ValueError, match="multiple"):
        evolve(g, STRAIGHT, phi0, 1.0, 0.3)


def test_gronwall_bound_examples():
    b = gronwall_bound([(0.0, 0.7), (1.0, 0.7), (3.0, 0.7)], 2.0)
    assert [x for _, x in b] == pytest.approx([2.0, 2 * math.exp(-0.7), 2 * math.exp(-2.1)], rel=1e-14)


def test_gronwall_attained_for_straight_ground_state():
    g = WedgeGrid(1.0, 12.0, 100, 24)
    phi0 = prepare_initial(g, ground_state_datum(1.0), normalize=True)
    series = evolve(g, STRAIGHT, phi0, 2.0, 0.05)
    traj = eigenvalue_trajectory(g, STRAIGHT, [s for s, _ in series])
    for (s, n), (_, b) in zip(series, gronwall_bound(traj, 1.0)):
        assert n == pytest.approx(b, rel=1e-3 * max(s, 1e-3))


def test_gronwall_dominates_curved_run():
    g = WedgeGrid(1.0, 12.0, 60, 16)
    phi0 = prepare_initial(g, generic_datum(1.0), normalize=True)
    series = evolve(g, SIN_CAPPED, phi0, 3.0, 0.01)
    s_grid = np.round(np.arange(0, 3.0001, 0.1), 10)
    bound = dict(gronwall_bound(eigenvalue_trajectory(g, SIN_CAPPED, s_grid), 1.0))
    for s, n in series:
        key = round(s, 10)
        if key in bound:
            assert n <= bound[key] * (1 + 1e-3)


def test_c_epsilon_examples():
    assert c_epsilon(1 / (4 * math.pi)) == pytest.approx(2**-0.5, rel=1e-15)
    assert c_epsilon(1.0) == (4 * math.pi) ** -1 * (2 * math.pi) ** 0.5
    with pytest.raises(ValueError):
        c_epsilon(0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.0, 0.5), st.floats(0.6, 3.0))
def test_pointwise_bound_decreasing(eps, delta, gamma):
    t = np.linspace(eps, eps + 100, 200)
    b = pointwise_bound(1.0, t, eps, delta, gamma, 1.0)
    assert np.all(np.diff(b) < 0)
    assert b[0] == pytest.approx(c_epsilon(eps))


def test_pointwise_bound_requires_t_after_eps():
    with pytest.raises(ValueError):
        pointwise_bound(1.0, 0.1, 0.5, 0.1, 1.0, 1.0)


def test_empirical_prefactor():
    s = np.linspace(0, 10, 101)
    fit = fit_decay(list(zip(s, 3.0 * np.exp(-s))))
    assert empirical_prefactor(fit, 1.0, 0.0) == pytest.approx(1.0)
    assert empirical_prefactor(fit, 1.0, 0.5) == pytest.approx(1.0)
