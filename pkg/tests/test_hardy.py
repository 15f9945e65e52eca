import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wedgeflow.assembly import WedgeGrid
from wedgeflow.geometry import builtin_profile
from wedgeflow.hardy import (
    angular_poincare,
    angular_poincare_numeric,
    certify_global,
    critical_mode_quotient,
    hardy_remainder,
    local_hardy_constant,
    local_hardy_problem,
    log_hardy_check,
    log_hardy_family,
    smoothstep_sup_derivative,
    weight_infimum,
    weighted_norm_sq,
)

STRAIGHT = builtin_profile("straight")
SIN_CAPPED = builtin_profile("sin-capped")


def test_angular_poincare_values():
    assert angular_poincare(1.0) == 0.25
    assert angular_poincare(0.5) == 1.0
    with pytest.raises(ValueError):
        angular_poincare(0.0)


@pytest.mark.parametrize("a", [1.0, 0.5, 0.25, 0.125])
def test_angular_poincare_three_point(a):
    n = 2000
    h = 2 * math.pi * a / (n + 1)
    # closed form of the three-point Dirichlet eigenvalue
    oracle = 4 / h**2 * math.sin(math.pi * h / (4 * math.pi * a)) ** 2
    num = angular_poincare_numeric(a, n)
    assert num == pytest.approx(oracle, rel=1e-10)
    assert abs(num - angular_poincare(a)) / angular_poincare(a) < 1e-4


def test_local_problem_structure():
    prob = local_hardy_problem(SIN_CAPPED, 6.0, 1.0, 40, 12)
    assert prob.grid_R.outer == "neumann"
    assert abs(prob.stiff - prob.stiff.T).max() <= 1e-13 * abs(prob.stiff).max()
    with pytest.raises(ValueError):
        local_hardy_problem(SIN_CAPPED, -1.0)


def test_straight_critical_mode_quotient():
    g = WedgeGrid(1.0, 5.0, 60, 32, outer="neumann")
    q = critical_mode_quotient(g, STRAIGHT)
    assert q <= 1e-8
    # only the angular three-point defect remains, which is tiny
    assert abs(q) < 1e-3


def test_straight_local_constant_shrinks():
    raws = [local_hardy_constant(STRAIGHT, 5.0, 1.0, n, m).raw for n, m in [(30, 8), (60, 16), (120, 32)]]
    assert abs(raws[0]) > abs(raws[1]) > abs(raws[2])
    res = local_hardy_constant(STRAIGHT, 5.0, 1.0, 120, 32)
    assert res.lambda_R == 0.0 and res.raw < 0
    assert res.residual <= 1e-10


def test_sin_capped_local_constant_positive():
    lams = [local_hardy_constant(SIN_CAPPED, 6.0, 1.0, n, m).lambda_R for n, m in [(60, 16), (120, 32)]]
    assert min(lams) > 5e-3
    assert abs(lams[1] - lams[0]) / lams[1] < 0.2


def test_local_constant_not_increasing_in_R():
    # same mesh width, nested domains
    small = local_hardy_constant(SIN_CAPPED, 6.0, 1.0, 60, 16).raw
    large = local_hardy_constant(SIN_CAPPED, 8.0, 1.0, 80, 16).raw
    assert large <= small + 1e-12


def test_local_constant_nonnegative_up_to_discretisation():
    for name in ("straight", "sin-capped", "sinc", "log3"):
        res = local_hardy_constant(builtin_profile(name), 4.0, 1.0, 60, 16)
        assert res.raw >= -1e-3


def test_log_hardy_examples():
    assert log_hardy_check(1.0, lambda r: 0.0, (2.0, 3.0)) == (0.0, 0.0)
    r0 = 1.5
    g = lambda r: (r - 2 * r0) ** 2 * (4 * r0 - r) ** 2 if 2 * r0 <= r <= 4 * r0 else 0.0
    lhs, rhs = log_hardy_check(r0, g, (2 * r0, 4 * r0))
    assert lhs >= rhs > 0
    with pytest.raises(ValueError):
        log_hardy_check(r0, g, (r0, 4 * r0))
    with pytest.raises(ValueError):
        log_hardy_check(r0, lambda r: 1.0, (2 * r0, 4 * r0))


@pytest.mark.parametrize("n", [10.0, 100.0, 300.0])
def test_log_hardy_family_closed_form(n):
    # in t = log(r/r0): lhs = log(n)/6 + 2/log(n), rhs = log(n)/6
    g, dg, support = log_hardy_family(2.0, n)
    lhs, rhs = log_hardy_check(2.0, g, support, dg)
    ln = math.log(n)
    assert lhs == pytest.approx(ln / 6 + 2 / ln, rel=1e-8)
    assert rhs == pytest.approx(ln / 6, rel=1e-8)


def test_log_hardy_family_ratio_approaches_one():
    ratios = []
    for n in (10.0, 100.0, 300.0):
        g, dg, support = log_hardy_family(1.0, n)
        lhs, rhs = log_hardy_check(1.0, g, support, dg)
        ratios.append(lhs / rhs)
    assert all(r > 1 for r in ratios)
    assert ratios[0] > ratios[1] > ratios[2]


def test_smoothstep_derivative():
    r0, R = 3.0, 6.0
    x = np.linspace(0, 1, 100001)
    # xi = 3x^2 - 2x^3 with x = (r - r0)/(R - r0)
    dxi = (6 * x - 6 * x**2) / (R - r0)
    assert smoothstep_sup_derivative(r0, R) == pytest.approx(dxi.max(), rel=1e-12)


def test_weight_infimum():
    assert weight_infimum(1.0) == 1.0
    for r0 in (0.1, 0.5, 2.0, 3.0, 10.0):
        w = weight_infimum(r0)
        assert 0 < w <= 1
        r = np.geomspace(1e-6, 1e4, 5000)
        f = (1 + (r * np.log(r)) ** 2) / (1 + (r * np.log(r / r0)) ** 2)
        assert w <= f.min() + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_remainder_nonnegative_random_straight(seed):
    g = WedgeGrid(1.0, 8.0, 30, 10)
    psi = np.random.default_rng(seed).standard_normal(g.size)
    assert hardy_remainder(g, STRAIGHT, psi) >= -1e-10


def test_remainder_rejects_wrong_size():
    g = WedgeGrid(1.0, 8.0, 10, 4)
    with pytest.raises(ValueError):
        hardy_remainder(g, STRAIGHT, np.ones(3))


def test_certificate_straight_is_critical():
    cert = certify_global(STRAIGHT, 5.0, 1.0, 60, 16)
    assert cert.c == 0.0 and cert.critical_flag
    assert cert.r0 == 2.5 and cert.epsilon == 0.5


def test_certificate_sin_capped():
    cert = certify_global(SIN_CAPPED, 6.0, 1.0, 120, 32, spot_checks=100)
    assert cert.c > 0 and not cert.critical_flag
    assert cert.r0 == 3.0
    assert cert.epsilon <= 1 / (1 + cert.C**2) + 1e-15
    K = cert.epsilon / (1 - cert.epsilon) * cert.sup_theta_prime**2 / 4 + cert.epsilon * (cert.xi_sup_deriv**2 + 0.125)
    assert cert.K == pytest.approx(K, rel=1e-14)
    assert cert.delta == pytest.approx(cert.lambda_R / (cert.lambda_R + K), rel=1e-14)
    assert cert.c == pytest.approx(cert.delta * cert.epsilon / 16 * cert.weight_inf, rel=1e-14)
    assert cert.spot_checks == 100 and cert.spot_min_slack >= -1e-8
    d = cert.to_dict()
    for key in ("profile", "a", "R", "r0", "C", "sup_theta_prime", "epsilon", "delta", "lambda_R", "weight_inf", "c", "critical_flag"):
        assert key in d


def test_certificate_needs_support_inside_R():
    with pytest.raises(ValueError):
        certify_global(SIN_CAPPED, 4.0)
    with pytest.raises(ValueError):
        certify_global(builtin_profile("log3"), 6.0)


def test_certified_inequality_on_smooth_fields():
    cert = certify_global(SIN_CAPPED, 6.0, 1.0, 120, 32, spot_checks=0)
    g = WedgeGrid(1.0, 12.0, 240, 32)
    rng = np.random.default_rng(7)
    for _ in range(20):
        c1, c2, w = rng.uniform(0.5, 8.0, 3)
        psi = g.sample(lambda r, p: np.exp(-((r - c1) / w) ** 2) * (np.sin(p / 2) + 0.3 * c2 / 8 * np.sin(p)))
        assert hardy_remainder(g, SIN_CAPPED, psi) >= cert.c * weighted_norm_sq(g, psi) - 1e-8
