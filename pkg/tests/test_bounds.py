import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privest.bounds import (
    MassEverywhereSetup,
    choose_mixture_weight,
    contraction_bound,
    contraction_bound_noniid,
    contraction_sweep,
    density_lower_rate,
    dp_mean_lower_bound,
    estimation_to_testing_chain,
    evaluator_table,
    greedy_packing,
    mass_everywhere_sweep,
    mix_with_constant,
    mixture_construction,
    packing_lower_bound,
    packing_lower_bound_alt,
    random_tv_private_channel,
    tv_mean_bound,
    tv_mean_lower_bound,
    tv_mean_lower_bound_alt,
    two_point_mean_construction,
    uniform_support_lower_bound,
    uniform_support_lower_bound_alt,
    verify_contraction,
    verify_mass_everywhere,
)
from privest.core import (
    DiscreteChannel,
    FiniteDistribution,
    SpecError,
    constant_channel,
    identity_channel,
    random_channel,
    random_distribution,
    tv_distance,
)


def rel_close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(abs(a), abs(b), 1e-300)


# --------------------------------------------------------------------------
# closed forms


def test_closed_form_examples():
    assert rel_close(tv_mean_lower_bound(1, 2, 100, 0.1), 0.00625)
    assert rel_close(uniform_support_lower_bound(1, 100, 0.1), 0.003125)
    assert packing_lower_bound(2, 0, 0.7, 0.0) == 0.25
    # k = inf: r^2 / 64 * (1 / (n eps))^2
    assert rel_close(tv_mean_lower_bound(1, math.inf, 100, 0.1), 1 / 64 / 100)


@settings(max_examples=300, deadline=None)
@given(
    st.floats(0.1, 10),
    st.one_of(st.floats(2, 20), st.just(math.inf)),
    st.integers(1, 10**6),
    st.floats(0.01, 10),
)
def test_tv_mean_second_evaluation(r, k, n, eps):
    if 1 / (4 * n * eps) > 1:
        return
    assert rel_close(tv_mean_lower_bound(r, k, n, eps), tv_mean_lower_bound_alt(r, k, n, eps))
    # homogeneous of degree two in r
    assert rel_close(tv_mean_lower_bound(2 * r, k, n, eps), 4 * tv_mean_lower_bound(r, k, n, eps), 1e-12)


def test_tv_mean_clamps_and_flags():
    res = tv_mean_bound(1.0, 2, 1, 0.1)
    assert res.flagged and res.param == 1.0
    assert res.value == pytest.approx(0.5 * (1 - 0.2))
    assert res.value == pytest.approx(tv_mean_lower_bound_alt(1.0, 2, 1, 0.1))


@settings(max_examples=300, deadline=None)
@given(st.floats(0.01, 100), st.integers(1, 10**6), st.floats(0.3, 10))
def test_uniform_support_second_evaluation(t, n, eps):
    a, b = uniform_support_lower_bound(t, n, eps), uniform_support_lower_bound_alt(t, n, eps)
    assert rel_close(a, b)
    assert rel_close(uniform_support_lower_bound(3 * t, n, eps), 3 * a)


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 10**4), st.integers(0, 50), st.floats(0.01, 5), st.floats(0, 1e-3))
def test_packing_second_evaluation(m, K, eps, delta):
    a, b = packing_lower_bound(m, K, eps, delta), packing_lower_bound_alt(m, K, eps, delta)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


def test_packing_values():
    # m = 16, eps = 1, ceil(np) = 2, delta = 1e-6 by hand
    e2 = math.exp(-2)
    expected = 15 * (0.5 * e2 - 1e-6 * (1 + math.exp(-1))) / (1 + 15 * e2)
    assert rel_close(packing_lower_bound(16, 2, 1.0, 1e-6), expected)
    assert packing_lower_bound(10**9, 3, 1.0, 0.0) == pytest.approx(0.5, rel=1e-6)
    with pytest.raises(SpecError):
        packing_lower_bound(4, 2, 0.0, 0.1)
    with pytest.raises(SpecError):
        packing_lower_bound(1, 2, 1.0, 0.0)


def test_evaluator_table_agrees():
    rows = evaluator_table()
    assert all(row.get("agree", True) for row in rows)
    density = [r for r in rows if r["evaluator"] == "density_lower_rate"][0]
    assert density["value"] == pytest.approx(10 ** (-8 / 3) + 1e-4, rel=1e-12)


def test_density_rate():
    assert density_lower_rate(1, 10**4, 1.0) == pytest.approx(2.254434690031884e-3, rel=1e-12)
    assert density_lower_rate(2, 10**4, 1e12) == pytest.approx(1e4 ** (-0.5), rel=1e-6)
    vals = [density_lower_rate(2, n, 0.5) for n in (10, 100, 1000, 10**4)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


# --------------------------------------------------------------------------
# constructions


def test_two_point_construction():
    c = two_point_mean_construction(1.0, 2, 0.25)
    assert c.p0.outcomes == (-2.0, 0.0, 2.0)
    assert (c.theta0, c.theta1) == (-0.5, 0.5)
    assert tv_distance(c.p0, c.p1) == pytest.approx(0.25)
    c1 = two_point_mean_construction(1.5, 3, 1.0)
    assert c1.p0.prob(-1.5) == 1.0 and c1.p1.prob(1.5) == 1.0


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 5), st.floats(1.1, 10), st.floats(1e-4, 1.0))
def test_two_point_invariants(r, k, delta):
    c = two_point_mean_construction(r, k, delta)
    assert c.moment(0) == pytest.approx(r**k, rel=1e-9)
    assert c.moment(1) == pytest.approx(r**k, rel=1e-9)
    assert tv_distance(c.p0, c.p1) == pytest.approx(delta, abs=1e-12)
    assert c.theta1 == pytest.approx(r * delta ** (1 - 1 / k), rel=1e-12)
    assert c.p1.expectation(lambda x: x) == pytest.approx(c.theta1, rel=1e-9)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_greedy_packing_invariants(d):
    pack = greedy_packing(d, np.random.default_rng(d), probes=20_000)
    pts = pack.points
    assert len(pack) >= 2**d
    assert np.all(np.linalg.norm(pts, axis=1) <= 1 + 1e-12)
    assert pack.separation >= 0.5
    # independent maximality probe
    gen = np.random.default_rng(100 + d)
    z = gen.standard_normal((20_000, d))
    probes = z / np.linalg.norm(z, axis=1, keepdims=True) * gen.random((20_000, 1)) ** (1 / d)
    nearest = np.linalg.norm(probes[:, None, :] - pts[None], axis=-1).min(axis=1)
    assert np.mean(nearest >= 0.5) < 1e-3


def test_mixture_construction_invariants():
    pack = greedy_packing(2, np.random.default_rng(0), probes=10_000)
    for k in (2.0, 4.0, math.inf):
        mix = mixture_construction(1.3, k, 0.2, pack)
        assert np.all(mix.moments() <= 1.3 ** (1 if math.isinf(k) else k) + 1e-12)
        expected = (1.3 / 2) * 0.2 ** (1 if math.isinf(k) else 1 - 1 / k)
        assert mix.separation >= expected - 1e-12


def test_dp_mean_lower_bound_paths():
    r, n, eps, d = 2.0, 1000, 0.5, 8
    res = dp_mean_lower_bound(r, math.inf, d, n, eps, 1e-12)
    p = (d / 2 - eps) / (n * eps)
    assert res.p == pytest.approx(p)
    assert res.value == pytest.approx(r**2 / 32 * p**2)
    assert not res.flagged
    # log term active for larger delta
    res2 = dp_mean_lower_bound(r, 4.0, 40, n, eps, 1e-3)
    log_term = math.log((1 - math.exp(-eps)) / (4e-3 * math.exp(eps)))
    assert res2.p == pytest.approx(log_term / (n * eps))
    assert res2.value == pytest.approx(r**2 / 32 * res2.p ** 1.5)
    one_d = dp_mean_lower_bound(r, 2.0, 1, n, eps, 1e-6)
    assert one_d.value == pytest.approx(tv_mean_lower_bound(r, 2.0, n, eps))
    doubled = dp_mean_lower_bound(2 * r, math.inf, d, n, eps, 1e-12)
    assert doubled.value == pytest.approx(4 * res.value)


def test_define_p_clamps():
    p, flagged, note = choose_mixture_weight(2, 100, 3.0, 1e-6)
    assert p == 0.0 and flagged and "negative" in note
    p, flagged, note = choose_mixture_weight(4, 100, 0.5, 0.2)
    assert flagged and p == pytest.approx((2 - 0.5) / 50)
    p, flagged, _ = choose_mixture_weight(50, 1, 0.5, 1e-12)
    assert p == 1.0 and flagged


def test_dp_mean_asymptotic_form():
    res = dp_mean_lower_bound(1.0, math.inf, 4, 100, 1.0, 1e-20)
    assert res.asymptotic == pytest.approx(1 / 100 + min(16 / 1e4, 1))


# --------------------------------------------------------------------------
# contraction


def test_contraction_bound_examples():
    p0 = FiniteDistribution((0, 1), [0.5, 0.5])
    assert contraction_bound(p0, p0, 3, 0.5).value == 0.0
    p1 = FiniteDistribution((0, 1), [0.4, 0.6])
    res = contraction_bound(p0, p1, 3, 0.2)
    assert res.first_term == pytest.approx(0.12)
    assert res.value == min(res.first_term, res.product_term)
    same = contraction_bound_noniid([p0] * 3, [p1] * 3, 0.2)
    assert same.first_term == pytest.approx(res.first_term)
    assert same.product_term == pytest.approx(res.product_term)
    flagged = contraction_bound(p0, p1, 20, 0.2, cap=1000)
    assert flagged.flagged and flagged.product_term is None


def test_contraction_constant_and_identity():
    p0 = FiniteDistribution((0, 1), [0.3, 0.7])
    p1 = FiniteDistribution((0, 1), [0.6, 0.4])
    const = constant_channel((0, 1), 2, FiniteDistribution(("a", "b"), [0.5, 0.5]))
    rep = verify_contraction(const, p0, p1)
    assert rep.ok and rep.details["lhs"] == 0.0
    ident = identity_channel((0, 1))
    rep = verify_contraction(ident, p0, p1)
    assert rep.ok and rep.details["lhs"] == pytest.approx(tv_distance(p0, p1))


def test_mixing_scales_tv_level():
    gen = np.random.default_rng(1)
    q = random_channel(gen, 2, 2, 3)
    u = random_distribution(gen, q.output_set)
    from privest.audit import audit_f_privacy

    base = audit_f_privacy(q).tight_param
    assert audit_f_privacy(mix_with_constant(q, 0.3, u)).tight_param == pytest.approx(0.3 * base)


def test_contraction_sweep_clean():
    rep = contraction_sweep(5, instances=40)
    assert rep.ok
    assert rep.instances == 80
    assert rep.max_slack_used >= -1e-12


def test_contraction_noniid_direct():
    gen = np.random.default_rng(2)
    for _ in range(20):
        q, eps = random_tv_private_channel(gen, 3, 2, 3)
        p0s = [random_distribution(gen, q.input_alphabet) for _ in range(2)]
        p1s = [random_distribution(gen, q.input_alphabet) for _ in range(2)]
        assert verify_contraction(q, p0s, p1s, eps).ok


# --------------------------------------------------------------------------
# mass everywhere


def test_mass_everywhere_p_zero():
    q = random_channel(np.random.default_rng(3), 3, 3, 4)
    from privest.audit import audit_approx_dp

    delta = audit_approx_dp(q, 0.5).tight_param
    rep = verify_mass_everywhere(MassEverywhereSetup(q, 0.0, 0, (1, 2), 0.5, delta))
    assert rep.ok
    assert rep.details["ceil_np"] == 0


def test_mass_everywhere_constant_channel():
    q = constant_channel((0, 1, 2), 3, FiniteDistribution(tuple("wxyz"), [0.1, 0.2, 0.3, 0.4]))
    rep = verify_mass_everywhere(MassEverywhereSetup(q, 0.6, 0, (1, 2), 0.0, 0.0))
    assert rep.ok


def test_mass_everywhere_sweep():
    rep = mass_everywhere_sweep(11, instances=20)
    assert rep.ok and rep.instances == 40


def test_mass_everywhere_detects_non_private_channel():
    # a channel that reveals the data cannot satisfy the inequality at eps = 0
    q = DiscreteChannel(
        (0, 1, 2),
        1,
        ("a", "b", "c"),
        np.eye(3),
    )
    rep = verify_mass_everywhere(MassEverywhereSetup(q, 1.0, 0, (1, 2), 0.0, 0.0))
    assert not rep.ok


# --------------------------------------------------------------------------
# estimation to testing


def test_estimation_to_testing_chain():
    gen = np.random.default_rng(4)
    checked = 0
    while checked < 20:
        n = int(gen.integers(1, 4))
        base = random_channel(gen, 3, n, 4, 0.8)
        q = DiscreteChannel(base.input_alphabet, n, (-1.0, -0.2, 0.3, 1.1), base.kernel)
        q = mix_with_constant(q, float(gen.uniform(0.01, 0.2)), random_distribution(gen, q.output_set))
        res = estimation_to_testing_chain(q, 1.0, float(gen.choice([2.0, 4.0, math.inf])))
        if res.eps == 0:
            continue
        assert res.ordered, res
        checked += 1
