import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privest.core import (
    KL,
    TV,
    DiscreteChannel,
    DomainError,
    FDivergenceSpec,
    FiniteDistribution,
    ResourceError,
    SpecError,
    channel_marginal,
    compose_channels,
    constant_channel,
    f_divergence,
    identity_channel,
    kl_divergence,
    le_cam_error,
    make_channel,
    power_distribution,
    product_distribution,
    random_channel,
    tv_distance,
)


def prob_vectors(size):
    return st.lists(st.floats(0.01, 10.0), min_size=size, max_size=size).map(
        lambda w: np.asarray(w) / np.sum(w)
    )


@st.composite
def dist_pairs(draw, max_size=6):
    m = draw(st.integers(2, max_size))
    outcomes = tuple(range(m))
    return FiniteDistribution(outcomes, draw(prob_vectors(m))), FiniteDistribution(outcomes, draw(prob_vectors(m)))


def test_normalization_enforced():
    with pytest.raises(DomainError):
        FiniteDistribution(("a", "b"), [0.5, 0.6])
    with pytest.raises(DomainError):
        FiniteDistribution(("a", "a"), [0.5, 0.5])
    with pytest.raises(DomainError):
        FiniteDistribution(("a", "b"), [-0.1, 1.1])


def test_tv_known_values():
    p = FiniteDistribution(("a", "b"), [1.0, 0.0])
    q = FiniteDistribution(("a", "b"), [0.0, 1.0])
    assert tv_distance(p, q) == 1.0
    assert tv_distance(p, p) == 0.0
    # same labels listed in a different order
    r = FiniteDistribution(("b", "a"), [0.25, 0.75])
    s = FiniteDistribution(("a", "b"), [0.5, 0.5])
    assert tv_distance(r, s) == pytest.approx(0.25, abs=1e-15)


def test_tv_rejects_mismatched_outcomes():
    with pytest.raises(DomainError):
        tv_distance(FiniteDistribution((0, 1), [0.5, 0.5]), FiniteDistribution((0, 2), [0.5, 0.5]))


def test_kl_bernoulli_closed_form():
    p, q = 0.3, 0.6
    expected = p * math.log(p / q) + (1 - p) * math.log((1 - p) / (1 - q))
    got = kl_divergence(FiniteDistribution((0, 1), [1 - p, p]), FiniteDistribution((0, 1), [1 - q, q]))
    assert got == pytest.approx(expected, rel=1e-13)


def test_kl_infinite_without_absolute_continuity():
    p = FiniteDistribution((0, 1), [0.5, 0.5])
    q = FiniteDistribution((0, 1), [1.0, 0.0])
    assert kl_divergence(p, q) == math.inf
    assert kl_divergence(q, p) == pytest.approx(math.log(2))


def test_custom_generator_matches_builtins():
    tv_like = FDivergenceSpec.custom(lambda t: 0.5 * np.abs(np.asarray(t) - 1), 0.5)
    chi2 = FDivergenceSpec.custom(lambda t: (np.asarray(t) - 1) ** 2)
    p = FiniteDistribution((0, 1, 2), [0.2, 0.5, 0.3])
    q = FiniteDistribution((0, 1, 2), [0.4, 0.4, 0.2])
    assert f_divergence(tv_like, p, q) == pytest.approx(tv_distance(p, q), abs=1e-15)
    expected_chi2 = sum((a - b) ** 2 / b for a, b in zip(p.probs, q.probs))
    assert f_divergence(chi2, p, q) == pytest.approx(expected_chi2, rel=1e-12)
    assert chi2.slope_at_infinity == math.inf


def test_custom_generator_validation():
    with pytest.raises(SpecError):
        FDivergenceSpec.custom(lambda t: np.asarray(t) + 1.0)
    with pytest.raises(SpecError):
        FDivergenceSpec.custom(lambda t: -((np.asarray(t) - 1) ** 2))


def test_tv_generator_on_disjoint_supports():
    p = FiniteDistribution((0, 1), [1.0, 0.0])
    q = FiniteDistribution((0, 1), [0.0, 1.0])
    assert f_divergence(TV, p, q) == 1.0
    tv_like = FDivergenceSpec.custom(lambda t: 0.5 * np.abs(np.asarray(t) - 1), 0.5)
    assert f_divergence(tv_like, p, q) == pytest.approx(1.0)


@settings(max_examples=200, deadline=None)
@given(dist_pairs())
def test_divergence_properties(pair):
    p, q = pair
    tv = tv_distance(p, q)
    assert 0.0 <= tv <= 1.0
    assert tv == pytest.approx(tv_distance(q, p), abs=1e-15)
    assert le_cam_error(p, q) == pytest.approx(1 - tv)
    kl = kl_divergence(p, q)
    assert kl >= 0
    # Pinsker
    assert tv <= math.sqrt(kl / 2) + 1e-12


@settings(max_examples=100, deadline=None)
@given(dist_pairs(max_size=4), st.integers(1, 3))
def test_product_tv_monotone_in_n(pair, n):
    p, q = pair
    tv_n = tv_distance(power_distribution(p, n), power_distribution(q, n))
    tv_next = tv_distance(power_distribution(p, n + 1), power_distribution(q, n + 1))
    assert tv_next >= tv_n - 1e-12
    # subadditivity over coordinates
    assert tv_n <= n * tv_distance(p, q) + 1e-12


def test_product_distribution_order_and_cap():
    a = FiniteDistribution(("x", "y"), [0.25, 0.75])
    b = FiniteDistribution((0, 1, 2), [0.5, 0.25, 0.25])
    prod = product_distribution([a, b])
    assert prod.outcomes[:3] == (("x", 0), ("x", 1), ("x", 2))
    assert prod.prob(("y", 2)) == pytest.approx(0.75 * 0.25)
    with pytest.raises(ResourceError):
        power_distribution(b, 12, cap=1000)


def _brute_neighbors(q):
    data = list(q.datasets())
    pairs = set()
    for i, x in enumerate(data):
        for j, y in enumerate(data):
            if sum(a != b for a, b in zip(x, y)) == 1:
                pairs.add((i, j))
    return pairs


@pytest.mark.parametrize("k,n", [(2, 1), (2, 3), (3, 2), (4, 2)])
def test_neighbor_pairs_match_hamming_oracle(k, n):
    q = random_channel(np.random.default_rng(0), k, n, 2)
    i, j, c = q.neighbor_pairs()
    got = set(zip(i.tolist(), j.tolist()))
    assert got == _brute_neighbors(q)
    assert len(got) == len(i)
    for a, b, pos in zip(i, j, c):
        x, y = q.dataset_at(a), q.dataset_at(b)
        assert [t for t in range(n) if x[t] != y[t]] == [pos]
    iu, ju, _ = q.neighbor_pairs(ordered=False)
    assert len(iu) * 2 == len(i)


def test_dataset_index_round_trip():
    q = random_channel(np.random.default_rng(1), 3, 3, 2)
    for idx, x in enumerate(q.datasets()):
        assert q.dataset_index(x) == idx
        assert q.dataset_at(idx) == x


def test_channel_json_round_trip():
    q = random_channel(np.random.default_rng(2), 3, 2, 4)
    back = DiscreteChannel.loads(q.dumps())
    assert back.input_alphabet == q.input_alphabet
    assert back.output_set == q.output_set
    np.testing.assert_array_equal(back.kernel, q.kernel)


def test_channel_json_rejects_bad_documents():
    doc = random_channel(np.random.default_rng(3), 2, 2, 2).to_json()
    with pytest.raises(DomainError):
        DiscreteChannel.from_json({**doc, "extra": 1})
    rows = dict(doc["rows"])
    rows.pop(next(iter(rows)))
    with pytest.raises(DomainError):
        DiscreteChannel.from_json({**doc, "rows": rows})
    bad = json.loads(json.dumps(doc))
    first = next(iter(bad["rows"]))
    bad["rows"][first] = [0.9, 0.3]
    with pytest.raises(DomainError):
        DiscreteChannel.from_json(bad)


def test_channel_marginal_matches_enumeration():
    gen = np.random.default_rng(4)
    q = random_channel(gen, 3, 2, 3)
    p = FiniteDistribution((0, 1, 2), [0.2, 0.3, 0.5])
    got = channel_marginal(q, power_distribution(p, 2))
    expected = np.zeros(3)
    for x in itertools.product(range(3), repeat=2):
        expected += p.probs[x[0]] * p.probs[x[1]] * q.kernel[q.dataset_index(x)]
    np.testing.assert_allclose(got.probs, expected, rtol=1e-14)


def test_channel_marginal_single_coordinate_labels():
    q = identity_channel(("a", "b"))
    p = FiniteDistribution(("a", "b"), [0.3, 0.7])
    np.testing.assert_allclose(channel_marginal(q, p).probs, [0.3, 0.7])


def test_compose_with_identity_and_constant():
    q = random_channel(np.random.default_rng(5), 2, 2, 3)
    same = compose_channels(identity_channel(q.output_set), q)
    np.testing.assert_allclose(same.kernel, q.kernel, rtol=1e-14)
    const = constant_channel(q.output_set, 1, FiniteDistribution(("u", "v"), [0.4, 0.6]))
    flat = compose_channels(const, q)
    np.testing.assert_allclose(flat.kernel, np.tile([0.4, 0.6], (4, 1)))


def test_make_channel_cap():
    with pytest.raises(ResourceError):
        make_channel(range(10), 5, (0, 1), lambda x: [0.5, 0.5], cap=1000)


def test_kernel_row_validation():
    with pytest.raises(DomainError):
        DiscreteChannel((0, 1), 1, ("a", "b"), [[0.5, 0.5], [0.7, 0.7]])
