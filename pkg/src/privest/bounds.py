"""Lower-bound machinery: contraction under TV privacy, proof constructions and closed forms.

Every closed-form evaluator has a second, independently arranged evaluation
(suffix ``_alt``) so tests can cross-check the arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .audit import TV, audit_approx_dp, audit_f_privacy
from .core import (
    DiscreteChannel,
    DomainError,
    FiniteDistribution,
    ResourceError,
    SpecError,
    channel_marginal,
    check_cap,
    constant_channel,
    le_cam_error,
    power_distribution,
    product_distribution,
    tv_distance,
)
from .report import Report

CONTRACTION_TOL = 1e-12


class BoundResult(NamedTuple):
    value: float
    param: float
    flagged: bool = False
    note: str = ""


def _moment_exponent(k: float) -> float:
    """2 - 2/k, with k = inf giving 2."""
    if not k > 1:
        raise SpecError("moment order k must exceed 1")
    return 2.0 if math.isinf(k) else 2.0 - 2.0 / k


# ---------------------------------------------------------------------------
# contraction


class ContractionBound(NamedTuple):
    value: float
    first_term: float
    product_term: float | None
    flagged: bool = False


def contraction_bound(
    p0: FiniteDistribution, p1: FiniteDistribution, n: int, eps: float, cap: int | None = None
) -> ContractionBound:
    """min(2 n eps TV(p0, p1), TV(p0^n, p1^n)); the second term is skipped past the cap."""
    first = 2 * n * eps * tv_distance(p0, p1)
    try:
        second = tv_distance(power_distribution(p0, n, cap), power_distribution(p1, n, cap))
    except ResourceError:
        return ContractionBound(first, first, None, True)
    return ContractionBound(min(first, second), first, second)


def contraction_bound_noniid(
    p0s: Sequence[FiniteDistribution],
    p1s: Sequence[FiniteDistribution],
    eps: float,
    cap: int | None = None,
) -> ContractionBound:
    if len(p0s) != len(p1s) or not p0s:
        raise DomainError("need matching, nonempty component sequences")
    first = 2 * eps * sum(tv_distance(a, b) for a, b in zip(p0s, p1s))
    try:
        second = tv_distance(product_distribution(p0s, cap), product_distribution(p1s, cap))
    except ResourceError:
        return ContractionBound(first, first, None, True)
    return ContractionBound(min(first, second), first, second)


def verify_contraction(
    q: DiscreteChannel,
    p0,
    p1,
    eps: float | None = None,
    cap: int | None = None,
) -> Report:
    """Check TV(M0^n, M1^n) against the contraction bound by exact enumeration.

    ``p0`` and ``p1`` are either single distributions (iid samples) or
    sequences of n per-coordinate distributions. ``eps`` defaults to the
    channel's audited tight TV-privacy level.
    """
    check_cap(q.num_datasets, cap)
    if eps is None:
        eps = audit_f_privacy(q, TV, cap=cap).tight_param
    iid = isinstance(p0, FiniteDistribution)
    if iid:
        bound = contraction_bound(p0, p1, q.n, eps, cap)
        law0, law1 = power_distribution(p0, q.n, cap), power_distribution(p1, q.n, cap)
    else:
        if len(p0) != q.n:
            raise DomainError("need one component pair per sample coordinate")
        bound = contraction_bound_noniid(p0, p1, eps, cap)
        law0, law1 = product_distribution(p0, cap), product_distribution(p1, cap)
    lhs = tv_distance(channel_marginal(q, law0), channel_marginal(q, law1))
    report = Report("contraction")
    report.record(
        bound.value - lhs,
        {"lhs": lhs, "bound": bound.value, "eps": eps, "iid": iid},
        tol=CONTRACTION_TOL,
    )
    report.details.update({"lhs": lhs, "first_term": bound.first_term, "product_term": bound.product_term})
    return report


def mix_with_constant(q: DiscreteChannel, weight: float, output: FiniteDistribution) -> DiscreteChannel:
    """weight * q + (1 - weight) * constant; TV privacy level scales by ``weight``."""
    if not 0 <= weight <= 1:
        raise SpecError("mixing weight must lie in [0, 1]")
    const = constant_channel(q.input_alphabet, q.n, output)
    if const.output_set != q.output_set:
        raise DomainError("constant output law must live on the channel's output set")
    return DiscreteChannel(q.input_alphabet, q.n, q.output_set, weight * q.kernel + (1 - weight) * const.kernel)


# ---------------------------------------------------------------------------
# two-point construction and the TV-private mean bound


@dataclass(frozen=True)
class TwoPointConstruction:
    p0: FiniteDistribution
    p1: FiniteDistribution
    theta0: float
    theta1: float
    delta_mass: float
    r: float
    k: float

    def moment(self, which: int = 0) -> float:
        dist = self.p0 if which == 0 else self.p1
        if math.isinf(self.k):
            return max(abs(x) for x, w in zip(dist.outcomes, dist.probs) if w > 0)
        return dist.expectation(lambda x: abs(x) ** self.k)


def two_point_mean_construction(r: float, k: float, delta_mass: float) -> TwoPointConstruction:
    if not 0 < delta_mass <= 1:
        raise SpecError("delta_mass must lie in (0, 1]")
    if not (r > 0 and k > 1):
        raise SpecError("need r > 0 and k > 1")
    atom = r if math.isinf(k) else r * delta_mass ** (-1 / k)
    outcomes = (-atom, 0.0, atom)
    p0 = FiniteDistribution(outcomes, [delta_mass, 1 - delta_mass, 0.0])
    p1 = FiniteDistribution(outcomes, [0.0, 1 - delta_mass, delta_mass])
    mean = atom * delta_mass
    return TwoPointConstruction(p0, p1, -mean, mean, delta_mass, r, k)


def tv_mean_bound(r: float, k: float, n: int, eps: float) -> BoundResult:
    """Privacy term of the TV-private mean lower bound at delta* = 1/(4 n eps)."""
    if not (r > 0 and n > 0 and eps > 0):
        raise SpecError("r, n and eps must be positive")
    if k < 2:
        raise SpecError("k must be at least 2")
    expo = _moment_exponent(k)
    delta = 1 / (4 * n * eps)
    if delta > 1:
        value = max(0.0, r**2 / 2 * (1 - 2 * n * eps))
        return BoundResult(value, 1.0, True, "delta* = 1/(4 n eps) exceeds 1; clamped to 1")
    value = r**2 / (4 * 4**expo) * (1 / (n * eps)) ** expo
    return BoundResult(value, delta, False)


def tv_mean_lower_bound(r: float, k: float, n: int, eps: float) -> float:
    return tv_mean_bound(r, k, n, eps).value


def tv_mean_lower_bound_alt(r: float, k: float, n: int, eps: float) -> float:
    """Same bound via the unoptimized Le Cam display (r^2 delta^{2-2/k}/2)(1 - 2 n eps delta)."""
    delta = min(1.0, 1 / (4 * n * eps))
    expo = 2.0 if math.isinf(k) else 2.0 - 2.0 / k
    half_sep_sq = math.exp(2 * math.log(r) + expo * math.log(delta)) / 2
    return max(0.0, half_sep_sq * (1 - 2 * n * eps * delta))


def uniform_support_bound(t: float, n: int, eps: float) -> BoundResult:
    if not (t > 0 and n > 0 and eps > 0):
        raise SpecError("t, n and eps must be positive")
    delta = t / (4 * n * eps)
    flagged = delta > t
    return BoundResult(t / (32 * n * eps), delta, flagged, "delta* exceeds t" if flagged else "")


def uniform_support_lower_bound(t: float, n: int, eps: float) -> float:
    return uniform_support_bound(t, n, eps).value


def uniform_support_lower_bound_alt(t: float, n: int, eps: float) -> float:
    """Le Cam route: U[0, t - delta] vs U[0, t] has TV delta / t, then contract."""
    delta = t / (4 * n * eps)
    tv = delta / t
    return delta / 4 * (1 - 2 * n * eps * tv)


# ---------------------------------------------------------------------------
# packing sets and the approximate-DP packing bound


@dataclass(frozen=True, eq=False)
class PackingSet:
    d: int
    points: np.ndarray
    separation: float
    rejections: int = 0
    probes_added: int = 0

    def __len__(self) -> int:
        return self.points.shape[0]


def _uniform_ball(gen: np.random.Generator, size: int, d: int) -> np.ndarray:
    z = gen.standard_normal((size, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z * gen.random((size, 1)) ** (1 / d)


def _min_pairwise(points: np.ndarray) -> float:
    if len(points) < 2:
        return math.inf
    gaps = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    gaps[np.diag_indices(len(points))] = math.inf
    return float(gaps.min())


def greedy_packing(
    d: int,
    rng: np.random.Generator,
    radius: float = 0.5,
    budget: int | None = None,
    probes: int = 100_000,
) -> PackingSet:
    """Maximal ``radius``-separated subset of the unit ball by randomized greedy insertion.

    Candidates are drawn uniformly from the ball and accepted when at least
    ``radius`` away from every center. Insertion stops after ``budget``
    consecutive rejections (default 200 * 2^d). Maximality is then probed with
    ``probes`` uniform points; any probe that could still be added is added,
    which keeps the set separated and moves it closer to a covering.
    """
    if d < 1:
        raise SpecError("d must be at least 1")
    budget = 200 * 2**d if budget is None else budget
    centers = [np.zeros(d)]
    misses = 0
    batch = 256
    while misses < budget:
        for cand in _uniform_ball(rng, batch, d):
            if np.min(np.linalg.norm(np.asarray(centers) - cand, axis=1)) >= radius:
                centers.append(cand)
                misses = 0
            else:
                misses += 1
                if misses >= budget:
                    break
    added = 0
    remaining = probes
    while remaining > 0:
        chunk = _uniform_ball(rng, min(remaining, 20_000), d)
        remaining -= len(chunk)
        pts = np.asarray(centers)
        dists = np.linalg.norm(chunk[:, None, :] - pts[None, :, :], axis=-1).min(axis=1)
        for idx in np.flatnonzero(dists >= radius):
            cand = chunk[idx]
            if np.min(np.linalg.norm(np.asarray(centers) - cand, axis=1)) >= radius:
                centers.append(cand)
                added += 1
    points = np.asarray(centers)
    return PackingSet(d, points, _min_pairwise(points), budget, added)


def packing_lower_bound(m: int, np_ceil: int, eps: float, delta: float) -> float:
    """Average error probability lower bound for testing among m well separated mixtures."""
    if m < 2:
        raise SpecError("need at least two hypotheses")
    if eps < 0 or delta < 0 or np_ceil < 0:
        raise SpecError("eps, delta and ceil(np) must be nonnegative")
    if eps == 0 and delta > 0:
        raise SpecError("eps = 0 with delta > 0 makes the slack term degenerate")
    decay = math.exp(-eps * np_ceil)
    slack = 0.0 if delta == 0 else delta * (1 - decay) / (1 - math.exp(-eps))
    return (m - 1) * (0.5 * decay - slack) / (1 + (m - 1) * decay)


def packing_lower_bound_alt(m: int, np_ceil: int, eps: float, delta: float) -> float:
    """Same quantity with the geometric factor summed term by term."""
    if eps == 0 and delta > 0:
        raise SpecError("eps = 0 with delta > 0 makes the slack term degenerate")
    geometric = math.fsum(math.exp(-eps * i) for i in range(np_ceil))
    decay = 1.0 if np_ceil == 0 else math.exp(-eps) ** np_ceil
    numerator = 0.5 * decay * (m - 1) - delta * geometric * (m - 1)
    return numerator / ((m - 1) * decay + 1)


# ---------------------------------------------------------------------------
# mixture construction and the approximate-DP mean bound


@dataclass(frozen=True, eq=False)
class MixtureConstruction:
    p: float
    r: float
    k: float
    directions: np.ndarray
    atoms: np.ndarray
    thetas: np.ndarray
    separation: float

    def moments(self) -> np.ndarray:
        """E||X||^k under each mixture (the sup norm when k is infinite)."""
        norms = np.linalg.norm(self.atoms, axis=1)
        if math.isinf(self.k):
            return np.where(self.p > 0, norms, 0.0)
        return self.p * norms**self.k


def mixture_construction(r: float, k: float, p: float, packing: PackingSet) -> MixtureConstruction:
    """Mixtures (1 - p) delta_0 + p delta_{p^{-1/k} r v} over the packing directions."""
    if not 0 < p <= 1:
        raise SpecError("p must lie in (0, 1]")
    scale = r if math.isinf(k) else r * p ** (-1 / k)
    atoms = scale * packing.points
    thetas = p * atoms
    return MixtureConstruction(p, r, k, packing.points, atoms, thetas, _min_pairwise(thetas))


class MeanBound(NamedTuple):
    value: float
    p: float
    flagged: bool
    asymptotic: float
    note: str = ""


def choose_mixture_weight(d: int, n: int, eps: float, delta: float) -> tuple[float, bool, str]:
    """The mixture weight p, clamped to [0, 1], and whether clamping or fallback happened."""
    d_term = d / 2 - eps
    if delta == 0:
        log_term = math.inf
    else:
        log_term = math.log((-math.expm1(-eps)) / (4 * delta * math.exp(eps)))
    flagged, notes = False, []
    if log_term <= 0:
        flagged = True
        notes.append("log term nonpositive; using the dimension term only")
        raw = d_term
    else:
        raw = min(d_term, log_term)
    p = raw / (n * eps)
    if p < 0:
        flagged = True
        notes.append("eps > d/2 makes p negative; clamped to 0")
        p = 0.0
    if p > 1:
        flagged = True
        notes.append("p clamped to 1")
        p = 1.0
    return p, flagged, "; ".join(notes)


def dp_mean_asymptotic(r: float, k: float, d: int, n: int, eps: float, delta: float) -> float:
    log_sq = math.inf if delta == 0 else math.log(1 / delta) ** 2
    inner = min(d**2, log_sq) / (n**2 * eps**2)
    power = 1.0 if math.isinf(k) else (k - 1) / k
    return r**2 / n + r**2 * min(inner**power, 1.0)


def dp_mean_lower_bound(r: float, k: float, d: int, n: int, eps: float, delta: float) -> MeanBound:
    if not (r > 0 and n > 0 and eps > 0 and d >= 1 and 0 <= delta < 1):
        raise SpecError("need r, n, eps > 0, d >= 1 and delta in [0, 1)")
    asymptotic = dp_mean_asymptotic(r, k, d, n, eps, delta)
    if d == 1:
        res = tv_mean_bound(r, max(k, 2), n, eps)
        return MeanBound(res.value, res.param, res.flagged, asymptotic, "one-dimensional TV route")
    p, flagged, note = choose_mixture_weight(d, n, eps, delta)
    value = r**2 / 32 * p ** _moment_exponent(k) if p > 0 else 0.0
    return MeanBound(value, p, flagged, asymptotic, note)


# ---------------------------------------------------------------------------
# mass-everywhere inequality


@dataclass
class MassEverywhereSetup:
    """Point-mass mixtures on a finite alphabet feeding an (eps, delta)-DP channel.

    ``base`` indexes the alphabet symbol carrying P0, ``components`` the
    symbols carrying each P_v.
    """

    channel: DiscreteChannel
    p: float
    base: object
    components: Sequence
    eps: float
    delta: float

    def mixture(self, v: int) -> FiniteDistribution:
        weights = {x: 0.0 for x in self.channel.input_alphabet}
        weights[self.base] += 1 - self.p
        weights[self.components[v]] += self.p
        return FiniteDistribution(tuple(weights), list(weights.values()))


def subset_masses(dist: FiniteDistribution) -> np.ndarray:
    """Mass of every subset of outcomes, indexed by bitmask (bit i = outcome i)."""
    m = len(dist)
    masks = (np.arange(2**m)[:, None] >> np.arange(m)) & 1
    return masks @ dist.probs


def verify_mass_everywhere(setup: MassEverywhereSetup, cap: int | None = None) -> Report:
    q = setup.channel
    if q.n > 4:
        raise SpecError("exhaustive check supports n <= 4")
    check_cap(q.num_datasets * 2 ** len(q.output_set), cap)
    K = math.ceil(q.n * setup.p - 1e-12)
    decay = math.exp(-setup.eps * K)
    if setup.delta == 0:
        slack = 0.0
    elif setup.eps == 0:
        slack = setup.delta * K
    else:
        slack = setup.delta * (1 - decay) / (1 - math.exp(-setup.eps))
    marginals = [
        subset_masses(channel_marginal(q, power_distribution(setup.mixture(v), q.n, cap)))
        for v in range(len(setup.components))
    ]
    report = Report("mass_everywhere")
    for v, mv in enumerate(marginals):
        for w, mw in enumerate(marginals):
            if v == w:
                continue
            margins = mv - (decay * (mw - 0.5) - slack)
            idx = int(np.argmin(margins))
            report.record(float(margins[idx]), {"v": v, "v_prime": w, "subset_mask": idx}, tol=1e-12)
    report.details.update({"ceil_np": K, "subsets": 2 ** len(q.output_set)})
    return report


def random_mass_everywhere_setup(
    rng: np.random.Generator, n: int = 3, outputs: int = 4, eps: float | None = None
) -> MassEverywhereSetup:
    """Random channel on {0, a, b} with delta set to its tight value at the drawn eps."""
    from .core import random_channel

    q = random_channel(rng, 3, n, outputs, concentration=float(rng.uniform(0.3, 3.0)))
    eps = float(rng.uniform(0.1, 2.0)) if eps is None else eps
    delta = audit_approx_dp(q, eps).tight_param
    p = float(rng.uniform(0.0, 1.0))
    return MassEverywhereSetup(q, p, 0, (1, 2), eps, delta)


# ---------------------------------------------------------------------------
# density rate and estimation-to-testing chain


def density_lower_rate(d: int, n: int, eps: float) -> float:
    """n^{-2/(2+d)} + (n eps)^{-2/(1+d)}: a rate without its dimension constant."""
    if not (d >= 1 and n > 0 and eps > 0):
        raise SpecError("need d >= 1, n > 0 and eps > 0")
    return n ** (-2 / (2 + d)) + (n * eps) ** (-2 / (1 + d))


@dataclass
class ChainResult:
    bayes_risk: float
    le_cam_term: float
    contraction_term: float
    closed_form: float
    eps: float
    notes: dict = field(default_factory=dict)

    @property
    def ordered(self) -> bool:
        tol = 1e-12
        return (
            self.bayes_risk + tol >= self.le_cam_term
            and self.le_cam_term + tol >= self.contraction_term
            and self.contraction_term + tol >= self.closed_form
        )


def estimation_to_testing_chain(q: DiscreteChannel, r: float, k: float, cap: int | None = None) -> ChainResult:
    """Walk the two-point mean lower bound on a concrete channel.

    ``q`` maps samples from the three-point alphabet of the construction
    (in the order -a, 0, a, as labels 0, 1, 2) to real-valued estimates
    given by its output labels. The worst-case risk of the channel's
    estimator is compared with each link of the argument: Le Cam on the
    exact marginals, then the contraction bound, then the closed form.
    """
    if len(q.input_alphabet) != 3:
        raise DomainError("channel must act on the three-point alphabet")
    if k < 2:
        raise SpecError("k must be at least 2")
    eps = audit_f_privacy(q, TV, cap=cap).tight_param
    n = q.n
    delta = min(1.0, 1 / (4 * n * eps)) if eps > 0 else 1.0
    cons = two_point_mean_construction(r, k, delta)
    relabel = lambda d: FiniteDistribution(q.input_alphabet, d.probs)
    m0 = channel_marginal(q, power_distribution(relabel(cons.p0), n, cap))
    m1 = channel_marginal(q, power_distribution(relabel(cons.p1), n, cap))
    estimates = np.array([float(o) for o in q.output_set])
    risk0 = float(m0.probs @ (estimates - cons.theta0) ** 2)
    risk1 = float(m1.probs @ (estimates - cons.theta1) ** 2)
    half_sep_sq = cons.theta1**2
    le_cam = half_sep_sq / 2 * le_cam_error(m0, m1)
    contraction = half_sep_sq / 2 * max(0.0, 1 - 2 * n * eps * tv_distance(cons.p0, cons.p1))
    closed = tv_mean_lower_bound(r, k, n, eps) if eps > 0 else 0.0
    return ChainResult(max(risk0, risk1), le_cam, contraction, closed, eps, {"delta": delta})


# ---------------------------------------------------------------------------
# randomized sweeps with exact per-instance checks


def random_tv_private_channel(
    gen: np.random.Generator, alphabet_size: int, n: int, outputs: int
) -> tuple[DiscreteChannel, float]:
    """Random channel mixed with a constant channel; returns it with its audited TV level."""
    from .core import random_channel, random_distribution

    base = random_channel(gen, alphabet_size, n, outputs, concentration=float(gen.uniform(0.2, 2.0)))
    const = random_distribution(gen, base.output_set)
    q = mix_with_constant(base, float(gen.uniform(0.0, 1.0)), const)
    return q, audit_f_privacy(q, TV).tight_param


def _contraction_instance(args) -> Report:
    from .core import random_distribution

    seed, index, max_alphabet, max_n, max_outputs, cap = args
    gen = np.random.default_rng([seed, index])
    k = int(gen.integers(2, max_alphabet + 1))
    n = int(gen.integers(1, max_n + 1))
    m = int(gen.integers(2, max_outputs + 1))
    q, eps = random_tv_private_channel(gen, k, n, m)
    alphabet = q.input_alphabet
    report = verify_contraction(q, random_distribution(gen, alphabet), random_distribution(gen, alphabet), eps, cap)
    p0s = [random_distribution(gen, alphabet) for _ in range(n)]
    p1s = [random_distribution(gen, alphabet) for _ in range(n)]
    report.merge(verify_contraction(q, p0s, p1s, eps, cap))
    return report


def _run(fn, tasks, jobs: int):
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def contraction_sweep(
    master_seed: int,
    instances: int = 100,
    max_alphabet: int = 3,
    max_n: int = 3,
    max_outputs: int = 4,
    jobs: int = 1,
    cap: int | None = None,
) -> Report:
    """Each instance checks one iid and one non-iid pair of sample laws."""
    tasks = [(master_seed, i, max_alphabet, max_n, max_outputs, cap) for i in range(instances)]
    total = Report("contraction")
    for rep in _run(_contraction_instance, tasks, jobs):
        total.merge(rep)
    return total


def _mass_instance(args) -> Report:
    seed, index, n, outputs, cap = args
    gen = np.random.default_rng([seed, index])
    return verify_mass_everywhere(random_mass_everywhere_setup(gen, n, outputs), cap)


def mass_everywhere_sweep(
    master_seed: int, instances: int = 50, n: int = 3, outputs: int = 4, jobs: int = 1, cap: int | None = None
) -> Report:
    tasks = [(master_seed, i, n, outputs, cap) for i in range(instances)]
    total = Report("mass_everywhere")
    for rep in _run(_mass_instance, tasks, jobs):
        total.merge(rep)
    total.details = {"setups": instances, "n": n, "outputs": outputs}
    return total


def evaluator_table() -> list[dict]:
    """Closed-form evaluators beside their second evaluations."""
    rows = [
        ("tv_mean_lower_bound", (1.0, 2, 100, 0.1), tv_mean_lower_bound, tv_mean_lower_bound_alt),
        ("tv_mean_lower_bound", (1.0, math.inf, 100, 0.1), tv_mean_lower_bound, tv_mean_lower_bound_alt),
        ("uniform_support_lower_bound", (1.0, 100, 0.1), uniform_support_lower_bound, uniform_support_lower_bound_alt),
        ("packing_lower_bound", (2, 0, 1.0, 0.0), packing_lower_bound, packing_lower_bound_alt),
        ("packing_lower_bound", (16, 2, 1.0, 1e-6), packing_lower_bound, packing_lower_bound_alt),
    ]
    out = []
    for name, args, first, second in rows:
        a, b = first(*args), second(*args)
        rel = abs(a - b) / max(abs(a), abs(b), 1e-300)
        out.append({"evaluator": name, "args": list(args), "value": a, "second": b, "agree": rel <= 1e-12})
    out.append({"evaluator": "density_lower_rate", "args": [1, 10_000, 1.0], "value": density_lower_rate(1, 10_000, 1.0)})
    return out
