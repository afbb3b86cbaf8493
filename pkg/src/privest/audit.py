"""Exact privacy auditors for finite channels and analytic checks for the noise mechanisms.

Every auditor reports the tightest parameter at which its definition holds,
so ``holds`` is just ``tight_param <= requested + SLACK``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .core import (
    KL,
    TV,
    DiscreteChannel,
    DomainError,
    FDivergenceSpec,
    FiniteDistribution,
    ResourceError,
    SpecError,
    _f_divergence_rows,
    check_cap,
    compose_channels,
)
from .mechanisms import MechanismSpec, smooth_distance, truncated_sample_mean
from .report import SLACK, Report, jsonable

DEFINITIONS = ("dp", "approx_dp", "smooth_dp", "tv", "kl", "f_div", "testing_bound", "chtp")
CHTP_MAX_OUTPUTS = 16


@dataclass
class Witness:
    """Evidence that a definition fails: a neighbor pair, an output set and a test."""

    dataset: tuple
    neighbor: tuple
    subset: tuple
    test: str
    values: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return jsonable(
            {
                "dataset": list(self.dataset),
                "neighbor": list(self.neighbor),
                "subset": list(self.subset),
                "test": self.test,
                "values": self.values,
            }
        )


@dataclass
class PrivacyVerdict:
    definition: str
    holds: bool
    tight_param: float
    requested: float
    witness: Witness | None = None
    note: str | None = None

    def to_json(self) -> dict:
        doc = {
            "definition": self.definition,
            "holds": self.holds,
            "tight_param": self.tight_param,
            "requested": self.requested,
        }
        if self.witness is not None:
            doc["witness"] = self.witness.to_json()
        if self.note:
            doc["note"] = self.note
        return jsonable(doc)


def _verdict(definition, tight, requested, witness=None, note=None) -> PrivacyVerdict:
    holds = bool(tight <= requested + SLACK)
    return PrivacyVerdict(definition, holds, float(tight), float(requested), None if holds else witness, note)


def _pairs(q: DiscreteChannel, ordered: bool = True, cap: int | None = None):
    check_cap(q.num_datasets, cap)
    i, j, c = q.neighbor_pairs(ordered)
    return q.kernel[i], q.kernel[j], i, j, c


def _labels(q: DiscreteChannel, mask: np.ndarray) -> tuple:
    return tuple(o for o, m in zip(q.output_set, mask) if m)


def _scaled(eps: float, rows: np.ndarray) -> np.ndarray:
    """e^eps * rows with 0 * inf read as 0."""
    if math.isinf(eps):
        return np.where(rows > 0, math.inf, 0.0)
    return math.exp(eps) * rows


def _log_ratios(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.log(P) - np.log(Q)
    lr = np.where(P > 0, lr, -math.inf)
    return np.where((P > 0) & (Q == 0), math.inf, lr)


# ---------------------------------------------------------------------------
# likelihood-ratio definitions


def audit_dp(q: DiscreteChannel, eps: float = math.inf, cap: int | None = None) -> PrivacyVerdict:
    P, Q, i, j, _ = _pairs(q, cap=cap)
    if P.size == 0:
        return _verdict("dp", 0.0, eps)
    lr = _log_ratios(P, Q)
    flat = int(np.argmax(lr))
    pair, atom = divmod(flat, lr.shape[1])
    tight = max(0.0, float(lr[pair, atom]))
    witness = None
    if tight > eps + SLACK:
        p, qq = P[pair, atom], Q[pair, atom]
        assert p > _scaled(eps, np.array([qq]))[0], "dp witness failed re-verification"
        witness = Witness(
            q.dataset_at(i[pair]),
            q.dataset_at(j[pair]),
            (q.output_set[atom],),
            "reject when the output equals the listed atom",
            {"q_A_given_x": p, "q_A_given_neighbor": qq},
        )
    return _verdict("dp", tight, eps, witness)


def hockey_stick(P: np.ndarray, Q: np.ndarray, eps: float) -> np.ndarray:
    """Row-wise sum of max(P - e^eps Q, 0): the tight delta at level eps."""
    return np.maximum(P - _scaled(eps, Q), 0.0).sum(axis=-1)


def audit_approx_dp(
    q: DiscreteChannel, eps: float, delta: float = 0.0, cap: int | None = None
) -> PrivacyVerdict:
    P, Q, i, j, _ = _pairs(q, cap=cap)
    if P.size == 0:
        return _verdict("approx_dp", 0.0, delta)
    hs = hockey_stick(P, Q, eps)
    pair = int(np.argmax(hs))
    tight = float(hs[pair])
    witness = None
    if tight > delta + SLACK:
        mask = P[pair] > _scaled(eps, Q[pair])
        qa, qb = P[pair][mask].sum(), Q[pair][mask].sum()
        assert qa > math.exp(min(eps, 700)) * qb + delta, "approx-dp witness failed re-verification"
        witness = Witness(
            q.dataset_at(i[pair]),
            q.dataset_at(j[pair]),
            _labels(q, mask),
            "reject when the output falls in the listed set",
            {"q_A_given_x": qa, "q_A_given_neighbor": qb},
        )
    return _verdict("approx_dp", tight, delta, witness)


def optimal_tests(P: np.ndarray, Q: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair minimizer of Q(psi=1 | H0) + e^eps Q(psi=0 | H1) and its value.

    H0 has law ``P``, H1 has law ``Q``. Outputs go to psi = 1 exactly when
    paying P there is cheaper than paying e^eps Q.
    """
    weighted = _scaled(eps, Q)
    psi = P <= weighted
    cost = np.where(psi, P, 0.0).sum(axis=-1) + np.where(psi, 0.0, weighted).sum(axis=-1)
    return psi, cost


def audit_testing_bound(
    q: DiscreteChannel, eps: float, delta: float, cap: int | None = None
) -> PrivacyVerdict:
    P, Q, i, j, _ = _pairs(q, cap=cap)
    if P.size == 0:
        return _verdict("testing_bound", 0.0, delta)
    psi, cost = optimal_tests(P, Q, eps)
    shortfall = 1.0 - cost
    pair = int(np.argmax(shortfall))
    tight = max(0.0, float(shortfall[pair]))
    witness = None
    if tight > delta + SLACK:
        witness = Witness(
            q.dataset_at(i[pair]),
            q.dataset_at(j[pair]),
            _labels(q, psi[pair]),
            "psi = 1 on the listed outputs",
            {"weighted_error_sum": float(cost[pair]), "required": 1.0 - delta},
        )
    return _verdict("testing_bound", tight, delta, witness)


def min_test_error_sum(q: DiscreteChannel, cap: int | None = None) -> float:
    """Smallest unweighted type I + type II error over neighbor pairs and tests."""
    P, Q, *_ = _pairs(q, ordered=False, cap=cap)
    if P.size == 0:
        return 1.0
    return float(1.0 - (0.5 * np.abs(P - Q).sum(axis=1)).max())


# ---------------------------------------------------------------------------
# smooth DP


@dataclass(frozen=True, eq=False)
class MetricSpec:
    """Bounded semimetric on the input alphabet, as a table in alphabet order."""

    rho: np.ndarray
    r_bound: float

    def __post_init__(self) -> None:
        rho = np.array(self.rho, dtype=float)
        rho.setflags(write=False)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise SpecError("rho must be a square table")
        if not np.allclose(rho, rho.T, atol=0, rtol=0) or np.any(np.diag(rho) != 0):
            raise SpecError("rho must be symmetric with zero diagonal")
        if np.any(rho < 0) or np.any(rho > self.r_bound + 1e-12) or not self.r_bound > 0:
            raise SpecError("rho must lie in [0, r_bound] with r_bound > 0")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_function(cls, alphabet: Sequence, fn, r_bound: float) -> "MetricSpec":
        return cls(np.array([[fn(a, b) for b in alphabet] for a in alphabet]), r_bound)

    @classmethod
    def discrete(cls, size: int) -> "MetricSpec":
        return cls(1.0 - np.eye(size), 1.0)

    def to_json(self) -> dict:
        return {"rho": self.rho.tolist(), "r_bound": self.r_bound}

    @classmethod
    def from_json(cls, doc: dict) -> "MetricSpec":
        extra = set(doc) - {"rho", "r_bound"}
        if extra:
            raise SpecError(f"unknown metric fields: {sorted(extra)}")
        return cls(np.array(doc["rho"], dtype=float), float(doc["r_bound"]))


def audit_smooth_dp(
    q: DiscreteChannel, metric: MetricSpec, eps: float = math.inf, cap: int | None = None
) -> PrivacyVerdict:
    """Tight epsilon over single-coordinate changes, scaled by rho / r_bound.

    Because d_rho adds over coordinates, chaining single-coordinate steps
    certifies the bound for every pair of datasets.
    """
    k = len(q.input_alphabet)
    if metric.rho.shape != (k, k):
        raise DomainError("metric table does not match the channel alphabet")
    P, Q, i, j, c = _pairs(q, cap=cap)
    if P.size == 0:
        return _verdict("smooth_dp", 0.0, eps)
    stride = k ** (q.n - 1 - c)
    scale = metric.rho[(i // stride) % k, (j // stride) % k] / metric.r_bound
    lr = np.maximum(_log_ratios(P, Q).max(axis=1), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        per_pair = np.where(lr == 0, 0.0, lr / scale)
    per_pair = np.where((scale == 0) & (lr > 0), math.inf, per_pair)
    pair = int(np.argmax(per_pair))
    tight = float(per_pair[pair])
    witness = None
    if tight > eps + SLACK:
        atom = int(np.argmax(_log_ratios(P[pair : pair + 1], Q[pair : pair + 1])[0]))
        witness = Witness(
            q.dataset_at(i[pair]),
            q.dataset_at(j[pair]),
            (q.output_set[atom],),
            "reject on the listed atom",
            {"log_ratio": float(lr[pair]), "d_rho": float(scale[pair])},
        )
    return _verdict("smooth_dp", tight, eps, witness)


# ---------------------------------------------------------------------------
# divergence definitions


def _definition_for(spec: FDivergenceSpec) -> str:
    return {"total-variation": "tv", "kullback-leibler": "kl"}.get(spec.tag, "f_div")


def neighbor_divergences(q: DiscreteChannel, spec: FDivergenceSpec, cap: int | None = None):
    P, Q, i, j, _ = _pairs(q, cap=cap)
    if spec is TV or spec.tag == "total-variation":
        vals = np.minimum(0.5 * np.abs(P - Q).sum(axis=1), 1.0)
    elif spec.tag == "kullback-leibler":
        from scipy.special import rel_entr

        vals = np.maximum(rel_entr(P, Q).sum(axis=1), 0.0)
    else:
        vals = np.array([_f_divergence_rows(spec, a, b) for a, b in zip(P, Q)])
    return vals, i, j


def audit_f_privacy(
    q: DiscreteChannel, spec: FDivergenceSpec = TV, eps: float = math.inf, cap: int | None = None
) -> PrivacyVerdict:
    vals, i, j = neighbor_divergences(q, spec, cap)
    definition = _definition_for(spec)
    if vals.size == 0:
        return _verdict(definition, 0.0, eps)
    pair = int(np.argmax(vals))
    tight = float(vals[pair])
    witness = None
    if tight > eps + SLACK:
        P, Q = q.kernel[i[pair]], q.kernel[j[pair]]
        mask = P > Q
        witness = Witness(
            q.dataset_at(i[pair]),
            q.dataset_at(j[pair]),
            _labels(q, mask),
            "reject on the listed outputs",
            {"divergence": tight, "set_gap": float((P - Q)[mask].sum())},
        )
    return _verdict(definition, tight, eps, witness)


# ---------------------------------------------------------------------------
# conditional hypothesis testing privacy


def _subset_masks(m: int) -> np.ndarray:
    codes = np.arange(1, 2**m)
    return ((codes[:, None] >> np.arange(m)) & 1).astype(bool)


def conditional_tv(P: np.ndarray, Q: np.ndarray, masks: np.ndarray, delta_ch: float):
    """Conditional TV on every subset, with NaN where the subset is not admissible."""
    pa = masks @ P
    qa = masks @ Q
    ok = (np.minimum(pa, qa) >= delta_ch) & (pa > 0) & (qa > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cp = np.where(masks, P[None, :] / pa[:, None], 0.0)
        cq = np.where(masks, Q[None, :] / qa[:, None], 0.0)
    tv = 0.5 * np.abs(cp - cq).sum(axis=1)
    return np.where(ok, tv, np.nan)


def audit_chtp(
    q: DiscreteChannel, eps_ch: float, delta_ch: float, cap: int | None = None
) -> PrivacyVerdict:
    m = len(q.output_set)
    if m > CHTP_MAX_OUTPUTS:
        raise ResourceError(f"CHTP audit enumerates subsets; |Theta| = {m} > {CHTP_MAX_OUTPUTS}")
    P, Q, i, j, _ = _pairs(q, ordered=False, cap=cap)
    masks = _subset_masks(m)
    best, best_pair, best_set = 0.0, None, None
    for k in range(P.shape[0]):
        tv = conditional_tv(P[k], Q[k], masks, delta_ch)
        if np.all(np.isnan(tv)):
            continue
        s = int(np.nanargmax(tv))
        if tv[s] > best:
            best, best_pair, best_set = float(tv[s]), k, s
    witness = None
    if best > eps_ch + SLACK:
        k, mask = best_pair, masks[best_set]
        pa, qa = P[k][mask].sum(), Q[k][mask].sum()
        psi = mask & (P[k] / pa < Q[k] / qa)
        errors = P[k][psi].sum() / pa + Q[k][mask & ~psi].sum() / qa
        assert errors < 1 - eps_ch, "chtp witness failed re-verification"
        witness = Witness(
            q.dataset_at(i[k]),
            q.dataset_at(j[k]),
            _labels(q, mask),
            f"psi = 1 on {list(_labels(q, psi))}, conditional on the listed set",
            {"conditional_error_sum": errors, "q_A_given_x": pa, "q_A_given_neighbor": qa},
        )
    return _verdict("chtp", best, eps_ch, witness)


def chtp_params_from_dp(eps: float, delta: float) -> tuple[float, float]:
    if eps < 0 or delta < 0:
        raise SpecError("eps and delta must be nonnegative")
    if eps == 0:
        if delta > 0:
            raise SpecError("eps = 0 with delta > 0 has no CHTP counterpart")
        return 0.0, 0.0
    eps_ch = (1 + math.exp(-eps)) * (-math.expm1(-2 * eps))
    delta_ch = delta / (math.exp(2 * eps) - math.exp(eps))
    return eps_ch, delta_ch


def dp_params_from_chtp(eps_ch: float, delta_ch: float) -> tuple[float, float]:
    if not 0 <= eps_ch < 1:
        raise SpecError("eps_ch must lie in [0, 1)")
    if delta_ch < 0:
        raise SpecError("delta_ch must be nonnegative")
    ratio = (1 + eps_ch) / (1 - eps_ch)
    return 2 * math.log(ratio), delta_ch * ratio


def converse_chtp_params(eps: float, delta: float) -> tuple[float, float]:
    """CHTP parameters whose converse image is exactly (eps, delta)."""
    if eps < 0 or delta < 0:
        raise SpecError("eps and delta must be nonnegative")
    return math.tanh(eps / 4), delta * math.exp(-eps / 2)


@dataclass
class ConverseWitness:
    """The uniform-augmentation counterexample built from a DP violation.

    B is the violating output set for (dataset, neighbor); the augmented
    output is (y, u) with u ~ Uniform[0, 1]. The conditioning set is
    B x [0, t_B] union B^c x [0, e^{-eps/2} t_C] and the test rejects on the
    second piece. All masses are exact.
    """

    dataset: tuple
    neighbor: tuple
    violating_set: tuple
    eps: float
    delta: float
    eps_ch: float
    delta_ch: float
    t_B: float
    t_C: float
    masses: dict
    error_sum: float
    conditioning_mass: float

    @property
    def u_cut_B(self) -> float:
        return self.t_B

    @property
    def u_cut_C(self) -> float:
        return math.exp(-self.eps / 2) * self.t_C

    def holds(self) -> bool:
        return self.error_sum < 1 - self.eps_ch and self.conditioning_mass >= self.delta_ch

    def to_json(self) -> dict:
        return jsonable(
            {
                "dataset": list(self.dataset),
                "neighbor": list(self.neighbor),
                "violating_set": list(self.violating_set),
                "eps_ch": self.eps_ch,
                "delta_ch": self.delta_ch,
                "t_B": self.t_B,
                "t_C": self.t_C,
                "masses": self.masses,
                "error_sum": self.error_sum,
                "threshold": 1 - self.eps_ch,
                "conditioning_mass": self.conditioning_mass,
                "note": "checks the specific augmentation Q x Uniform[0,1]; quantifying over every "
                "less informative channel is not attempted",
            }
        )


def chtp_converse_witness(
    q: DiscreteChannel, eps: float, delta: float, cap: int | None = None
) -> ConverseWitness | None:
    P, Q, i, j, _ = _pairs(q, cap=cap)
    if P.size == 0:
        return None
    hs = hockey_stick(P, Q, eps)
    pair = int(np.argmax(hs))
    if not hs[pair] > delta + SLACK:
        return None
    p, qq = P[pair], Q[pair]
    B = p > math.exp(eps) * qq
    qB_x, qB_y = float(p[B].sum()), float(qq[B].sum())
    qC_x, qC_y = float(p[~B].sum()), float(qq[~B].sum())
    t_B = min(1.0, qC_y / qB_x)
    t_C = min(1.0, qB_x / qC_y)
    shrink = math.exp(-eps / 2)
    masses = {
        "B_x": t_B * qB_x,
        "B_neighbor": t_B * qB_y,
        "C_x": shrink * t_C * qC_x,
        "C_neighbor": shrink * t_C * qC_y,
    }
    a_x = masses["B_x"] + masses["C_x"]
    a_y = masses["B_neighbor"] + masses["C_neighbor"]
    error_sum = masses["C_x"] / a_x + masses["B_neighbor"] / a_y
    eps_ch, delta_ch = converse_chtp_params(eps, delta)
    witness = ConverseWitness(
        q.dataset_at(i[pair]),
        q.dataset_at(j[pair]),
        _labels(q, B),
        eps,
        delta,
        eps_ch,
        delta_ch,
        t_B,
        t_C,
        masses,
        error_sum,
        min(a_x, a_y),
    )
    if not witness.holds():
        raise AssertionError("converse witness failed re-verification")
    return witness


def augmented_channel(q: DiscreteChannel, witness: ConverseWitness) -> tuple[DiscreteChannel, tuple, tuple]:
    """Tabulate Q x Uniform[0,1] on the cells cut by the witness thresholds.

    Returns the finite augmented channel (a post-processing of ``q``), the
    conditioning set and the rejection region, both as output labels.
    """
    cuts = sorted({0.0, min(witness.u_cut_B, 1.0), min(witness.u_cut_C, 1.0), 1.0})
    cells = [(a, b) for a, b in zip(cuts, cuts[1:]) if b > a]
    outputs = [(y, c) for y in q.output_set for c in range(len(cells))]
    lengths = np.array([b - a for a, b in cells])
    post = np.zeros((len(q.output_set), len(outputs)))
    for yi in range(len(q.output_set)):
        post[yi, yi * len(cells) : (yi + 1) * len(cells)] = lengths
    outer = DiscreteChannel(q.output_set, 1, tuple(outputs), post)
    tilde = compose_channels(outer, q)
    in_B = set(witness.violating_set)
    region_B = tuple((y, c) for y, c in outputs if y in in_B and cells[c][1] <= witness.u_cut_B + 1e-15)
    region_C = tuple(
        (y, c) for y, c in outputs if y not in in_B and cells[c][1] <= witness.u_cut_C + 1e-15
    )
    return tilde, region_B + region_C, region_C


def conditional_error_sum(
    q: DiscreteChannel, dataset, neighbor, conditioning: Sequence, reject: Sequence
) -> tuple[float, float]:
    """(Q(psi=1 | x; A) + Q(psi=0 | x'; A), min(Q(A|x), Q(A|x'))) by direct summation."""
    row_x, row_y = q.row(dataset), q.row(neighbor)
    a_x, a_y = row_x.mass(conditioning), row_y.mass(conditioning)
    accept = [o for o in conditioning if o not in set(reject)]
    return row_x.mass(reject) / a_x + row_y.mass(accept) / a_y, min(a_x, a_y)


# ---------------------------------------------------------------------------
# post-processing


def check_information_processing(
    q: DiscreteChannel, post: DiscreteChannel, eps: float | None = None, cap: int | None = None
) -> Report:
    """Compare tight parameters of ``post o q`` against those of ``q``.

    ``eps`` is the level at which delta(eps) is compared; it defaults to half
    the tight DP epsilon of ``q`` (or 0.5 when that is infinite).
    """
    composed = compose_channels(post, q)
    report = Report("information_processing")
    dp_q = audit_dp(q, cap=cap).tight_param
    dp_c = audit_dp(composed, cap=cap).tight_param
    if eps is None:
        eps = dp_q / 2 if math.isfinite(dp_q) else 0.5
    pairs = {
        "dp_eps": (dp_q, dp_c),
        "approx_dp_delta": (
            audit_approx_dp(q, eps, cap=cap).tight_param,
            audit_approx_dp(composed, eps, cap=cap).tight_param,
        ),
        "tv": (audit_f_privacy(q, TV, cap=cap).tight_param, audit_f_privacy(composed, TV, cap=cap).tight_param),
        "kl": (audit_f_privacy(q, KL, cap=cap).tight_param, audit_f_privacy(composed, KL, cap=cap).tight_param),
    }
    for name, (before, after) in pairs.items():
        margin = 0.0 if before == after else before - after
        if math.isnan(margin):
            margin = 0.0
        report.record(margin, {"parameter": name, "original": before, "composed": after}, tol=SLACK)
        report.details[name] = {"original": before, "composed": after}
    report.details["eps_for_delta"] = eps
    return report


# ---------------------------------------------------------------------------
# analytic checks for continuous mechanisms


def gaussian_delta_profile(sensitivity: float, sigma: float, eps: float) -> float:
    """Exact delta(eps) of N(0, sigma^2) against N(sensitivity, sigma^2)."""
    if not (sensitivity > 0 and sigma > 0 and eps >= 0):
        raise SpecError("sensitivity and sigma must be positive, eps nonnegative")
    a = sensitivity / (2 * sigma)
    b = eps * sigma / sensitivity
    first = norm.cdf(a - b)
    second = math.exp(eps + norm.logcdf(-a - b))
    return float(max(0.0, first - second))


def audit_gaussian_approx_dp(spec: MechanismSpec) -> PrivacyVerdict:
    """Exact delta at the spec's eps for the worst neighbor shift 2T/n."""
    if spec.variant != "approx-dp-gaussian":
        raise SpecError("needs an approx-dp-gaussian spec")
    delta = gaussian_delta_profile(2 * spec.truncation_radius / spec.n, spec.noise_scale, spec.eps)
    return _verdict("approx_dp", delta, spec.delta, note=f"exact Gaussian delta at eps={spec.eps}")


def audit_gaussian_kl(spec: MechanismSpec, sample_a, sample_b) -> PrivacyVerdict:
    if spec.variant != "kl-gaussian":
        raise SpecError("needs a kl-gaussian spec")
    T = spec.truncation_radius
    gap = truncated_sample_mean(sample_a, T) - truncated_sample_mean(sample_b, T)
    kl = float(gap @ gap * spec.n**2 * spec.eps_kl / (4 * T**2))
    return _verdict("kl", kl, spec.eps_kl)


def worst_case_neighbors(spec: MechanismSpec, fill=None) -> tuple[np.ndarray, np.ndarray]:
    """Two samples that differ in one entry, moved between opposite boundary points."""
    T = spec.truncation_radius
    base = np.zeros((spec.n, spec.d)) if fill is None else np.array(fill, dtype=float)
    a, b = base.copy(), base.copy()
    a[0, 0], b[0, 0] = T, -T
    return a, b


def audit_smooth_laplace(spec: MechanismSpec, sample_pairs: Sequence) -> PrivacyVerdict:
    """Tight smooth-DP epsilon of the Laplace mechanism over the given sample pairs.

    For a pair the worst log density ratio over outputs is kappa * ||v - v'||_1,
    divided by d_rho with rho = min(||x - x'||, 2T).
    """
    if spec.variant != "smooth-dp-laplace":
        raise SpecError("needs a smooth-dp-laplace spec")
    T, kappa = spec.truncation_radius, spec.laplace_rate
    tight = 0.0
    for a, b in sample_pairs:
        gap = np.abs(truncated_sample_mean(a, T) - truncated_sample_mean(b, T)).sum()
        dist = smooth_distance(a, b, T)
        if dist == 0:
            if gap > 0:
                tight = math.inf
            continue
        tight = max(tight, kappa * gap / dist)
    return _verdict("smooth_dp", tight, spec.eps)
