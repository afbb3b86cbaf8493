"""Finite probability primitives: distributions, divergences, channels."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterator, Sequence

import numpy as np
from scipy.special import rel_entr

NORMALIZATION_TOL = 1e-12
DEFAULT_CAP = 10_000


class DomainError(ValueError):
    """Inputs live on incompatible spaces (outcome sets, alphabets, lengths)."""


class SpecError(ValueError):
    """A parameter or configuration is outside the supported range."""


class ResourceError(RuntimeError):
    """An enumeration would exceed the configured size cap."""


def check_cap(size: int, cap: int | None) -> None:
    cap = DEFAULT_CAP if cap is None else cap
    if size > cap:
        raise ResourceError(f"enumeration size {size} exceeds cap {cap}")


def _frozen(values: Any) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteDistribution:
    """Probability vector over an ordered, finite set of outcome labels."""

    outcomes: tuple
    probs: np.ndarray

    def __post_init__(self) -> None:
        outcomes = tuple(self.outcomes)
        probs = _frozen(self.probs)
        if probs.ndim != 1 or probs.shape[0] != len(outcomes):
            raise DomainError("need exactly one probability per outcome")
        if len(set(outcomes)) != len(outcomes):
            raise DomainError("duplicate outcome labels")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise DomainError("probabilities must be finite and nonnegative")
        if abs(probs.sum() - 1.0) > NORMALIZATION_TOL:
            raise DomainError(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_weights(cls, outcomes: Sequence, weights: Sequence[float]) -> "FiniteDistribution":
        w = np.asarray(weights, dtype=float)
        return cls(tuple(outcomes), w / w.sum())

    @classmethod
    def point_mass(cls, outcomes: Sequence, at: Hashable) -> "FiniteDistribution":
        outcomes = tuple(outcomes)
        probs = np.zeros(len(outcomes))
        probs[outcomes.index(at)] = 1.0
        return cls(outcomes, probs)

    def __len__(self) -> int:
        return len(self.outcomes)

    def prob(self, outcome: Hashable) -> float:
        return float(self.probs[self.outcomes.index(outcome)])

    def mass(self, subset) -> float:
        """Probability of a set of outcome labels."""
        members = set(subset)
        return float(sum(p for o, p in zip(self.outcomes, self.probs) if o in members))

    def expectation(self, fn: Callable[[Any], float]) -> float:
        return math.fsum(p * fn(o) for o, p in zip(self.outcomes, self.probs) if p > 0)


def _aligned(p: FiniteDistribution, q: FiniteDistribution) -> tuple[np.ndarray, np.ndarray]:
    if p.outcomes != q.outcomes:
        if set(p.outcomes) != set(q.outcomes) or len(p.outcomes) != len(q.outcomes):
            raise DomainError("distributions live on different outcome sets")
        index = {o: i for i, o in enumerate(q.outcomes)}
        return p.probs, q.probs[[index[o] for o in p.outcomes]]
    return p.probs, q.probs


def tv_distance(p: FiniteDistribution, q: FiniteDistribution) -> float:
    a, b = _aligned(p, q)
    return float(min(1.0, 0.5 * np.abs(a - b).sum()))


def kl_divergence(p: FiniteDistribution, q: FiniteDistribution) -> float:
    a, b = _aligned(p, q)
    return float(max(0.0, rel_entr(a, b).sum()))


# ---------------------------------------------------------------------------
# f-divergences


def _tv_generator(t):
    return 0.5 * np.abs(np.asarray(t, dtype=float) - 1.0)


def _kl_generator(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t > 0, t * np.log(np.where(t > 0, t, 1.0)), 0.0)


@dataclass(frozen=True)
class FDivergenceSpec:
    """Generator of an f-divergence.

    ``slope_at_infinity`` is lim f(t)/t as t -> inf; it fixes the value of
    q * f(p/q) on atoms with q = 0. For custom generators it is estimated
    from f(t)/t at a large t when not supplied.
    """

    tag: str
    generator: Callable[[np.ndarray], np.ndarray] | None = None
    slope_at_infinity: float | None = None

    def __post_init__(self) -> None:
        if self.tag == "total-variation":
            object.__setattr__(self, "generator", _tv_generator)
            object.__setattr__(self, "slope_at_infinity", 0.5)
        elif self.tag == "kullback-leibler":
            object.__setattr__(self, "generator", _kl_generator)
            object.__setattr__(self, "slope_at_infinity", math.inf)
        elif self.tag == "custom":
            if self.generator is None:
                raise SpecError("custom f-divergence needs a generator")
            _validate_generator(self.generator)
            if self.slope_at_infinity is None:
                big = 1e12
                slope = float(self.generator(np.array([big]))[0]) / big
                object.__setattr__(self, "slope_at_infinity", slope if slope < 1e6 else math.inf)
        else:
            raise SpecError(f"unknown f-divergence tag {self.tag!r}")

    @classmethod
    def custom(cls, fn: Callable, slope_at_infinity: float | None = None) -> "FDivergenceSpec":
        return cls("custom", fn, slope_at_infinity)


TV = FDivergenceSpec("total-variation")
KL = FDivergenceSpec("kullback-leibler")


def _validate_generator(fn: Callable, samples: int = 200) -> None:
    one = float(np.asarray(fn(np.array([1.0])))[0])
    if abs(one) > 1e-12:
        raise SpecError(f"f(1) must be 0, got {one}")
    rng = np.random.default_rng(0)
    a = np.exp(rng.uniform(-5, 5, samples))
    b = np.exp(rng.uniform(-5, 5, samples))
    fa, fb, fm = (np.asarray(fn(x), dtype=float) for x in (a, b, 0.5 * (a + b)))
    scale = 1.0 + np.abs(fa) + np.abs(fb)
    if np.any(fm > 0.5 * (fa + fb) + 1e-9 * scale):
        raise SpecError("generator fails the midpoint convexity check")


def f_divergence(spec: FDivergenceSpec, p: FiniteDistribution, q: FiniteDistribution) -> float:
    a, b = _aligned(p, q)
    if spec.tag == "total-variation":
        return float(min(1.0, 0.5 * np.abs(a - b).sum()))
    if spec.tag == "kullback-leibler":
        return float(max(0.0, rel_entr(a, b).sum()))
    return _f_divergence_rows(spec, a, b)


def _f_divergence_rows(spec: FDivergenceSpec, a: np.ndarray, b: np.ndarray) -> float:
    total = 0.0
    pos = b > 0
    if np.any(pos):
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.asarray(spec.generator(a[pos] / b[pos]), dtype=float) * b[pos]
        total += math.fsum(vals.tolist())
    # q = 0 < p: limit of t f(p/t) as t -> 0 is p * f'(inf)
    orphan = a[~pos].sum()
    if orphan > 0:
        total += orphan * spec.slope_at_infinity
    return float(total)


# ---------------------------------------------------------------------------
# product measures


def product_distribution(
    components: Sequence[FiniteDistribution], cap: int | None = None
) -> FiniteDistribution:
    """Joint law of independent draws; outcomes are tuples in lexicographic order."""
    if not components:
        raise DomainError("need at least one component")
    size = math.prod(len(c) for c in components)
    check_cap(size, cap)
    if len(components) == 1:
        return components[0]
    probs = components[0].probs
    for c in components[1:]:
        probs = np.outer(probs, c.probs).ravel()
    outcomes = tuple(itertools.product(*(c.outcomes for c in components)))
    return FiniteDistribution(outcomes, probs / probs.sum())


def power_distribution(p: FiniteDistribution, n: int, cap: int | None = None) -> FiniteDistribution:
    return product_distribution([p] * n, cap)


# ---------------------------------------------------------------------------
# channels


def dataset_key(dataset: Sequence) -> str:
    return ",".join(str(x) for x in dataset)


@dataclass(frozen=True, eq=False)
class DiscreteChannel:
    """Markov kernel from X^n to distributions over a finite output set.

    Rows of ``kernel`` are indexed by datasets in ``itertools.product``
    order over ``input_alphabet``.
    """

    input_alphabet: tuple
    n: int
    output_set: tuple
    kernel: np.ndarray
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        alphabet = tuple(self.input_alphabet)
        outputs = tuple(self.output_set)
        kernel = _frozen(self.kernel)
        if self.n < 1:
            raise DomainError("sample size must be at least 1")
        if len(set(alphabet)) != len(alphabet) or len(set(outputs)) != len(outputs):
            raise DomainError("duplicate labels")
        rows = len(alphabet) ** self.n
        if kernel.shape != (rows, len(outputs)):
            raise DomainError(f"kernel shape {kernel.shape} != {(rows, len(outputs))}")
        if np.any(kernel < 0) or not np.all(np.isfinite(kernel)):
            raise DomainError("kernel entries must be finite and nonnegative")
        if np.any(np.abs(kernel.sum(axis=1) - 1.0) > NORMALIZATION_TOL):
            raise DomainError("every kernel row must sum to 1")
        object.__setattr__(self, "input_alphabet", alphabet)
        object.__setattr__(self, "output_set", outputs)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "_index", {})

    @property
    def num_datasets(self) -> int:
        return self.kernel.shape[0]

    def datasets(self) -> Iterator[tuple]:
        return itertools.product(self.input_alphabet, repeat=self.n)

    def dataset_index(self, dataset: Sequence) -> int:
        k = len(self.input_alphabet)
        if len(dataset) != self.n:
            raise DomainError(f"dataset length {len(dataset)} != n={self.n}")
        if not self._index:
            self._index.update({x: i for i, x in enumerate(self.input_alphabet)})
        idx = 0
        for x in dataset:
            idx = idx * k + self._index[x]
        return idx

    def row(self, dataset: Sequence) -> FiniteDistribution:
        return FiniteDistribution(self.output_set, self.kernel[self.dataset_index(dataset)])

    def row_at(self, index: int) -> FiniteDistribution:
        return FiniteDistribution(self.output_set, self.kernel[index])

    def dataset_at(self, index: int) -> tuple:
        k = len(self.input_alphabet)
        digits = []
        for _ in range(self.n):
            index, d = divmod(index, k)
            digits.append(self.input_alphabet[d])
        return tuple(reversed(digits))

    def neighbor_pairs(self, ordered: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Index pairs of datasets at Hamming distance exactly one.

        Returns (i, j, coordinate) arrays. With ``ordered`` both (i, j) and
        (j, i) appear.
        """
        k = len(self.input_alphabet)
        n = self.n
        idx = np.arange(self.num_datasets)
        left, right, coord = [], [], []
        for pos in range(n):
            stride = k ** (n - 1 - pos)
            digit = (idx // stride) % k
            for shift in range(1, k):
                new_digit = (digit + shift) % k
                other = idx + (new_digit - digit) * stride
                keep = np.ones_like(idx, dtype=bool) if ordered else idx < other
                left.append(idx[keep])
                right.append(other[keep])
                coord.append(np.full(keep.sum(), pos))
        if not left:
            empty = np.zeros(0, dtype=int)
            return empty, empty, empty
        return np.concatenate(left), np.concatenate(right), np.concatenate(coord)

    # -- serialization --------------------------------------------------

    def to_json(self) -> dict:
        return {
            "input_alphabet": list(self.input_alphabet),
            "n": self.n,
            "output_set": list(self.output_set),
            "rows": {dataset_key(x): self.kernel[i].tolist() for i, x in enumerate(self.datasets())},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DiscreteChannel":
        try:
            alphabet = tuple(_hashable(v) for v in doc["input_alphabet"])
            n = int(doc["n"])
            outputs = tuple(_hashable(v) for v in doc["output_set"])
            rows = doc["rows"]
        except (KeyError, TypeError) as exc:
            raise DomainError(f"malformed channel document: {exc}") from exc
        extra = set(doc) - {"input_alphabet", "n", "output_set", "rows"}
        if extra:
            raise DomainError(f"unknown channel fields: {sorted(extra)}")
        check_cap(len(alphabet) ** n, None)
        kernel = []
        for x in itertools.product(alphabet, repeat=n):
            key = dataset_key(x)
            if key not in rows:
                raise DomainError(f"missing row for dataset {key!r}")
            kernel.append(rows[key])
        if len(rows) != len(kernel):
            raise DomainError("rows contain datasets outside X^n")
        return cls(alphabet, n, outputs, np.array(kernel, dtype=float))

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, text: str) -> "DiscreteChannel":
        return cls.from_json(json.loads(text))


def _hashable(v):
    return tuple(v) if isinstance(v, list) else v


def make_channel(
    input_alphabet: Sequence,
    n: int,
    output_set: Sequence,
    row_fn: Callable[[tuple], Sequence[float]],
    cap: int | None = None,
) -> DiscreteChannel:
    """Tabulate a channel from a function mapping each dataset to output probabilities."""
    check_cap(len(input_alphabet) ** n, cap)
    rows = [row_fn(x) for x in itertools.product(input_alphabet, repeat=n)]
    return DiscreteChannel(tuple(input_alphabet), n, tuple(output_set), np.array(rows, dtype=float))


def identity_channel(alphabet: Sequence) -> DiscreteChannel:
    k = len(alphabet)
    return DiscreteChannel(tuple(alphabet), 1, tuple(alphabet), np.eye(k))


def constant_channel(input_alphabet: Sequence, n: int, output: FiniteDistribution) -> DiscreteChannel:
    rows = np.tile(output.probs, (len(input_alphabet) ** n, 1))
    return DiscreteChannel(tuple(input_alphabet), n, output.outcomes, rows)


def random_channel(
    rng: np.random.Generator,
    alphabet_size: int,
    n: int,
    outputs: int,
    concentration: float = 1.0,
) -> DiscreteChannel:
    """Dirichlet rows; small ``concentration`` gives near-deterministic rows."""
    rows = rng.dirichlet(np.full(outputs, concentration), size=alphabet_size**n)
    rows = rows / rows.sum(axis=1, keepdims=True)
    return DiscreteChannel(tuple(range(alphabet_size)), n, tuple(f"o{i}" for i in range(outputs)), rows)


def random_distribution(rng: np.random.Generator, outcomes: Sequence) -> FiniteDistribution:
    return FiniteDistribution.from_weights(outcomes, rng.dirichlet(np.ones(len(outcomes))))


def channel_marginal(q: DiscreteChannel, pn: FiniteDistribution) -> FiniteDistribution:
    """Output law when the dataset is drawn from ``pn`` and passed through ``q``."""
    weights = np.zeros(q.num_datasets)
    for outcome, prob in zip(pn.outcomes, pn.probs):
        # n = 1 channels accept bare labels as well as 1-tuples
        dataset = (outcome,) if q.n == 1 and outcome in q.input_alphabet else outcome
        try:
            weights[q.dataset_index(dataset)] += prob
        except (KeyError, DomainError, TypeError) as exc:
            raise DomainError(f"outcome {outcome!r} is not a dataset of the channel") from exc
    probs = weights @ q.kernel
    return FiniteDistribution(q.output_set, probs / probs.sum())


def compose_channels(outer: DiscreteChannel, inner: DiscreteChannel) -> DiscreteChannel:
    """Post-process ``inner`` by ``outer``; ``outer`` must be a single-input channel on inner's outputs."""
    if outer.n != 1:
        raise DomainError("outer channel must act on single outputs (n = 1)")
    if set(outer.input_alphabet) != set(inner.output_set):
        raise DomainError("outer input alphabet must equal inner output set")
    order = [outer.input_alphabet.index(y) for y in inner.output_set]
    kernel = inner.kernel @ outer.kernel[order]
    kernel = kernel / kernel.sum(axis=1, keepdims=True)
    return DiscreteChannel(inner.input_alphabet, inner.n, outer.output_set, kernel)


def le_cam_error(m0: FiniteDistribution, m1: FiniteDistribution) -> float:
    """Smallest achievable sum of type I and type II errors for testing m0 against m1."""
    return 1.0 - tv_distance(m0, m1)
