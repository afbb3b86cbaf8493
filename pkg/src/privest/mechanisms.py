"""Private estimators: truncated mean with three noise models, Laplace histogram, release-one-at-random."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DiscreteChannel, DomainError, SpecError, check_cap, make_channel

VARIANTS = ("kl-gaussian", "approx-dp-gaussian", "smooth-dp-laplace")


# ---------------------------------------------------------------------------
# randomness


@dataclass(frozen=True)
class RngStream:
    """Counter-style stream: the same (master_seed, stream_index) always yields the same draws."""

    master_seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=(self.stream_index,))
        return np.random.Generator(np.random.PCG64(seq))


def _as_generator(rng: RngStream | np.random.Generator) -> np.random.Generator:
    return rng.generator() if isinstance(rng, RngStream) else rng


def _open_uniform(gen: np.random.Generator, size) -> np.ndarray:
    u = gen.random(size)
    return np.where(u == 0.0, 2.0**-54, u)


def laplace_noise(gen: np.random.Generator, scale: float, size) -> np.ndarray:
    """Laplace(0, scale) by inverting the CDF of a single uniform per draw."""
    centered = _open_uniform(gen, size) - 0.5
    return -scale * np.sign(centered) * np.log1p(-2.0 * np.abs(centered))


def gaussian_noise(gen: np.random.Generator, sigma: float, size: int) -> np.ndarray:
    """N(0, sigma^2) draws by the Box-Muller transform."""
    pairs = (size + 1) // 2
    u1 = 1.0 - gen.random(pairs)
    u2 = gen.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([radius * np.cos(2 * np.pi * u2), radius * np.sin(2 * np.pi * u2)])
    return sigma * z[:size]


# ---------------------------------------------------------------------------
# specs


def _encode_float(x):
    if x is None:
        return None
    return "inf" if math.isinf(x) else x


def _decode_float(x):
    if x is None:
        return None
    if isinstance(x, str):
        if x.lower() in ("inf", "infinity", "+inf"):
            return math.inf
        raise SpecError(f"cannot parse number {x!r}")
    return float(x)


@dataclass(frozen=True)
class MechanismSpec:
    """Configuration of the truncated-mean estimator.

    ``T`` is derived from the other fields unless given explicitly; see
    :attr:`truncation_radius`.
    """

    variant: str
    r: float
    k_moments: float
    d: int
    n: int
    eps: float | None = None
    delta: float | None = None
    eps_kl: float | None = None
    T: float | None = None

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise SpecError(f"unknown variant {self.variant!r}")
        if not self.r > 0:
            raise SpecError("r must be positive")
        if not self.k_moments > 1:
            raise SpecError("k_moments must exceed 1")
        if self.d < 1 or self.n < 1:
            raise SpecError("d and n must be positive")
        if self.variant == "approx-dp-gaussian":
            if self.delta is None or not 0 < self.delta < 1:
                raise SpecError("approx-dp-gaussian needs delta in (0, 1)")
        elif self.delta is not None:
            raise SpecError("delta is only meaningful for approx-dp-gaussian")
        if self.variant == "kl-gaussian":
            if self.eps_kl is None or not self.eps_kl > 0:
                raise SpecError("kl-gaussian needs eps_kl > 0")
        else:
            if self.eps_kl is not None:
                raise SpecError("eps_kl is only meaningful for kl-gaussian")
            if self.eps is None or not self.eps > 0:
                raise SpecError(f"{self.variant} needs eps > 0")
        if self.T is not None and not self.T > 0:
            raise SpecError("T must be positive")

    @property
    def truncation_radius(self) -> float:
        if self.T is not None:
            return self.T
        k, r, n, d = self.k_moments, self.r, self.n, self.d
        if math.isinf(k):
            return r
        if self.variant == "kl-gaussian":
            return r * (n**2 * self.eps_kl / d) ** (1 / (2 * k))
        if self.variant == "approx-dp-gaussian":
            return r * (n**2 * self.eps**2 / (d * math.log(1 / self.delta))) ** (1 / (2 * k))
        return r * (n * self.eps / d) ** (1 / k)

    @property
    def noise_scale(self) -> float:
        """Gaussian standard deviation, or Laplace scale 1/kappa, per coordinate."""
        T, n = self.truncation_radius, self.n
        if self.variant == "kl-gaussian":
            return math.sqrt(2 * T**2 / (n**2 * self.eps_kl))
        if self.variant == "approx-dp-gaussian":
            return math.sqrt(2 * T**2 * math.log(1 / self.delta) / (n**2 * self.eps**2))
        return 1.0 / self.laplace_rate

    @property
    def laplace_rate(self) -> float:
        return self.eps * self.n / (2 * self.truncation_radius * math.sqrt(self.d))

    @property
    def noise_second_moment(self) -> float:
        """E||W||^2 of the added noise vector."""
        s = self.noise_scale
        return self.d * (2 * s**2 if self.variant == "smooth-dp-laplace" else s**2)

    def replace(self, **changes) -> "MechanismSpec":
        return dataclasses.replace(self, **changes)

    def to_json(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["k_moments"] = _encode_float(self.k_moments)
        doc["eps"] = _encode_float(self.eps)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "MechanismSpec":
        _reject_unknown(cls, doc)
        doc = dict(doc)
        for key in ("r", "k_moments", "eps", "delta", "eps_kl", "T"):
            if key in doc:
                doc[key] = _decode_float(doc[key])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise SpecError(str(exc)) from exc


@dataclass(frozen=True)
class HistogramSpec:
    d: int
    k_bins: int
    eps: float

    def __post_init__(self) -> None:
        if self.d not in (1, 2):
            raise SpecError("histograms support d = 1 or 2")
        if self.k_bins < 1:
            raise SpecError("k_bins must be at least 1")
        if not self.eps > 0:
            raise SpecError("eps must be positive")

    @property
    def total_bins(self) -> int:
        return self.k_bins**self.d

    def noise_scale(self, n: int) -> float:
        # one moved point changes two bin frequencies by 1/n each
        return 2.0 / (n * self.eps)

    def replace(self, **changes) -> "HistogramSpec":
        return dataclasses.replace(self, **changes)

    def to_json(self) -> dict:
        return {"d": self.d, "k_bins": self.k_bins, "eps": _encode_float(self.eps)}

    @classmethod
    def from_json(cls, doc: dict) -> "HistogramSpec":
        _reject_unknown(cls, doc)
        doc = dict(doc)
        if "eps" in doc:
            doc["eps"] = _decode_float(doc["eps"])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise SpecError(str(exc)) from exc


def _reject_unknown(cls, doc: dict) -> None:
    known = {f.name for f in dataclasses.fields(cls)}
    extra = set(doc) - known
    if extra:
        raise SpecError(f"unknown {cls.__name__} fields: {sorted(extra)}")


# ---------------------------------------------------------------------------
# truncated mean


def truncate_project(x, T: float) -> np.ndarray:
    """Euclidean projection of ``x`` onto the l2 ball of radius ``T``."""
    if not T > 0:
        raise SpecError("T must be positive")
    x = np.asarray(x, dtype=float)
    norm = np.linalg.norm(x)
    return x if norm <= T else x * (T / norm)


def project_rows(points: np.ndarray, T: float) -> np.ndarray:
    """Row-wise :func:`truncate_project` for an (m, d) array."""
    norms = np.linalg.norm(points, axis=1, keepdims=True)
    factor = np.minimum(1.0, T / np.where(norms > 0, norms, 1.0))
    return points * factor


def _as_sample(sample, d: int | None = None) -> np.ndarray:
    arr = np.asarray(sample, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DomainError("sample must be a sequence of vectors")
    if d is not None and arr.shape[1] != d:
        raise DomainError(f"sample dimension {arr.shape[1]} != d={d}")
    return arr


def truncated_sample_mean(sample, T: float) -> np.ndarray:
    arr = _as_sample(sample)
    return project_rows(arr, T).mean(axis=0)


def draw_noise(spec: MechanismSpec, rng: RngStream | np.random.Generator) -> np.ndarray:
    gen = _as_generator(rng)
    if spec.variant == "smooth-dp-laplace":
        return laplace_noise(gen, spec.noise_scale, spec.d)
    return gaussian_noise(gen, spec.noise_scale, spec.d)


def truncated_mean(
    sample,
    spec: MechanismSpec,
    rng: RngStream | np.random.Generator | None = None,
    *,
    diagnostic_no_noise: bool = False,
) -> np.ndarray:
    """Release the mean of the projected sample plus one draw of the spec's noise.

    ``diagnostic_no_noise=True`` returns the bare truncated mean. That output is
    NOT private and exists for oracle tests only.
    """
    arr = _as_sample(sample, spec.d)
    if arr.shape[0] != spec.n:
        raise DomainError(f"sample size {arr.shape[0]} != n={spec.n}")
    center = project_rows(arr, spec.truncation_radius).mean(axis=0)
    if diagnostic_no_noise:
        return center
    if rng is None:
        raise SpecError("a random stream is required unless diagnostic_no_noise is set")
    return center + draw_noise(spec, rng)


def mean_sensitivity(sample_a, sample_b, T: float) -> float:
    """Distance between the truncated means of two equal-length samples."""
    a, b = _as_sample(sample_a), _as_sample(sample_b)
    if a.shape != b.shape:
        raise DomainError("samples must have equal length and dimension")
    return float(np.linalg.norm(truncated_sample_mean(a, T) - truncated_sample_mean(b, T)))


def sensitivity_bounds(sample_a, sample_b, T: float) -> tuple[float, float]:
    """(metric bound, Hamming bound) on :func:`mean_sensitivity`."""
    a, b = _as_sample(sample_a), _as_sample(sample_b)
    n = a.shape[0]
    gaps = np.linalg.norm(a - b, axis=1)
    metric = float(np.minimum(gaps, 2 * T).sum() / n)
    hamming = float(2 * T / n * np.count_nonzero(np.any(a != b, axis=1)))
    return metric, hamming


def smooth_distance(sample_a, sample_b, T: float) -> float:
    """d_rho for rho(x, x') = min(||x - x'||, 2T), normalized by 2T."""
    a, b = _as_sample(sample_a), _as_sample(sample_b)
    return float(np.minimum(np.linalg.norm(a - b, axis=1), 2 * T).sum() / (2 * T))


def laplace_log_density(z, center, rate: float) -> float:
    z, center = np.asarray(z, dtype=float), np.asarray(center, dtype=float)
    return float(z.size * math.log(rate / 2) - rate * np.abs(z - center).sum())


def gaussian_output_kl(sample_a, sample_b, spec: MechanismSpec) -> float:
    """KL between the output laws of a Gaussian-noise spec on two samples."""
    if spec.variant == "smooth-dp-laplace":
        raise SpecError("gaussian_output_kl needs a Gaussian variant")
    T = spec.truncation_radius
    gap = truncated_sample_mean(sample_a, T) - truncated_sample_mean(sample_b, T)
    return float(gap @ gap / (2 * spec.noise_scale**2))


# ---------------------------------------------------------------------------
# histogram


@dataclass(frozen=True, eq=False)
class HistogramEstimate:
    """Piecewise-constant density on the unit cube with ``k_bins`` cells per axis."""

    heights: np.ndarray
    k_bins: int
    d: int

    def bin_index(self, points) -> tuple:
        pts = _as_sample(points, self.d)
        cells = np.minimum((pts * self.k_bins).astype(int), self.k_bins - 1)
        return tuple(cells.T)

    def evaluate(self, points) -> np.ndarray:
        return self.heights[self.bin_index(points)]


def private_histogram(
    sample,
    spec: HistogramSpec,
    rng: RngStream | np.random.Generator | None = None,
    *,
    diagnostic_no_noise: bool = False,
) -> HistogramEstimate:
    pts = _as_sample(sample, spec.d)
    if np.any(pts < 0) or np.any(pts > 1):
        raise DomainError("histogram points must lie in the unit cube")
    n = pts.shape[0]
    k = spec.k_bins
    cells = np.minimum((pts * k).astype(int), k - 1)
    flat = np.ravel_multi_index(tuple(cells.T), (k,) * spec.d)
    freq = np.bincount(flat, minlength=spec.total_bins) / n
    if not diagnostic_no_noise and not math.isinf(spec.eps):
        if rng is None:
            raise SpecError("a random stream is required unless diagnostic_no_noise is set")
        freq = freq + laplace_noise(_as_generator(rng), spec.noise_scale(n), spec.total_bins)
    heights = (spec.total_bins * freq).reshape((k,) * spec.d)
    return HistogramEstimate(heights, k, spec.d)


# ---------------------------------------------------------------------------
# release one at random


def release_one_at_random(alphabet: Sequence, n: int, cap: int | None = None) -> DiscreteChannel:
    alphabet = tuple(alphabet)
    check_cap(len(alphabet) ** n, cap)
    position = {x: i for i, x in enumerate(alphabet)}

    def row(dataset):
        out = np.zeros(len(alphabet))
        for x in dataset:
            out[position[x]] += 1.0 / n
        return out

    return make_channel(alphabet, n, alphabet, row, cap)
