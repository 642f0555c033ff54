"""Envelope screening and KDE conflict probabilities over separation series."""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
from scipy.stats import gaussian_kde, norm

from src.core.config import settings
from src.core.exceptions import NumericalError, UndefinedConditionalError
from src.schemas.report import Verdict
from src.services.apc import Surrogate

logger = logging.getLogger(__name__)

NO_CONFLICT_PROBABILITY = 1e-6
DEGENERATE_RTOL = 1e-9

@dataclass(frozen=True)
class EnvelopeSeries:
    times: np.ndarray
    mean: np.ndarray
    sigma: np.ndarray
    threshold: float
    multiplier: float = 2.0

    @property
    def lower(self) -> np.ndarray:
        return self.mean - self.multiplier * self.sigma

    @property
    def upper(self) -> np.ndarray:
        return self.mean + self.multiplier * self.sigma

def envelope_series(
    node_separations: np.ndarray,
    weights: np.ndarray,
    times: Optional[np.ndarray] = None,
    threshold: float = settings.SEPARATION_THRESHOLD_M,
    multiplier: float = settings.SIGMA_MULTIPLIER,
) -> EnvelopeSeries:
    """Weighted node mean and sigma per step"""
    node_separations = np.atleast_2d(np.asarray(node_separations, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    if node_separations.shape[0] != weights.size:
        raise ValueError(f"{node_separations.shape[0]} node series but {weights.size} weights")
    if not math.isclose(weights.sum(), 1.0, abs_tol=1e-10):
        raise ValueError(f"quadrature weights sum to {weights.sum()}, expected 1")
    mean = weights @ node_separations
    variance = weights @ (node_separations - mean) ** 2
    sigma = np.sqrt(np.clip(variance, 0.0, None))
    if times is None:
        times = np.arange(mean.size, dtype=np.float64)
    return EnvelopeSeries(times=np.asarray(times, dtype=np.float64), mean=mean, sigma=sigma,
                          threshold=threshold, multiplier=multiplier)

def envelope_verdict(env: EnvelopeSeries) -> Tuple[bool, Optional[float]]:
    """(crosses, first crossing time); crossing means lower bound strictly below threshold"""
    below = np.flatnonzero(env.lower < env.threshold)
    if below.size == 0:
        return False, None
    return True, float(env.times[below[0]])

def min_distance_index(env: EnvelopeSeries) -> int:
    return int(np.argmin(env.mean))

def is_degenerate(samples: np.ndarray) -> bool:
    """True when the spread is below DEGENERATE_RTOL relative to the magnitude"""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if samples.size < 2:
        return True
    spread = float(np.std(samples, ddof=1))
    return not spread > DEGENERATE_RTOL * (1.0 + abs(float(np.mean(samples))))

def silverman_bandwidth(samples: np.ndarray) -> float:
    """(4 / (3q))^(1/5) * sample standard deviation"""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if samples.size < 2:
        raise NumericalError("bandwidth needs at least 2 samples")
    if is_degenerate(samples):
        raise NumericalError("samples have zero variance; the kernel bandwidth is undefined")
    return (4.0 / (3.0 * samples.size)) ** 0.2 * float(np.std(samples, ddof=1))

def silverman_bandwidth_nd(samples: np.ndarray) -> np.ndarray:
    """Per-axis rule (4 / ((d + 2) q))^(1/(d + 4)) * sigma_axis for a (q, d) sample"""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    q, d = samples.shape
    if any(is_degenerate(samples[:, j]) for j in range(d)):
        raise NumericalError("samples have zero variance along an axis; the kernel bandwidth is undefined")
    sigma = np.std(samples, axis=0, ddof=1)
    return (4.0 / ((d + 2.0) * q)) ** (1.0 / (d + 4.0)) * sigma

@dataclass(frozen=True)
class KdeModel:
    """Gaussian product-kernel density over (q, d) samples"""
    samples: np.ndarray
    bandwidth: np.ndarray

    @property
    def dimension(self) -> int:
        return self.samples.shape[1]

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    def density(self, x: np.ndarray) -> np.ndarray:
        """Density at points x, shape (m,) for d = 1 or (m, d)"""
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.dimension)
        out = np.empty(x.shape[0])
        chunk = max(1, 2_000_000 // max(1, self.size * self.dimension))
        for start in range(0, x.shape[0], chunk):
            block = x[start:start + chunk]
            z = (block[:, None, :] - self.samples[None, :, :]) / self.bandwidth
            out[start:start + chunk] = np.prod(norm.pdf(z), axis=-1).mean(axis=1)
        return out / np.prod(self.bandwidth)

    def cdf_below(self, bounds: Sequence[float]) -> float:
        """P(X_1 < b_1, ..., X_d < b_d) as an exact Gaussian-mixture rectangle probability"""
        bounds = np.asarray(bounds, dtype=np.float64).reshape(self.dimension)
        z = (bounds[None, :] - self.samples) / self.bandwidth
        return float(np.mean(np.prod(norm.cdf(z), axis=1)))

@dataclass(frozen=True)
class MarginalKde:
    """1-D Gaussian KDE of separation samples"""
    kde: gaussian_kde

    dimension = 1

    @property
    def size(self) -> int:
        return int(self.kde.n)

    @property
    def samples(self) -> np.ndarray:
        return self.kde.dataset.T

    @property
    def bandwidth(self) -> np.ndarray:
        return np.sqrt(np.diag(self.kde.covariance))

    def density(self, x: np.ndarray) -> np.ndarray:
        return self.kde(np.asarray(x, dtype=np.float64).reshape(-1))

    def cdf_below(self, bounds: Sequence[float]) -> float:
        bound = float(np.ravel(bounds)[0])
        return float(np.clip(self.kde.integrate_box_1d(-math.inf, bound), 0.0, 1.0))

def kde_pdf(samples: np.ndarray, eta: Optional[float] = None) -> Union[MarginalKde, KdeModel]:
    """1-D model; bandwidth from Silverman's rule unless given"""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if eta is not None and not float(eta) > 0.0:
        raise ValueError(f"bandwidth must be positive, got {eta}")
    if is_degenerate(samples):
        if eta is None:
            raise NumericalError("samples have zero variance; the kernel bandwidth is undefined")
        # gaussian_kde needs sample spread; a fixed bandwidth does not
        return KdeModel(samples=samples.reshape(-1, 1), bandwidth=np.array([float(eta)]))
    # gaussian_kde scales the factor by the sample standard deviation
    bw_method = "silverman" if eta is None else float(eta) / float(np.std(samples, ddof=1))
    return MarginalKde(gaussian_kde(samples, bw_method=bw_method))

def kde_cdf_below(model: Union[MarginalKde, KdeModel], x0: float) -> float:
    return model.cdf_below([x0])

def pdf_grid(model: Union[MarginalKde, KdeModel], n: int = 201, pad: float = 6.0):
    """Presentation grid over the sample range padded by `pad` bandwidths.

    Returns:
        d = 1: (x, density)
        d = 2: (x, y, density[len(y), len(x)], cdf[len(y), len(x)])
    """
    lows = model.samples.min(axis=0) - pad * model.bandwidth
    highs = model.samples.max(axis=0) + pad * model.bandwidth
    axes = [np.linspace(lo, hi, n) for lo, hi in zip(lows, highs)]
    if model.dimension == 1:
        return axes[0], model.density(axes[0])
    if model.dimension != 2:
        raise ValueError("pdf_grid supports d = 1 or 2")
    x, y = axes
    # the product kernel separates, so both grids are (n x q) @ (q x n) products
    zx = (x[:, None] - model.samples[None, :, 0]) / model.bandwidth[0]
    zy = (y[:, None] - model.samples[None, :, 1]) / model.bandwidth[1]
    density = norm.pdf(zy) @ norm.pdf(zx).T / (model.size * np.prod(model.bandwidth))
    cdf = norm.cdf(zy) @ norm.cdf(zx).T / model.size
    return x, y, density, cdf

def resample_rows(xi_samples: np.ndarray, bootstrap: int, seed: int) -> np.ndarray:
    """xi rows, optionally extended to bootstrap * R rows drawn with replacement"""
    if bootstrap <= 1:
        return xi_samples
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, xi_samples.shape[0], size=bootstrap * xi_samples.shape[0])
    return xi_samples[picks]

@dataclass(frozen=True)
class ProbabilityEstimate:
    probability: float
    samples: np.ndarray
    model: Optional[Union[MarginalKde, KdeModel]]
    degenerate: bool = False

    @property
    def bandwidth(self) -> Optional[float]:
        return None if self.model is None else float(self.model.bandwidth[0])

def conflict_probability(
    surrogate: Surrogate,
    t_index: int,
    xi_samples: np.ndarray,
    threshold: float = settings.SEPARATION_THRESHOLD_M,
) -> ProbabilityEstimate:
    """P(d(t) < threshold) from a KDE of the surrogate at every xi row"""
    distances = surrogate.evaluate(xi_samples, t_index)
    if is_degenerate(distances):
        probability = float(np.mean(distances < threshold))
        logger.warning(
            f"Separation samples at step {t_index} are degenerate; using the hard threshold comparison ({probability:g})"
        )
        return ProbabilityEstimate(probability=probability, samples=distances, model=None, degenerate=True)
    model = kde_pdf(distances)
    return ProbabilityEstimate(probability=kde_cdf_below(model, threshold), samples=distances, model=model)

@dataclass(frozen=True)
class JointConditional:
    model: KdeModel
    condition_probability: float
    joint_probability: float
    marginal_probability: float

    @property
    def conditional_probability(self) -> float:
        return min(1.0, self.joint_probability / self.condition_probability)

def joint_conditional(
    surrogate: Surrogate,
    xi_samples: np.ndarray,
    t1_index: int,
    t2_index: int,
    bound: float,
    threshold: float = settings.SEPARATION_THRESHOLD_M,
) -> JointConditional:
    """Bivariate KDE of (d(t1), d(t2)) and P(d(t2) < threshold | d(t1) < bound)"""
    if t1_index == t2_index:
        raise ValueError("conditioning and target instants must differ")
    pairs = np.column_stack([
        surrogate.evaluate(xi_samples, t1_index),
        surrogate.evaluate(xi_samples, t2_index),
    ])
    model = KdeModel(samples=pairs, bandwidth=silverman_bandwidth_nd(pairs))
    condition = model.cdf_below([bound, math.inf])
    if condition < 1e-12:
        raise UndefinedConditionalError(
            f"P(d(t1) < {bound:.1f} m) = {condition:.3g}; the conditional probability is undefined"
        )
    return JointConditional(
        model=model,
        condition_probability=condition,
        joint_probability=model.cdf_below([bound, threshold]),
        marginal_probability=model.cdf_below([math.inf, threshold]),
    )

@dataclass(frozen=True)
class EnsembleBaseline:
    members: int
    probability: float
    conditional_probability: Optional[float]
    min_over_time_probability: float

def ensemble_baseline(
    member_separations: np.ndarray,
    threshold: float,
    t_index: int,
    conditioning: Optional[Tuple[int, float]] = None,
) -> EnsembleBaseline:
    """Fractions of members in conflict at t*, conditioned on d(t1) < B, and at any instant"""
    member_separations = np.atleast_2d(np.asarray(member_separations, dtype=np.float64))
    n_members = member_separations.shape[0]
    if n_members < 1:
        raise ValueError("baseline needs at least one member")
    hit = member_separations[:, t_index] < threshold
    conditional = None
    if conditioning is not None:
        t1_index, bound = conditioning
        given = member_separations[:, t1_index] < bound
        if not np.any(given):
            raise UndefinedConditionalError("no member satisfies the conditioning event")
        conditional = float(np.count_nonzero(hit & given) / np.count_nonzero(given))
    return EnsembleBaseline(
        members=n_members,
        probability=float(np.count_nonzero(hit) / n_members),
        conditional_probability=conditional,
        min_over_time_probability=float(np.mean(member_separations.min(axis=1) < threshold)),
    )

def time_index(times: np.ndarray, t: float) -> int:
    """Nearest grid index, clipped to the horizon"""
    if t < times[0] or t > times[-1]:
        logger.warning(f"Instant {t:.2f} s lies outside [{times[0]:.0f}, {times[-1]:.0f}] s; clipping")
    return int(np.argmin(np.abs(times - t)))

def probe_indices(
    times: np.ndarray,
    center_index: int,
    probe_times: Sequence[float] = (),
    probe_count: int = 5,
    probe_spacing: float = 30.0,
) -> List[int]:
    """Explicit probe instants, or `probe_count` instants spaced around the centre"""
    if probe_times:
        wanted = list(probe_times)
    else:
        offsets = (np.arange(probe_count) - 0.5 * (probe_count - 1)) * probe_spacing
        wanted = list(times[center_index] + offsets)
    indices: List[int] = []
    for t in wanted:
        k = int(np.argmin(np.abs(times - np.clip(t, times[0], times[-1]))))
        if k not in indices:
            indices.append(k)
    return indices

def decide_verdict(
    crosses: bool,
    probability: Optional[float],
    high_risk: float = settings.HIGH_RISK_PROBABILITY,
) -> Verdict:
    """Envelope crossing wins; otherwise the largest probed probability decides"""
    if crosses:
        return Verdict.CONFLICT_BY_ENVELOPE
    if probability is None:
        return Verdict.FAILED
    if probability > high_risk:
        return Verdict.CONFLICT_BY_PROBABILITY
    if probability < NO_CONFLICT_PROBABILITY:
        return Verdict.NO_CONFLICT
    return Verdict.CLEAR_BY_PROBABILITY
