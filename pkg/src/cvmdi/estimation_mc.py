"""Monte Carlo engine for the estimation stage.

Draws correlated pairs from the normal linear model of each recombined
channel, applies the closed-form maximum-likelihood estimators, and checks
empirically that the confidence intervals cover the true parameters at their
nominal rate. Nothing here touches the key-rate formulas; the bridge back is
`channel_estimate`, which packages two per-arm estimates for the finite-size
machinery.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .finite_size import ChannelEstimate, confidence_deltas, z_quantile

_TWO_53 = float(1 << 53)


def _rng(seed: int, path: tuple[int, ...]) -> np.random.Generator:
    # Counter-based generator keyed by (seed, path). Distinct paths give
    # independent streams, so trial counts or channel order never shift
    # the randomness of other draws.
    ss = np.random.SeedSequence(entropy=seed, spawn_key=path)
    return np.random.Generator(np.random.Philox(ss))


def _standard_normal(rng: np.random.Generator, size: int) -> np.ndarray:
    """Inverse-CDF normals from open-interval uniforms.

    integers(1, 2^53) / 2^53 lands strictly inside (0, 1), so the quantile
    function never sees an endpoint. The inverse-CDF route is used instead of
    the generator's ziggurat method because its output is pinned down by the
    uniform stream alone and does not change across library versions.
    """
    u = rng.integers(1, 1 << 53, size=size).astype(np.float64) / _TWO_53
    return ndtri(u)


@dataclass(frozen=True)
class SampleSet:
    """One channel's estimation record: sender quadratures x, receiver y."""

    x: np.ndarray
    y: np.ndarray
    m: int
    seed: int

    def __post_init__(self) -> None:
        if len(self.x) != len(self.y):
            raise ValueError(f"x and y must have equal length, got {len(self.x)} and {len(self.y)}")
        if self.m != len(self.x):
            raise ValueError(f"declared count m={self.m} does not match {len(self.x)} samples")
        if self.m < 2:
            raise ValueError(f"need at least 2 samples, got {self.m}")


def generate_samples(
    t_prime: float,
    sigma2: float,
    v_mod: float,
    m: int,
    seed: int,
    stream: tuple[int, ...] = (),
) -> SampleSet:
    """Draw m pairs from y = t' x + z with x ~ N(0, v_mod), z ~ N(0, sigma2).

    `stream` selects an independent substream of the same seed; callers use
    it to keep the two channels and the Monte Carlo trials on disjoint
    randomness without coordinating offsets. Same (seed, stream) means the
    identical SampleSet, bit for bit.
    """
    if sigma2 < 0.0:
        raise ValueError(f"noise variance must be nonnegative, got {sigma2}")
    if v_mod <= 0.0:
        raise ValueError(f"modulation variance must be positive, got {v_mod}")
    if m < 2:
        raise ValueError(f"need at least 2 samples, got {m}")
    rng = _rng(seed, tuple(stream))
    x = math.sqrt(v_mod) * _standard_normal(rng, m)
    y = t_prime * x + math.sqrt(sigma2) * _standard_normal(rng, m)
    return SampleSet(x=x, y=y, m=m, seed=seed)


@dataclass(frozen=True)
class EstimationResult:
    """Maximum-likelihood output for one channel."""

    t_hat: float  # amplitude estimate
    sigma2_hat: float  # noise variance estimate, SNU
    v_hat: float  # modulation variance estimate, SNU

    def __post_init__(self) -> None:
        if self.sigma2_hat < 0.0:
            raise ValueError(f"noise variance estimate must be nonnegative, got {self.sigma2_hat}")
        if self.v_hat <= 0.0:
            raise ValueError(f"modulation variance estimate must be positive, got {self.v_hat}")


def mle_estimate(s: SampleSet) -> EstimationResult:
    """Closed-form estimators of the normal linear model:

        t_hat      = sum x y / sum x^2,
        sigma2_hat = (1/m) sum (y - t_hat x)^2,
        v_hat      = (1/m) sum x^2.

    sigma2_hat keeps the plain 1/m likelihood normalisation rather than the
    unbiased 1/(m-1); at the sample counts used for estimation the one-unit
    difference is far below the interval widths.
    """
    sxx = float(np.dot(s.x, s.x))
    if sxx == 0.0:
        raise ValueError("all sender samples are zero; the amplitude is unidentifiable")
    t_hat = float(np.dot(s.x, s.y)) / sxx
    resid = s.y - t_hat * s.x
    return EstimationResult(
        t_hat=t_hat,
        sigma2_hat=float(np.dot(resid, resid)) / s.m,
        v_hat=sxx / s.m,
    )


def derived_channel_estimates(
    e1: EstimationResult, e2: EstimationResult
) -> tuple[float, float, float, float]:
    """Map per-arm MLEs to transmittance and excess-noise estimates.

    T = t_hat^2 and eps = (sigma2_hat - 1) / t_hat^2, both referred to the
    recombined channel. eps comes out negative whenever the noise estimate
    dips below the vacuum unit; the raw value is returned and any flooring
    is the caller's business.

    >>> derived_channel_estimates(EstimationResult(1.0, 1.0, 1.0),
    ...                           EstimationResult(1.0, 1.0, 1.0))
    (1.0, 1.0, 0.0, 0.0)
    """
    for label, e in (("first", e1), ("second", e2)):
        if e.t_hat == 0.0:
            raise ValueError(f"{label} channel amplitude estimate is zero; transmittance undefined")
    t1_sq = e1.t_hat * e1.t_hat
    t2_sq = e2.t_hat * e2.t_hat
    return (
        t1_sq,
        t2_sq,
        (e1.sigma2_hat - 1.0) / t1_sq,
        (e2.sigma2_hat - 1.0) / t2_sq,
    )


def channel_estimate(
    e1: EstimationResult, e2: EstimationResult, m: float, eps_pe: float
) -> ChannelEstimate:
    """Package two per-arm MLEs as a ChannelEstimate with interval widths.

    Noise estimates below the vacuum unit would imply negative excess noise,
    which the security analysis cannot credit to the attacker; they are
    floored to 1 SNU with a warning. Interval widths come from the estimated
    values, the only ones available at run time.
    """
    s1, s2 = e1.sigma2_hat, e2.sigma2_hat
    if s1 < 1.0 or s2 < 1.0:
        warnings.warn(
            f"noise variance estimate below vacuum ({min(s1, s2):.6g} SNU), flooring to 1",
            RuntimeWarning,
            stacklevel=2,
        )
        s1, s2 = max(s1, 1.0), max(s2, 1.0)
    est = ChannelEstimate(
        t1p=e1.t_hat,
        t2p=e2.t_hat,
        s1p2=s1,
        s2p2=s2,
        va_hat=e1.v_hat,
        vb_hat=e2.v_hat,
    )
    return confidence_deltas(est, m, eps_pe)


@dataclass(frozen=True)
class CoverageReport:
    """Empirical coverage of the three per-channel confidence intervals."""

    coverage: dict[str, float]  # keys: t_prime, sigma2, v_mod
    trials: int
    m: int
    standardized_t: np.ndarray  # (t_hat - t') / sqrt(sigma'^2 / sum x^2), one per trial
    sigma2_scaled_mean: float  # mean of m sigma2_hat / sigma'^2, expected m - 1


def coverage_experiment(
    t_prime: float,
    sigma2: float,
    v_mod: float,
    m: int,
    eps_pe: float,
    trials: int,
    seed: int,
) -> CoverageReport:
    """Repeatedly estimate a known channel and count interval hits.

    Each trial draws a fresh SampleSet on substream (trial,), runs the MLE,
    builds intervals of half-width

        dt  = z sqrt(sigma2_hat / (m v_hat)),
        ds  = z sigma2_hat sqrt(2) / sqrt(m),
        dv  = z v_hat sqrt(2) / sqrt(m),

    from the estimated values (as a real run must), and checks whether the
    true parameter landed inside. Nominal coverage is 1 - eps_pe per
    parameter. Also records the standardized amplitude statistic and the
    scaled noise statistic so the sampling laws themselves can be tested.
    Trial count changes never perturb earlier trials.
    """
    if trials < 100:
        raise ValueError(f"need at least 100 trials for a meaningful rate, got {trials}")
    if sigma2 <= 0.0:
        raise ValueError(f"coverage study needs positive noise variance, got {sigma2}")
    z = z_quantile(eps_pe)
    hits = {"t_prime": 0, "sigma2": 0, "v_mod": 0}
    standardized = np.empty(trials)
    scaled_sum = 0.0
    for trial in range(trials):
        s = generate_samples(t_prime, sigma2, v_mod, m, seed, stream=(trial,))
        e = mle_estimate(s)
        dt = z * math.sqrt(e.sigma2_hat / (m * e.v_hat))
        ds = z * e.sigma2_hat * math.sqrt(2.0) / math.sqrt(m)
        dv = z * e.v_hat * math.sqrt(2.0) / math.sqrt(m)
        if abs(e.t_hat - t_prime) <= dt:
            hits["t_prime"] += 1
        if abs(e.sigma2_hat - sigma2) <= ds:
            hits["sigma2"] += 1
        if abs(e.v_hat - v_mod) <= dv:
            hits["v_mod"] += 1
        standardized[trial] = (e.t_hat - t_prime) / math.sqrt(sigma2 / (m * e.v_hat))
        scaled_sum += m * e.sigma2_hat / sigma2
    return CoverageReport(
        coverage={k: v / trials for k, v in hits.items()},
        trials=trials,
        m=m,
        standardized_t=standardized,
        sigma2_scaled_mean=scaled_sum / trials,
    )


def dump_samples(s: SampleSet, path: str) -> None:
    """Write the raw pairs as two whitespace-separated columns, x then y."""
    np.savetxt(path, np.column_stack([s.x, s.y]), fmt="%.17g")
