"""Finite-block key-rate machinery.

Pulls the whole chain together: the finite-block penalty Delta(n), the
Gaussian tail quantile behind the confidence intervals, the interval
half-widths of the channel estimators, the worst-case covariance over the
confidence region, and the assembled secret key rate per channel use,

    k = (n / N) * [beta * I_AB - chi_worst - Delta(n)],

where N signals were exchanged, m were spent on estimation and n = N - m
remain for the key.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

from scipy.special import erfcinv

from .gaussian_core import TwoModeCov, holevo_bound, mutual_information
from .protocol_model import (
    ProtocolParams,
    equivalent_one_way,
    one_way_two_mode_cov,
    pre_bs_channel_params,
)


class EstimationFailureError(RuntimeError):
    """No physically valid point in the confidence region; the protocol aborts."""


@dataclass(frozen=True)
class FiniteSizeParams:
    """Block length, estimation split and the failure-probability budget."""

    n_total: float  # total exchanged signals N
    est_fraction: float = 0.5  # fraction of N spent on parameter estimation
    eps_pe: float = 1e-10  # estimation failure probability
    eps_smooth: float = 1e-10  # smoothing parameter
    eps_pa: float = 1e-10  # privacy-amplification failure probability
    dim_hx: int = 2  # dimension of the raw-key variable space

    def __post_init__(self) -> None:
        if self.n_total < 2:
            raise ValueError(f"block length must be at least 2, got {self.n_total}")
        if not 0.0 < self.est_fraction < 1.0:
            raise ValueError(f"estimation fraction must be in (0, 1), got {self.est_fraction}")
        for name in ("eps_pe", "eps_smooth", "eps_pa"):
            val = getattr(self, name)
            if not 0.0 < val < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {val}")
        if self.dim_hx < 1:
            raise ValueError(f"dim_hx must be a positive integer, got {self.dim_hx}")

    @property
    def m_est(self) -> float:
        """Signals spent on estimation, m = est_fraction * N."""
        return self.est_fraction * self.n_total

    @property
    def n_key(self) -> float:
        """Signals left for the key, n = N - m."""
        return self.n_total - self.m_est


@dataclass(frozen=True)
class ChannelEstimate:
    """Central estimates of the two linear channels plus interval half-widths.

    Half-widths default to zero; `confidence_deltas` fills them in. The
    amplitudes live in (0, 1] because each arm is a passive loss channel.
    """

    t1p: float  # arm A amplitude estimate
    t2p: float  # arm B amplitude estimate
    s1p2: float  # arm A noise variance estimate, SNU
    s2p2: float  # arm B noise variance estimate, SNU
    va_hat: float  # sender A modulation variance estimate, SNU
    vb_hat: float  # sender B modulation variance estimate, SNU
    dt1p: float = 0.0
    dt2p: float = 0.0
    ds1p2: float = 0.0
    ds2p2: float = 0.0
    dva: float = 0.0
    dvb: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.t1p <= 1.0 or not 0.0 < self.t2p <= 1.0:
            raise ValueError(f"amplitudes must be in (0, 1]: t1p={self.t1p}, t2p={self.t2p}")
        if self.s1p2 <= 0.0 or self.s2p2 <= 0.0:
            raise ValueError(f"noise variances must be positive: {self.s1p2}, {self.s2p2}")
        if self.va_hat <= 0.0 or self.vb_hat <= 0.0:
            raise ValueError(f"modulation variances must be positive: {self.va_hat}, {self.vb_hat}")
        for name in ("dt1p", "dt2p", "ds1p2", "ds2p2", "dva", "dvb"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"half-width {name} must be nonnegative")


@dataclass(frozen=True)
class KeyRateReport:
    """Assembled key-rate evaluation for one scenario."""

    i_ab: float  # mutual information, bits
    chi_be_worst: float  # worst-case eavesdropper bound over the region, bits
    delta_n: float  # finite-block penalty, bits
    k: float  # secret key rate, bits per channel use
    worst_corner: str  # which interval endpoints realised the worst case
    status: str  # "positive" or "nonpositive"


def delta_n(fs: FiniteSizeParams) -> float:
    """Finite-block penalty in bits.

    Delta(n) = (2 dim + 3) sqrt(log2(2 / eps_smooth) / n)
             + (2 / n) log2(1 / eps_pa),

    strictly decreasing in n and vanishing as n grows without bound.
    """
    n = fs.n_key
    if n < 1.0:
        raise ValueError(f"need at least one key signal, got n = {n}")
    first = (2.0 * fs.dim_hx + 3.0) * math.sqrt(math.log2(2.0 / fs.eps_smooth) / n)
    second = (2.0 / n) * math.log2(1.0 / fs.eps_pa)
    return first + second


def z_quantile(eps_pe: float) -> float:
    """Two-sided Gaussian tail quantile: the z with erfc(z / sqrt(2)) = eps_pe.

    A standard normal leaves eps_pe / 2 of probability outside +-z on each
    side, so an interval of half-width z standard errors fails with total
    probability eps_pe.
    """
    if not 0.0 < eps_pe < 1.0:
        raise ValueError(f"eps_pe must be in (0, 1), got {eps_pe}")
    return math.sqrt(2.0) * float(erfcinv(eps_pe))


def confidence_deltas(est: ChannelEstimate, m: float, eps_pe: float) -> ChannelEstimate:
    """Fill in the six interval half-widths from m estimation samples.

    For the normal linear model y' = t' x + z the estimator laws give

        dt'     = z * sqrt(sigma'^2 / (m V)),
        dsigma'^2 = z * sigma'^2 * sqrt(2) / sqrt(m),
        dV      = z * V * sqrt(2) / sqrt(m),

    each channel using its own modulation variance. All widths shrink like
    1 / sqrt(m).
    """
    if m < 2:
        raise ValueError(f"need at least 2 estimation samples, got {m}")
    z = z_quantile(eps_pe)
    root_m = math.sqrt(m)
    return replace(
        est,
        dt1p=z * math.sqrt(est.s1p2 / (m * est.va_hat)),
        dt2p=z * math.sqrt(est.s2p2 / (m * est.vb_hat)),
        ds1p2=z * est.s1p2 * math.sqrt(2.0) / root_m,
        ds2p2=z * est.s2p2 * math.sqrt(2.0) / root_m,
        dva=z * est.va_hat * math.sqrt(2.0) / root_m,
        dvb=z * est.vb_hat * math.sqrt(2.0) / root_m,
    )


def estimate_based_cov(
    t1p: float,
    t2p: float,
    s1p2: float,
    s2p2: float,
    v_a: float,
    v_b: float,
    eta: float = 1.0,
) -> TwoModeCov:
    """Equivalent-channel covariance written in estimator coordinates.

    Substituting the per-arm estimates into the single-channel reduction
    gives, with u = V_B / (V_B + 2),

        T = (t1'^2 / t2'^2) * u / eta,
        a = V_A + 1,
        b = T V_A + 1 + u (s1'^2 + s2'^2 - 2 t2'^2) / (eta t2'^2),
        c = sqrt(T (V_A^2 + 2 V_A)).

    At eta = 1 this is the ideal-detection substitution; the 1/eta factors
    undo the detector scaling baked into detector-referred estimates. Feeding
    the true channel values reproduces `one_way_two_mode_cov` exactly.
    """
    if t1p <= 0.0 or t2p <= 0.0:
        raise ValueError(f"amplitudes must be positive: {t1p}, {t2p}")
    if v_a <= 0.0 or v_b <= 0.0:
        raise ValueError(f"modulation variances must be positive: {v_a}, {v_b}")
    u = v_b / (v_b + 2.0)
    t_eq = (t1p * t1p) / (t2p * t2p) * u / eta
    b = t_eq * v_a + 1.0 + u * (s1p2 + s2p2 - 2.0 * t2p * t2p) / (eta * t2p * t2p)
    return TwoModeCov(a=v_a + 1.0, b=b, c=math.sqrt(t_eq * (v_a * v_a + 2.0 * v_a)))


@dataclass(frozen=True)
class _WorstCase:
    """Internal corner-search result with the realising parameter values."""

    cov: TwoModeCov
    chi_be: float
    corner: str
    t1p: float
    t2p: float
    s1p2: float
    s2p2: float
    v_a: float
    v_b: float
    eta: float


_AXis = tuple[str, float, float]  # label stem, center, half-width


def _corner_token(stem: str, sign: int) -> str:
    return f"{stem}{'+' if sign > 0 else '-'}"


def _worst_case_search(
    est: ChannelEstimate,
    v_mode: str,
    eta: float,
    eta_halfwidth: float,
) -> _WorstCase:
    if v_mode not in ("exact", "estimated"):
        raise ValueError(f"v_mode must be 'exact' or 'estimated', got {v_mode!r}")
    axes: list[_AXis] = [
        ("t1", est.t1p, est.dt1p),
        ("t2", est.t2p, est.dt2p),
        ("s1", est.s1p2, est.ds1p2),
        ("s2", est.s2p2, est.ds2p2),
    ]
    if v_mode == "estimated":
        axes.append(("va", est.va_hat, est.dva))
        axes.append(("vb", est.vb_hat, est.dvb))
    axes.append(("eta", eta, eta_halfwidth))
    # Only axes with real width contribute corners; the rest stay central.
    varied = [ax for ax in axes if ax[2] > 0.0]
    fixed = {ax[0]: ax[1] for ax in axes if ax[2] == 0.0}

    best: _WorstCase | None = None
    for signs in itertools.product((-1, 1), repeat=len(varied)):
        values = dict(fixed)
        tokens = []
        for (stem, center, width), sign in zip(varied, signs):
            values[stem] = center + sign * width
            tokens.append(_corner_token(stem, sign))
        # Noise estimates cannot undercut the vacuum floor.
        values["s1"] = max(values["s1"], 1.0)
        values["s2"] = max(values["s2"], 1.0)
        if min(values["t1"], values["t2"], values["va"], values["vb"], values["eta"]) <= 0.0:
            continue
        try:
            cov = estimate_based_cov(
                values["t1"], values["t2"], values["s1"], values["s2"],
                values["va"], values["vb"], values["eta"],
            )
            chi = holevo_bound(cov)
        except ValueError:
            continue  # corner outside the physical set
        if best is None or chi > best.chi_be:
            best = _WorstCase(
                cov=cov, chi_be=chi, corner=",".join(tokens) if tokens else "central",
                t1p=values["t1"], t2p=values["t2"], s1p2=values["s1"], s2p2=values["s2"],
                v_a=values["va"], v_b=values["vb"], eta=values["eta"],
            )
    if best is None:
        raise EstimationFailureError(
            "every corner of the confidence region is unphysical; protocol aborts"
        )
    return best


def worst_case_cov(
    est: ChannelEstimate,
    v_mode: str = "estimated",
    eta: float = 1.0,
    eta_halfwidth: float = 0.0,
) -> tuple[TwoModeCov, str]:
    """Covariance in the confidence region that maximises the attacker bound.

    Evaluates the estimator-coordinate covariance at every corner of the
    interval box (2^6 corners, or 2^4 with v_mode="exact" where both
    modulation variances are treated as exactly calibrated) and returns the
    corner with the largest Holevo bound, together with a label recording
    which endpoints realised it ("central" when all widths are zero).

    An exhaustive corner search is used instead of per-axis monotonicity
    because the arm B amplitude enters the matrix in both numerator and
    denominator. An optional eta_halfwidth adds the detector efficiency as a
    seventh search axis for calibration uncertainty.
    """
    best = _worst_case_search(est, v_mode, eta, eta_halfwidth)
    return best.cov, best.corner


def _i_ab_from_cov(cov: TwoModeCov, v_a: float) -> float:
    """Mutual information implied by an equivalent-channel covariance."""
    t_eq = cov.c * cov.c / (v_a * (v_a + 2.0))
    t_eps = cov.b - 1.0 - t_eq * v_a
    chi = 1.0 / t_eq - 1.0 + t_eps / t_eq
    return mutual_information(t_eq, chi, v_a + 1.0)


def finite_key_rate(
    p: ProtocolParams,
    fs: FiniteSizeParams,
    estimate: ChannelEstimate | None = None,
    v_mode: str = "estimated",
    i_ab_worst: bool = False,
    eta_halfwidth: float = 0.0,
) -> KeyRateReport:
    """Secret key rate of one scenario with all finite-block effects.

    With estimate=None the estimator centers are placed at the true model
    values (the way the published curves are computed, no sampling involved)
    and only the interval widening acts. Passing a ChannelEstimate evaluates
    measured data instead; if its half-widths are all zero they are filled
    from (m, eps_pe) first.

    The mutual information uses the central parameters, since reconciliation
    runs on the actually observed data; i_ab_worst=True switches it to the
    worst-case corner for a fully pessimistic rate.
    """
    if estimate is None:
        ch = pre_bs_channel_params(p)
        estimate = ChannelEstimate(ch.t1p, ch.t2p, ch.s1p2, ch.s2p2, p.v_a, p.v_b)
    if not any((estimate.dt1p, estimate.dt2p, estimate.ds1p2, estimate.ds2p2,
                estimate.dva, estimate.dvb)):
        estimate = confidence_deltas(estimate, fs.m_est, fs.eps_pe)

    worst = _worst_case_search(estimate, v_mode, p.eta, eta_halfwidth)
    if i_ab_worst:
        i_ab = _i_ab_from_cov(worst.cov, worst.v_a)
    else:
        central = estimate_based_cov(
            estimate.t1p, estimate.t2p, estimate.s1p2, estimate.s2p2,
            estimate.va_hat, estimate.vb_hat, p.eta,
        )
        i_ab = _i_ab_from_cov(central, estimate.va_hat)

    dn = delta_n(fs)
    k = (fs.n_key / fs.n_total) * (p.beta * i_ab - worst.chi_be - dn)
    return KeyRateReport(
        i_ab=i_ab,
        chi_be_worst=worst.chi_be,
        delta_n=dn,
        k=k,
        worst_corner=worst.corner,
        status="positive" if k > 0.0 else "nonpositive",
    )


def asymptotic_key_rate(p: ProtocolParams) -> KeyRateReport:
    """Key rate with every finite-block effect switched off.

    All signals make key material, the penalty vanishes and the channel
    parameters are taken as exactly known, so k = beta * I_AB - chi_BE.
    """
    ow = equivalent_one_way(p)
    cov = one_way_two_mode_cov(p.v_a, ow)
    chi = holevo_bound(cov)
    i_ab = mutual_information(ow.t, ow.chi, p.v_a + 1.0)
    k = p.beta * i_ab - chi
    return KeyRateReport(
        i_ab=i_ab,
        chi_be_worst=chi,
        delta_n=0.0,
        k=k,
        worst_corner="central",
        status="positive" if k > 0.0 else "nonpositive",
    )
