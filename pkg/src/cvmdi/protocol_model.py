"""Physical scenario model for the relayed coherent-state protocol.

Two senders modulate coherent states with Gaussian statistics and send them
through fiber to an untrusted middle node. The node interferes the arrivals
on a balanced beam splitter and measures both output quadratures, publishing
the results. Everything here is second-moment level: fiber transmittance,
the four-mode covariance before the relay measurement, the moments the
parties can actually observe, and the reduction of the whole arrangement to
an equivalent single-channel protocol with heterodyne readout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gaussian_core import TwoModeCov

# Standard telecom fiber loss; the headline scenarios never override it.
DEFAULT_ALPHA_DB_PER_KM = 0.2

_I2 = np.eye(2)
_SIGMA_Z = np.diag([1.0, -1.0])


def fiber_transmittance(length_km: float, alpha_db_per_km: float = DEFAULT_ALPHA_DB_PER_KM) -> float:
    """Power transmittance of a fiber span, T = 10^(-alpha L / 10).

    >>> fiber_transmittance(0.0)
    1.0
    >>> fiber_transmittance(50.0, 0.2)
    0.1
    """
    if length_km < 0.0:
        raise ValueError(f"fiber length must be nonnegative, got {length_km}")
    if alpha_db_per_km <= 0.0:
        raise ValueError(f"fiber loss must be positive, got {alpha_db_per_km}")
    return 10.0 ** (-alpha_db_per_km * length_km / 10.0)


@dataclass(frozen=True)
class DetectorModel:
    """Imperfect homodyne pair at the relay, one shared (eta, v_el)."""

    eta: float  # detection efficiency, in (0, 1]
    v_el: float  # electronic noise variance, SNU

    def __post_init__(self) -> None:
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"detection efficiency must be in (0, 1], got {self.eta}")
        if self.v_el < 0.0:
            raise ValueError(f"electronic noise must be nonnegative, got {self.v_el}")

    @property
    def chi3(self) -> float:
        """Detection noise referred to the detector input."""
        return (1.0 - self.eta) / self.eta + self.v_el / self.eta

    @property
    def thermal_variance(self) -> float:
        """Variance of the thermal state modelling the lost port, eta < 1 only."""
        if self.eta >= 1.0:
            raise ValueError("thermal-state variance is undefined at unit efficiency")
        return 1.0 + self.v_el / (1.0 - self.eta)


@dataclass(frozen=True)
class ProtocolParams:
    """One complete physical scenario."""

    v_a: float  # sender A modulation variance, SNU
    v_b: float  # sender B modulation variance, SNU
    l_ac: float  # sender A to relay fiber length, km
    l_bc: float  # sender B to relay fiber length, km
    eps1: float  # arm A excess noise, SNU, channel-input referred
    eps2: float  # arm B excess noise, SNU, channel-input referred
    beta: float  # reconciliation efficiency, in [0, 1]
    alpha: float = DEFAULT_ALPHA_DB_PER_KM  # fiber loss, dB/km
    detector: DetectorModel | None = None  # None means ideal relay detection

    def __post_init__(self) -> None:
        if self.v_a < 0.0 or self.v_b < 0.0:
            raise ValueError(f"modulation variances must be nonnegative: {self.v_a}, {self.v_b}")
        if self.l_ac < 0.0 or self.l_bc < 0.0:
            raise ValueError(f"fiber lengths must be nonnegative: {self.l_ac}, {self.l_bc}")
        if self.alpha <= 0.0:
            raise ValueError(f"fiber loss must be positive, got {self.alpha}")
        if self.eps1 < 0.0 or self.eps2 < 0.0:
            raise ValueError(f"excess noises must be nonnegative: {self.eps1}, {self.eps2}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"reconciliation efficiency must be in [0, 1], got {self.beta}")

    @property
    def t1(self) -> float:
        return fiber_transmittance(self.l_ac, self.alpha)

    @property
    def t2(self) -> float:
        return fiber_transmittance(self.l_bc, self.alpha)

    @property
    def eta(self) -> float:
        """Relay detection efficiency, 1 for the ideal detector."""
        return self.detector.eta if self.detector is not None else 1.0

    @property
    def v_el(self) -> float:
        """Relay electronic noise, 0 for the ideal detector."""
        return self.detector.v_el if self.detector is not None else 0.0


@dataclass(frozen=True)
class FourModeCov:
    """Covariance of (sender A, relay port C, relay port D, sender B).

    Only the generating scalars are authoritative; the expanded 8x8 matrix is
    derived on demand and never stored.
    """

    v1: float  # sender A variance incl. vacuum, V_A + 1
    v2: float  # sender B variance incl. vacuum, V_B + 1
    t1: float  # arm A transmittance
    t2: float  # arm B transmittance
    chi1: float  # arm A total input-referred noise, 1/T1 - 1 + eps1
    chi2: float  # arm B total input-referred noise, 1/T2 - 1 + eps2

    @property
    def matrix(self) -> np.ndarray:
        """Expanded 8x8 covariance, quadrature order (xA, pA, xC, pC, xD, pD, xB, pB)."""
        ka = math.sqrt(0.5 * self.t1 * (self.v1 * self.v1 - 1.0))
        kb = math.sqrt(0.5 * self.t2 * (self.v2 * self.v2 - 1.0))
        relay = 0.5 * self.t1 * (self.v1 + self.chi1) + 0.5 * self.t2 * (self.v2 + self.chi2)
        cross = 0.5 * self.t1 * (self.v1 + self.chi1) - 0.5 * self.t2 * (self.v2 + self.chi2)
        blocks = [
            [self.v1 * _I2, ka * _SIGMA_Z, ka * _SIGMA_Z, 0.0 * _I2],
            [ka * _SIGMA_Z, relay * _I2, cross * _I2, kb * _SIGMA_Z],
            [ka * _SIGMA_Z, cross * _I2, relay * _I2, -kb * _SIGMA_Z],
            [0.0 * _I2, kb * _SIGMA_Z, -kb * _SIGMA_Z, self.v2 * _I2],
        ]
        return np.block(blocks)


def build_four_mode_cov(p: ProtocolParams) -> FourModeCov:
    """Pre-measurement four-mode covariance of the scenario.

    Detection imperfections act at the relay's measurement, so the state
    itself does not depend on the detector model.
    """
    t1, t2 = p.t1, p.t2
    if t1 == 0.0 or t2 == 0.0:
        raise ValueError("degenerate channel: fiber transmittance underflowed to zero")
    chi1 = 1.0 / t1 - 1.0 + p.eps1
    chi2 = 1.0 / t2 - 1.0 + p.eps2
    return FourModeCov(p.v_a + 1.0, p.v_b + 1.0, t1, t2, chi1, chi2)


@dataclass(frozen=True)
class SecondMoments:
    """Second moments both parties can observe or announce, SNU."""

    x1_sq: float  # sender A modulation variance
    x2_sq: float  # sender B modulation variance
    y1_sq: float  # relay port C variance
    y2_sq: float  # relay port D variance (equals y1_sq by symmetry)
    x1y1: float  # sender A vs port C covariance
    x2y2: float  # sender B vs port D covariance
    y1y2: float  # port C vs port D covariance


def observed_second_moments(p: ProtocolParams) -> SecondMoments:
    """Observable moments of the relay outputs, with or without detector losses."""
    t1, t2 = p.t1, p.t2
    eta, v_el = p.eta, p.v_el
    y_sq = 0.5 * eta * (t1 * p.v_a + t2 * p.v_b) + 1.0 + v_el \
        + 0.5 * eta * (t1 * p.eps1 + t2 * p.eps2)
    y1y2 = 0.5 * eta * (t1 * p.v_a - t2 * p.v_b) + 0.5 * eta * (t1 * p.eps1 - t2 * p.eps2)
    return SecondMoments(
        x1_sq=p.v_a,
        x2_sq=p.v_b,
        y1_sq=y_sq,
        y2_sq=y_sq,
        x1y1=math.sqrt(0.5 * eta * t1) * p.v_a,
        x2y2=math.sqrt(0.5 * eta * t2) * p.v_b,
        y1y2=y1y2,
    )


def pre_bs_transform(y1, y2):
    """Undo the balanced beam splitter: y1' = (y1 + y2)/sqrt(2), y2' = (y1 - y2)/sqrt(2).

    Works elementwise on scalars or arrays. In expectation the recombined
    variances satisfy <y1'^2> = <y1^2> + <y1 y2> and <y2'^2> = <y2^2> - <y1 y2>.
    """
    s = math.sqrt(2.0)
    return (y1 + y2) / s, (y1 - y2) / s


@dataclass(frozen=True)
class PreBsChannels:
    """Per-arm linear channel y' = t' x + z seen after undoing the beam splitter."""

    t1p: float  # arm A amplitude
    t2p: float  # arm B amplitude
    s1p2: float  # arm A noise variance, var(z1)
    s2p2: float  # arm B noise variance, var(z2)


def pre_bs_channel_params(p: ProtocolParams) -> PreBsChannels:
    """True parameters of the two independent linear channels.

    Recombining the two measured ports separates the senders, so each one
    faces a scalar Gaussian channel. With ideal detection t_i' = sqrt(T_i)
    and var(z_i) = 1 + T_i eps_i. An imperfect detector pair scales the
    amplitude by sqrt(eta) and adds its electronic noise at the output,
    giving t_i' = sqrt(eta T_i) and var(z_i) = 1 + v_el + eta T_i eps_i.
    Either way <y_i'^2> = t_i'^2 V + var(z_i) reproduces the observable
    moment combination <y_i^2> +- <y1 y2>.
    """
    t1, t2 = p.t1, p.t2
    eta, v_el = p.eta, p.v_el
    return PreBsChannels(
        t1p=math.sqrt(eta * t1),
        t2p=math.sqrt(eta * t2),
        s1p2=1.0 + v_el + eta * t1 * p.eps1,
        s2p2=1.0 + v_el + eta * t2 * p.eps2,
    )


@dataclass(frozen=True)
class OneWayEquivalent:
    """Single-channel reduction of the relayed protocol.

    The relay plus sender B's displacement act on sender A's state like one
    Gaussian channel with transmittance T and excess noise eps_prime. T can
    exceed 1 when arm B is much lossier than arm A; the key-rate formulas
    remain valid because eps_prime grows along with it.
    """

    t: float  # equivalent transmittance
    eps_prime: float  # equivalent excess noise, SNU
    g: float  # displacement gain applied by sender B

    def __post_init__(self) -> None:
        if self.t <= 0.0:
            raise ValueError(f"equivalent transmittance must be positive, got {self.t}")
        if self.eps_prime < 0.0:
            raise ValueError(f"equivalent excess noise must be nonnegative, got {self.eps_prime}")
        if self.g <= 0.0:
            raise ValueError(f"displacement gain must be positive, got {self.g}")

    @property
    def chi(self) -> float:
        """Total channel noise referred to the input, 1/T - 1 + eps_prime."""
        return 1.0 / self.t - 1.0 + self.eps_prime


def equivalent_one_way(p: ProtocolParams) -> OneWayEquivalent:
    """Reduce the scenario to its equivalent single channel.

    The displacement gain g is chosen to minimise the equivalent excess
    noise; with that choice T = (T1 / 2) g^2 and, for ideal detection,

        eps_prime = eps1 + [T2 (eps2 - 2) + 2] / T1.

    An imperfect relay detector moves g to sqrt(2 / (eta T2)) * sqrt(V_B /
    (V_B + 2)) and adds 2 chi3 / T1 of detection noise.
    """
    t1, t2 = p.t1, p.t2
    if t1 <= 0.0 or t2 <= 0.0:
        raise ValueError("degenerate channel: fiber transmittance underflowed to zero")
    if p.v_b <= 0.0:
        raise ValueError("displacement gain undefined for zero modulation on arm B")
    if p.detector is None:
        g = math.sqrt(2.0 / t2) * math.sqrt(p.v_b / (p.v_b + 2.0))
        eps_prime = p.eps1 + (t2 * (p.eps2 - 2.0) + 2.0) / t1
    else:
        eta = p.detector.eta
        g = math.sqrt(2.0 / (eta * t2)) * math.sqrt(p.v_b / (p.v_b + 2.0))
        chi1 = 1.0 / t1 - 1.0 + p.eps1
        chi2 = 1.0 / t2 - 1.0 + p.eps2
        eps_prime = 1.0 + (t1 * chi1 + t2 * chi2 - t2) / t1 + 2.0 * p.detector.chi3 / t1
    t_eq = 0.5 * t1 * g * g
    return OneWayEquivalent(t=t_eq, eps_prime=eps_prime, g=g)


def one_way_two_mode_cov(v_a: float, ow: OneWayEquivalent) -> TwoModeCov:
    """Two-mode covariance shared over the equivalent channel.

    a = V_A + 1, b = T V_A + 1 + T eps_prime, c = sqrt(T ((V_A+1)^2 - 1)).
    """
    v1 = v_a + 1.0
    try:
        return TwoModeCov(
            a=v1,
            b=ow.t * v_a + 1.0 + ow.t * ow.eps_prime,
            c=math.sqrt(ow.t * (v1 * v1 - 1.0)),
        )
    except ValueError as exc:
        raise ValueError(
            f"unphysical equivalent channel (T={ow.t:.6g}, eps_prime={ow.eps_prime:.6g}, "
            f"v_a={v_a:.6g}): {exc}"
        ) from exc
