"""Gaussian-state entropy primitives for two-mode covariance data.

All variances are in shot-noise units (SNU, vacuum variance = 1) and all
entropies are in bits. A two-mode Gaussian state in standard form is fully
described by three scalars (a, b, c):

    cov = [[ a*I2,       c*sigma_z ],
           [ c*sigma_z,  b*I2      ]]

where I2 is the 2x2 identity and sigma_z = diag(1, -1). That is the only
shape the key-rate chain ever needs, so everything here works on the scalar
triple directly instead of an explicit 4x4 matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Absolute slack on symplectic eigenvalues. Values in [1, 1 + EIG_TOL) are
# snapped to exactly 1 before entering the entropy function so that rounding
# noise near the vacuum limit cannot produce log-domain garbage.
EIG_TOL = 1e-9


@dataclass(frozen=True)
class TwoModeCov:
    """Standard-form two-mode covariance (a, b, c), all in SNU."""

    a: float  # variance of mode A
    b: float  # variance of mode B
    c: float  # correlation amplitude

    def __post_init__(self) -> None:
        if self.a < 1.0 - EIG_TOL or self.b < 1.0 - EIG_TOL:
            raise ValueError(
                f"mode variances must be at least the vacuum unit: a={self.a}, b={self.b}"
            )
        c2 = self.c * self.c
        # Both cross bounds must hold, otherwise one symplectic eigenvalue of
        # the pair drops below 1 and the state is unphysical.
        for bound, label in (
            ((self.a - 1.0) * (self.b + 1.0), "(a-1)(b+1)"),
            ((self.a + 1.0) * (self.b - 1.0), "(a+1)(b-1)"),
        ):
            if c2 > bound + EIG_TOL * max(1.0, abs(bound)):
                raise ValueError(
                    f"unphysical correlation: c^2 = {c2:.9g} exceeds {label} = {bound:.9g}"
                )


@dataclass(frozen=True)
class SymplecticSpectrum:
    """Symplectic eigenvalues of a physical two-mode state.

    lambda1 >= lambda2 belong to the joint state; lambda3_cond is the single
    remaining eigenvalue of mode A after mode B has been measured with a
    heterodyne detector.
    """

    lambda1: float
    lambda2: float
    lambda3_cond: float


def _snap(lam: float) -> float:
    """Clamp an eigenvalue in [1 - EIG_TOL, 1 + EIG_TOL) to exactly 1."""
    if lam < 1.0 - EIG_TOL:
        raise ValueError(f"symplectic eigenvalue {lam!r} below the vacuum limit")
    if lam < 1.0 + EIG_TOL:
        return 1.0
    return lam


def g_func(x: float) -> float:
    """Von Neumann entropy of a thermal state with mean photon number x.

    G(x) = (x + 1) log2(x + 1) - x log2(x), in bits, with the continuity
    convention G(0) = 0. G is continuous and strictly increasing.

    >>> g_func(0.0)
    0.0
    >>> g_func(1.0)
    2.0
    """
    if x < 0.0:
        raise ValueError(f"g_func requires x >= 0, got {x}")
    if x == 0.0:
        return 0.0
    return (x + 1.0) * math.log2(x + 1.0) - x * math.log2(x)


def symplectic_eigenvalues(cov: TwoModeCov) -> tuple[float, float]:
    """Both symplectic eigenvalues of the joint state, largest first.

    For the standard form the closed solution is

        lambda_{1,2}^2 = (Delta +- sqrt(Delta^2 - 4 D^2)) / 2,

    with Delta = a^2 + b^2 - 2 c^2 and D = det = a b - c^2. The product
    lambda1 * lambda2 equals D for any physical input.
    """
    a, b, c = cov.a, cov.b, cov.c
    delta = a * a + b * b - 2.0 * c * c
    det = a * b - c * c
    disc = delta * delta - 4.0 * det * det
    if disc < -EIG_TOL * max(1.0, delta * delta):
        raise ValueError(f"negative symplectic discriminant {disc:.3e}")
    root = math.sqrt(max(disc, 0.0))
    lam1 = math.sqrt((delta + root) / 2.0)
    lam2 = math.sqrt(max((delta - root) / 2.0, 0.0))
    return _snap(lam1), _snap(lam2)


def conditional_eigenvalue_heterodyne(cov: TwoModeCov) -> float:
    """Eigenvalue of mode A after a heterodyne measurement of mode B.

    Heterodyne mixes mode B with one vacuum unit, so the conditional variance
    of A is a - c^2 / (b + 1); for a one-mode Gaussian state that variance is
    also its symplectic eigenvalue.
    """
    return _snap(cov.a - cov.c * cov.c / (cov.b + 1.0))


def symplectic_spectrum(cov: TwoModeCov) -> SymplecticSpectrum:
    """Joint and heterodyne-conditional eigenvalues in one record."""
    lam1, lam2 = symplectic_eigenvalues(cov)
    return SymplecticSpectrum(lam1, lam2, conditional_eigenvalue_heterodyne(cov))


def holevo_bound(cov: TwoModeCov) -> float:
    """Upper bound on the eavesdropper information about mode B's data, bits.

    The attacker is granted the full purification of the two-mode state, and
    the receiver measures with heterodyne under reverse reconciliation, so

        chi = G((lambda1 - 1)/2) + G((lambda2 - 1)/2) - G((lambda3 - 1)/2).
    """
    s = symplectic_spectrum(cov)
    return (
        g_func((s.lambda1 - 1.0) / 2.0)
        + g_func((s.lambda2 - 1.0) / 2.0)
        - g_func((s.lambda3_cond - 1.0) / 2.0)
    )


def mutual_information(t: float, chi: float, v: float) -> float:
    """Shannon rate between the two honest parties for heterodyne readout.

    I = log2[(T (V + chi) + 1) / (T (1 + chi) + 1)], where T is the channel
    transmittance, chi the total channel noise referred to the input and V
    the sender variance in SNU (vacuum included, so V = 1 means nothing was
    modulated and I = 0).

    T is allowed to exceed 1: the reduction of the relayed protocol to a
    single equivalent channel produces effective transmittances above unity
    for strongly asymmetric arm lengths, and the expression stays well
    defined as long as both log arguments are positive.
    """
    if t <= 0.0:
        raise ValueError(f"transmittance must be positive, got {t}")
    if v < 1.0:
        raise ValueError(f"sender variance must be at least 1 SNU, got {v}")
    num = t * (v + chi) + 1.0
    den = t * (1.0 + chi) + 1.0
    if num <= 0.0 or den <= 0.0:
        raise ValueError(f"log argument not positive: num={num}, den={den}")
    return math.log2(num / den)
