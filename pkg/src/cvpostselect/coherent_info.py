"""Information quantities for one effective channel of the postselection protocol.

An effective channel is labelled by the effective amplitude ``E >= 0`` (the
basis-relevant quadrature component of Alice's coherent amplitude) and Bob's
homodyne outcome ``x``. Quadratures use the convention in which the vacuum
variance is 1/4, so Bob's outcome densities read
``sqrt(2/pi) * exp(-2 (x - mu)**2)``.

All functions broadcast over numpy arrays; scalar inputs give numpy scalars.
Informations are in bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import entr, expit

_LN2 = np.log(2.0)
_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


@dataclass(frozen=True)
class ChannelParams:
    """Transmission ``eta`` in (0, 1] and modulation width ``d`` > 0."""

    eta: float
    d: float

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta!r}")
        if not self.d > 0.0:
            raise ValueError(f"d must be positive, got {self.d!r}")

    @classmethod
    def from_loss(cls, loss: float, d: float) -> "ChannelParams":
        return cls(eta=1.0 - loss, d=d)

    @property
    def loss(self) -> float:
        return 1.0 - self.eta


@dataclass(frozen=True)
class EffectiveChannel:
    E: float
    x: float

    def __post_init__(self):
        if not self.E >= 0.0:
            raise ValueError(f"effective amplitude must be >= 0, got {self.E!r}")


@dataclass(frozen=True)
class InfoBreakdown:
    """Per-channel quantities: overlap, I_AE, p_e, I_AB and their difference."""

    f: float
    i_ae: float
    p_e: float
    i_ab: float
    delta: float


def _check_eta_E(eta, E):
    eta = np.asarray(eta, dtype=float)
    E = np.asarray(E, dtype=float)
    if np.any(~((eta > 0.0) & (eta <= 1.0))):
        raise ValueError("eta must lie in (0, 1]")
    if np.any(~(E >= 0.0)):
        raise ValueError("effective amplitude E must be >= 0")
    return eta, E


def _log_overlap(eta, E):
    return -2.0 * (1.0 - eta) * E * E


def overlap(eta: ArrayLike, E: ArrayLike):
    """Overlap of Eve's two conditional coherent states, ``exp(-2(1-eta)E^2)``."""
    eta, E = _check_eta_E(eta, E)
    return np.exp(_log_overlap(eta, E))[()]


def _sqrt_one_minus_f2(log_f):
    # 1 - f^2 via expm1 so tiny E keeps full relative precision
    return np.sqrt(-np.expm1(2.0 * log_f))


def eve_info(eta: ArrayLike, E: ArrayLike):
    """Accessible information of Eve for two pure states with overlap ``f``.

    With ``s = sqrt(1 - f**2)`` this is
    ``(1+s)/2 * log2(1+s) + (1-s)/2 * log2(1-s)``.

    ``1 - s`` is evaluated as ``f**2 / (1 + s)`` and its logarithm as
    ``2 ln f - log1p(s)``, so the expression stays accurate both for
    ``f -> 1`` and for ``f -> 0``.
    """
    eta, E = _check_eta_E(eta, E)
    log_f = _log_overlap(eta, E)
    s = _sqrt_one_minus_f2(log_f)
    upper = 0.5 * (1.0 + s) * np.log1p(s) / _LN2
    one_minus_s = np.exp(2.0 * log_f) / (1.0 + s)
    log2_one_minus_s = (2.0 * log_f - np.log1p(s)) / _LN2
    lower = np.where(one_minus_s < 1e-300, 0.0, 0.5 * one_minus_s * log2_one_minus_s)
    out = upper + lower
    return np.clip(out, 0.0, 1.0)[()]


def eve_helstrom_success(eta: ArrayLike, E: ArrayLike):
    """Optimal probability that Eve identifies Alice's bit, ``(1 + sqrt(1-f^2)) / 2``."""
    eta, E = _check_eta_E(eta, E)
    return (0.5 * (1.0 + _sqrt_one_minus_f2(_log_overlap(eta, E))))[()]


def eve_error(eta: ArrayLike, E: ArrayLike):
    """Eve's optimal guessing error ``(1 - sqrt(1-f^2)) / 2 = f^2 / (2 (1 + s))``.

    ``eve_info == 1 - h2(eve_error)``; this form keeps full relative precision
    when the error is tiny.
    """
    eta, E = _check_eta_E(eta, E)
    log_f = _log_overlap(eta, E)
    s = _sqrt_one_minus_f2(log_f)
    return (np.exp(2.0 * log_f) / (2.0 * (1.0 + s)))[()]


def binary_entropy(p: ArrayLike):
    """``h2(p)`` in bits, accurate for ``p`` near 0 and near 1."""
    p = np.asarray(p, dtype=float)
    q = np.minimum(p, 1.0 - p)
    return ((entr(q) - (1.0 - q) * np.log1p(-q)) / _LN2)[()]


def bob_conditional_density(eta: ArrayLike, E: ArrayLike, x: ArrayLike, bit: int):
    """Density of Bob's outcome ``x`` given Alice's bit.

    Bit 0 is centred on ``+sqrt(eta) E``, bit 1 on ``-sqrt(eta) E``; both have
    variance 1/4.
    """
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    eta, E = _check_eta_E(eta, E)
    x = np.asarray(x, dtype=float)
    sign = 1.0 if bit == 0 else -1.0
    mean = sign * np.sqrt(eta) * E
    return (_SQRT_2_OVER_PI * np.exp(-2.0 * (x - mean) ** 2))[()]


def error_prob(eta: ArrayLike, E: ArrayLike, x: ArrayLike):
    """Bob's sign-decoding error rate for the channel ``(E, x)``.

    Uses the logistic form ``1 / (1 + exp(8 sqrt(eta) E |x|))`` of the
    minority-hypothesis posterior; ``p_e(x=0) = 1/2``.
    """
    eta, E = _check_eta_E(eta, E)
    x = np.asarray(x, dtype=float)
    return expit(-8.0 * np.sqrt(eta) * E * np.abs(x))[()]


def error_prob_direct(eta: ArrayLike, E: ArrayLike, x: ArrayLike):
    """Error rate as the raw ratio of the two Gaussian densities.

    Reference path for :func:`error_prob`. Returns NaN where both densities
    underflow.
    """
    eta, E = _check_eta_E(eta, E)
    x = np.asarray(x, dtype=float)
    p0 = bob_conditional_density(eta, E, x, 0)
    p1 = bob_conditional_density(eta, E, x, 1)
    total = p0 + p1
    minority = np.where(x > 0, p1, np.where(x < 0, p0, 0.5 * total))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(total > 0, minority / np.where(total > 0, total, 1.0), np.nan)
    return out[()]


def bob_info(p_e: ArrayLike):
    """Binary-symmetric-channel capacity ``1 - h2(p_e)`` in bits."""
    p = np.asarray(p_e, dtype=float)
    if np.any(~((p >= 0.0) & (p <= 1.0))):
        raise ValueError("error probability must lie in [0, 1]")
    return np.clip(1.0 - binary_entropy(p), 0.0, 1.0)[()]


def delta_info(eta: ArrayLike, E: ArrayLike, x: ArrayLike):
    """``I_AB(E, x) - I_AE(E)``; positive values mark channels worth keeping.

    Evaluated as ``h2(eve_error) - h2(p_e)`` so the sign stays reliable where
    both informations are within rounding of one bit.
    """
    p_e = error_prob(eta, E, x)
    return (binary_entropy(eve_error(eta, E)) - binary_entropy(p_e))[()]


def breakdown(eta: float, E: float, x: float) -> InfoBreakdown:
    f = float(overlap(eta, E))
    i_ae = float(eve_info(eta, E))
    p_e = float(error_prob(eta, E, x))
    i_ab = float(bob_info(p_e))
    return InfoBreakdown(f=f, i_ae=i_ae, p_e=p_e, i_ab=i_ab, delta=i_ab - i_ae)
