"""Overflow-safe Jacobi theta function Theta_3 and its u-derivative.

Theta_3(u, tau) = sum_n exp(i pi tau n^2 + 2 i n u). Values are returned in
scaled form, value * exp(log_scale), so that products of many factors and
arguments far from the real axis stay inside double precision.

All functions accept scalars or numpy arrays of u and broadcast elementwise.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from errors import DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ThetaParams:
    tau: complex = 1j
    eps: float = 1e-14

    def __post_init__(self):
        if complex(self.tau).imag <= 0:
            raise DomainError(f"tau={self.tau} is not in the upper half-plane")
        if not self.eps > 0:
            raise DomainError(f"eps must be positive, got {self.eps}")

    @property
    def truncation(self):
        """Series cut-off N; terms beyond N decay below eps."""
        im_tau = complex(self.tau).imag
        return int(math.ceil(math.sqrt(math.log(1.0 / self.eps) / (math.pi * im_tau)))) + 2


# tau = i is used by the product form, tau = i/d by the state representation.
THETA_I = ThetaParams(1j)


def params_for_dimension(d, eps=1e-14):
    return ThetaParams(1j / d, eps)


@dataclass(frozen=True)
class ThetaValue:
    """Scaled complex number (or array): value * exp(log_scale)."""
    value: object
    log_scale: object = 0.0

    def to_complex(self):
        return self.value * np.exp(self.log_scale)

    def __mul__(self, other):
        if isinstance(other, ThetaValue):
            return ThetaValue(self.value * other.value, self.log_scale + other.log_scale)
        return ThetaValue(self.value * other, self.log_scale)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, ThetaValue):
            return ThetaValue(self.value / other.value, self.log_scale - other.log_scale)
        return ThetaValue(self.value / other, self.log_scale)

    def abs_log(self):
        """log|x|, finite unless the value is exactly zero."""
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.value)) + self.log_scale

    def normalized(self):
        """Same number with |value| brought close to 1 where possible."""
        mag = np.abs(self.value)
        shift = np.where(mag > 0, np.log(np.where(mag > 0, mag, 1.0)), 0.0)
        return ThetaValue(self.value * np.exp(-shift), self.log_scale + shift)


def from_log(log_value):
    """ThetaValue for exp(log_value) with complex log_value."""
    log_value = np.asarray(log_value, dtype=complex)
    return ThetaValue(np.exp(1j * log_value.imag), log_value.real)


def scaled_sum(terms, weights=None, axis=-1):
    """Sum ThetaValues along an axis, returning one ThetaValue per remaining index."""
    values = np.asarray(terms.value, dtype=complex)
    scales = np.broadcast_to(np.asarray(terms.log_scale, dtype=float), values.shape)
    if weights is not None:
        values = values * weights
    top = np.max(scales, axis=axis, keepdims=True)
    total = np.sum(values * np.exp(scales - top), axis=axis)
    return ThetaValue(total, np.squeeze(top, axis=axis))


def scaled_prod(terms, axis=-1):
    values = np.asarray(terms.value, dtype=complex)
    scales = np.broadcast_to(np.asarray(terms.log_scale, dtype=float), values.shape)
    return ThetaValue(np.prod(values, axis=axis), np.sum(scales, axis=axis))


def reduce_argument(u, params=THETA_I):
    """Move u into the fundamental strip of Theta_3.

    Returns (u_reduced, prefactor, log_scale) with
    Theta_3(u) = prefactor * exp(log_scale) * Theta_3(u_reduced), using
    Theta_3(u + pi) = Theta_3(u) and
    Theta_3(u + k pi tau) = exp(-i pi tau k^2 - 2 i k u) Theta_3(u).
    """
    u = np.asarray(u, dtype=complex)
    tau = complex(params.tau)
    k = np.rint(u.imag / (math.pi * tau.imag))
    shifted = u - k * math.pi * tau
    j = np.floor(shifted.real / math.pi)
    reduced = shifted - j * math.pi
    log_factor = -1j * math.pi * tau * k * k - 2j * k * reduced
    prefactor = np.exp(1j * log_factor.imag)
    log_scale = log_factor.real
    if reduced.ndim == 0:
        return complex(reduced), complex(prefactor), float(log_scale)
    return reduced, prefactor, log_scale


def _series(u_reduced, params, n_terms, derivative):
    tau = complex(params.tau)
    total = np.zeros(np.shape(u_reduced), dtype=complex)
    for n in range(-n_terms, n_terms + 1):
        term = np.exp(1j * math.pi * tau * n * n + 2j * n * u_reduced)
        total += 2j * n * term if derivative else term
    return total


def theta3(u, params=THETA_I, n_terms=None):
    """Theta_3(u, tau) in scaled form."""
    n_terms = params.truncation if n_terms is None else n_terms
    reduced, prefactor, log_scale = reduce_argument(u, params)
    value = _series(reduced, params, n_terms, derivative=False) * prefactor
    if np.ndim(value) == 0:
        return ThetaValue(complex(value), float(log_scale))
    return ThetaValue(value, log_scale)


def theta3_deriv(u, params=THETA_I, n_terms=None):
    """dTheta_3/du in scaled form.

    With u = u' + k pi tau the quasi-periodic factor contributes -2ik:
    Theta_3'(u) = exp(L) (Theta_3'(u') - 2ik Theta_3(u')).
    """
    n_terms = params.truncation if n_terms is None else n_terms
    u = np.asarray(u, dtype=complex)
    tau = complex(params.tau)
    k = np.rint(u.imag / (math.pi * tau.imag))
    reduced, prefactor, log_scale = reduce_argument(u, params)
    base = _series(reduced, params, n_terms, derivative=False)
    slope = _series(reduced, params, n_terms, derivative=True)
    value = (slope - 2j * k * base) * prefactor
    if np.ndim(value) == 0:
        return ThetaValue(complex(value), float(log_scale))
    return ThetaValue(value, log_scale)


def theta3_with_deriv(u, params=THETA_I):
    """Both Theta_3 and its derivative, sharing one reduction."""
    u = np.asarray(u, dtype=complex)
    tau = complex(params.tau)
    k = np.rint(u.imag / (math.pi * tau.imag))
    reduced, prefactor, log_scale = reduce_argument(u, params)
    base = _series(reduced, params, params.truncation, derivative=False)
    slope = _series(reduced, params, params.truncation, derivative=True)
    return (ThetaValue(base * prefactor, log_scale),
            ThetaValue((slope - 2j * k * base) * prefactor, log_scale))


# Theta_3 vanishes at pi(1+i)/2 for tau = i; its slope there enters the
# zero-derivative formula.
THETA_ZERO = math.pi * (1 + 1j) / 2
THETA_PRIME_AT_ZERO = complex(theta3_deriv(THETA_ZERO).to_complex())
