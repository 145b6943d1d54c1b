"""Covariance kernels of second-order fBm increments and the asymptotic variance of
the integrated Hurst estimator.

Normalisation follows ``gamma_small(H, 0) == 2``: for a standard fBm (unit
variance at time one) the lag-h autocovariance of unit-step increments is
``gamma_small(H, h) / 2``, and that of second-order increments
``gamma_big(H, h) / 2``. Every estimator uses ratios only, so the factor is
immaterial there.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.special import binom

from .core import DomainError

__all__ = [
    "AsymVarConfig",
    "NumericalInconsistencyError",
    "gamma_small",
    "gamma_big",
    "gamma_bar",
    "sigma_matrix",
    "increment_pair_cov",
    "tau_squared",
    "tau_squared_lrv",
    "tau_squared_interpolant",
]

# lag beyond which the fourth difference is evaluated by its binomial series
_SERIES_LAG = 8.0
_SERIES_ORDERS = np.arange(4, 31, 2)
_SERIES_MOMENTS = 2.0 * (2.0 ** _SERIES_ORDERS - 4.0)  # sum_k c_k k^j for c = (1,-4,6,-4,1)


class NumericalInconsistencyError(ArithmeticError):
    pass


@dataclass(frozen=True)
class AsymVarConfig:
    h_max: int = 1000
    tail_tol: float = 1e-10

    def __post_init__(self):
        if self.h_max < 2:
            raise DomainError(f"h_max must be >= 2, got {self.h_max}")
        if not self.tail_tol > 0:
            raise DomainError(f"tail_tol must be positive, got {self.tail_tol}")


def _check_hurst(H):
    H = np.asarray(H, dtype=float)
    if np.any(~(H > 0.0) | ~(H < 1.0)):
        raise DomainError(f"Hurst exponent must lie in (0, 1), got {H}")
    return H


def _abs_pow(x, p):
    # |x|^p with |0|^p = 0
    return np.abs(x) ** p


def gamma_small(H, h):
    """``|h+1|^{2H} - 2|h|^{2H} + |h-1|^{2H}``, the (doubled) fGn autocovariance."""
    H = _check_hurst(H)
    h = np.asarray(h, dtype=float)
    p = 2.0 * H
    return _abs_pow(h + 1, p) - 2.0 * _abs_pow(h, p) + _abs_pow(h - 1, p)


def _gamma_big_series(H, h):
    # -|h|^{2H} * sum_j binom(2H, j) m_j h^{-j}, valid for |h| > 2
    a = np.abs(h)[..., None]
    p = (2.0 * H)[..., None]
    terms = binom(p, _SERIES_ORDERS) * _SERIES_MOMENTS * a ** (-_SERIES_ORDERS.astype(float))
    return -(a[..., 0] ** p[..., 0]) * terms.sum(axis=-1)


def gamma_big(H, h):
    """Autocovariance (doubled) of second-order increments:
    ``-gamma(h+1) + 2 gamma(h) - gamma(h-1)``.

    Large lags switch to the binomial series of the fourth difference, which
    avoids cancellation between powers of size ``|h|^{2H}``.
    """
    H = _check_hurst(H)
    h = np.asarray(h, dtype=float)
    H, h = np.broadcast_arrays(H, h)
    direct = -gamma_small(H, h + 1) + 2.0 * gamma_small(H, h) - gamma_small(H, h - 1)
    far = np.abs(h) >= _SERIES_LAG
    if not np.any(far):
        return direct
    out = np.array(direct, dtype=float)
    out[far] = _gamma_big_series(H[far], h[far])
    return out if out.ndim else float(out)


def gamma_bar(H: float, h: int) -> np.ndarray:
    """The 2x2 matrix built from ``gamma_big`` at lags h-1, h, h+1 (as printed in the source)."""
    g0, gm, gp = (float(gamma_big(H, h + d)) for d in (0, -1, 1))
    return np.array([[g0, g0 + gp], [g0 + gm, 2.0 * g0 + gm + gp]])


def sigma_matrix(H: float, h: int) -> np.ndarray:
    """Twice the entry-wise square of :func:`gamma_bar`."""
    return 2.0 * gamma_bar(H, h) ** 2


def increment_pair_cov(H, h) -> np.ndarray:
    """Exact (doubled) cross-covariance ``Cov((chi_0, chi~_0), (chi_h, chi~_h))`` for fBm.

    Uses ``chi~_i = chi_i + 2 chi_{i-1} + chi_{i-2}``. Returns shape ``(..., 2, 2)``.
    """
    H = _check_hurst(H)
    h = np.asarray(h, dtype=float)
    c = (1.0, 2.0, 1.0)
    G = {d: gamma_big(H, h + d) for d in range(-4, 5)}
    c11 = G[0]
    c12 = sum(c[b] * G[-b] for b in range(3))
    c21 = sum(c[a] * G[a] for a in range(3))
    c22 = sum(c[a] * c[b] * G[a - b] for a in range(3) for b in range(3))
    return np.stack([np.stack([c11, c12], -1), np.stack([c21, c22], -1)], -2)


def _tail_bound(H, last_term, h_max):
    # summand ~ C |h|^{4H-8}; two-sided tail sum beyond h_max
    expo = 4.0 * H - 8.0
    C = abs(last_term) / h_max ** expo
    return 2.0 * C * h_max ** (expo + 1.0) / (7.0 - 4.0 * H)


def _summed(H, cfg, summand):
    h_max = cfg.h_max
    while True:
        h = np.arange(-h_max, h_max + 1, dtype=float)
        terms = summand(H, h)
        if _tail_bound(H, max(abs(terms[0]), abs(terms[-1])), h_max) < cfg.tail_tol or h_max >= 2 ** 22:
            break
        h_max *= 2
    # sum from the tails inwards
    order = np.argsort(-np.abs(h), kind="stable")
    return float(np.sum(terms[order]))


def _printed_summand(H, h):
    G0 = gamma_big(H, h)
    Gm = gamma_big(H, h - 1)
    Gp = gamma_big(H, h + 1)
    return G0 ** 2 + 2.0 ** (-4.0 * H) * (2.0 * G0 + Gm + Gp) ** 2 - 2.0 ** (-2.0 * H + 1.0) * (G0 + Gm) ** 2


def tau_squared(H: float, cfg: AsymVarConfig = AsymVarConfig()) -> float:
    """Local asymptotic variance in the closed form as printed in the source.

    ``(1 / (2 Gamma_H(0)^2)) * sum_h {Gamma(h)^2 + 2^{-4H}(2Gamma(h)+Gamma(h-1)+Gamma(h+1))^2
    - 2^{1-2H}(Gamma(h)+Gamma(h-1))^2}``. Equals 7/16 at H = 1/2.

    This form does not match the variance of the integrated estimator; use
    :func:`tau_squared_lrv` for calibration.
    """
    _check_hurst(H)
    H = float(H)
    total = _summed(H, cfg, _printed_summand) / (2.0 * float(gamma_big(H, 0)) ** 2)
    if not total > 0:
        raise NumericalInconsistencyError(f"tau^2({H}) = {total} is not positive")
    return total


def _lrv_summand(H, h):
    C = increment_pair_cov(H, h)
    g0 = float(gamma_big(H, 0))
    g = np.array([-1.0, 2.0 ** (-2.0 * H)]) / (2.0 * math.log(2.0) * g0)
    # Cov(chi_0^2, chi_h^2) etc. is twice the squared Gaussian covariance
    return np.einsum("i,...ij,j->...", g, 2.0 * C ** 2, g)


def tau_squared_lrv(H: float, cfg: AsymVarConfig = AsymVarConfig()) -> float:
    """Long-run variance of the linearised summand
    ``(1/(2 ln 2)) (chi~^2 / E chi~^2 - chi^2 / E chi^2)`` under fBm.

    This is the limit variance per unit time of ``sqrt(n)`` times the integrated
    Hurst estimator error.
    """
    _check_hurst(H)
    H = float(H)
    total = _summed(H, cfg, _lrv_summand)
    if not total > 0:
        raise NumericalInconsistencyError(f"long-run variance at H={H} is {total}")
    return total


@functools.lru_cache(maxsize=8)
def tau_squared_interpolant(form: str = "lrv", cfg: AsymVarConfig = AsymVarConfig(),
                            lo: float = 0.005, hi: float = 0.995, degree: int = 32) -> Chebyshev:
    """Chebyshev interpolant of tau^2 on ``[lo, hi]`` for fast vectorised evaluation.

    tau^2 is analytic in H on (0, 1); degree 32 reproduces it to ~1e-11 relative.
    """
    fn = {"lrv": tau_squared_lrv, "printed": tau_squared}[form]
    return Chebyshev.interpolate(lambda x: np.array([fn(v, cfg) for v in x]), degree, domain=[lo, hi])
