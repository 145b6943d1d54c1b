"""Path generators: exact fBm, discretised Itô / classical mBm, and time-changed
Brownian motion for limit-law quantiles."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg, signal
from scipy.special import gamma as gamma_fn

from .core import DomainError, ObservationGrid, SamplePath, ThetaFunction

__all__ = [
    "FbmConfig",
    "MbmConfig",
    "SimulationError",
    "SimulationWarning",
    "simulate_fbm",
    "simulate_mbm",
    "mbm_diagnostics",
    "simulate_time_changed_bm",
    "time_changed_bm_paths",
    "mvn_variance",
]


class SimulationError(RuntimeError):
    pass


class SimulationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FbmConfig:
    H: float
    sigma: float = 1.0
    n: int = 1024
    lead_in: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.H < 1.0:
            raise DomainError(f"H must lie in (0, 1), got {self.H}")
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if self.n < 8:
            raise DomainError(f"n must be >= 8, got {self.n}")


@dataclass(frozen=True)
class MbmConfig:
    """Discretisation settings for the moving-average mBm.

    ``past_horizon`` truncates the integral at ``-M``; ``m_sub`` Brownian cells
    are used per observation interval. ``normalize`` multiplies the integrand by
    the Mandelbrot-van Ness constant so that a constant-θ path has
    ``Var X_1 = sigma^2`` (up to the truncation).
    """

    theta: ThetaFunction
    n: int = 1024
    lead_in: int = 3
    past_horizon: float = 10.0
    m_sub: int = 16
    variant: str = "ito"
    seed: int = 0
    normalize: bool = False
    max_nodes: int = 32
    interp_tol: float = 1e-8
    tail_warn: float = 0.05

    def __post_init__(self):
        if self.past_horizon < 1.0:
            raise DomainError(f"past horizon M must be >= 1, got {self.past_horizon}")
        if self.m_sub < 1:
            raise DomainError(f"m_sub must be >= 1, got {self.m_sub}")
        if self.variant not in ("ito", "classical"):
            raise DomainError(f"variant must be 'ito' or 'classical', got {self.variant!r}")
        if self.n < 8:
            raise DomainError(f"n must be >= 8, got {self.n}")


def _fgn_autocov(H: float, m: int) -> np.ndarray:
    k = np.arange(m + 1, dtype=float)
    return 0.5 * (np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))


def _fgn(H: float, N: int, rng: np.random.Generator) -> np.ndarray:
    """N samples of unit-step fractional Gaussian noise (Davies-Harte, Cholesky fallback)."""
    m = 1 << max(1, math.ceil(math.log2(N)))
    r = _fgn_autocov(H, m)
    row = np.concatenate([r, r[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() >= -1e-10 * lam.max():
        lam = np.clip(lam, 0.0, None)
        z = rng.standard_normal(2 * m) + 1j * rng.standard_normal(2 * m)
        return np.fft.fft(np.sqrt(lam / (2 * m)) * z).real[:N]
    try:
        chol = linalg.cholesky(linalg.toeplitz(r[:N]), lower=True)
    except linalg.LinAlgError as exc:  # pragma: no cover - not expected for H in (0, 1)
        raise SimulationError(f"circulant embedding and Cholesky both failed for H={H}") from exc
    return chol @ rng.standard_normal(N)


def simulate_fbm(cfg: FbmConfig) -> SamplePath:
    """Exact fBm on the grid ``-lead_in/n, ..., 1`` with ``X_0 = 0`` and
    ``Cov(X_s, X_t) = sigma^2/2 (|t|^{2H} + |s|^{2H} - |t-s|^{2H})``."""
    rng = np.random.default_rng(cfg.seed)
    grid = ObservationGrid(cfg.n, cfg.lead_in)
    noise = _fgn(cfg.H, cfg.n + cfg.lead_in, rng)
    y = np.concatenate([[0.0], np.cumsum(noise)])
    x = cfg.sigma * cfg.n ** (-cfg.H) * (y - y[cfg.lead_in])
    return SamplePath(grid, x)


def mvn_variance(H):
    """``Var`` at t=1 of the unnormalised moving-average integral with sigma = 1."""
    H = np.asarray(H, dtype=float)
    return gamma_fn(H + 0.5) ** 2 / (2 * H * np.sin(np.pi * H) * gamma_fn(2 * H))


def _cell_kernel_at(alpha: float, d: np.ndarray, delta: float) -> np.ndarray:
    """Cell average of ``(t-s)^alpha`` over the cell ending ``d >= 1`` cells before t."""
    d = np.asarray(d, dtype=float)
    a1 = alpha + 1.0
    safe = np.maximum(d, 2.0)
    out = np.where(d <= 1.0, 1.0, safe ** a1 * -np.expm1(a1 * np.log1p(-1.0 / safe)))
    return out * delta ** alpha / a1


def _cell_kernel(alpha: float, J: int, delta: float) -> np.ndarray:
    """:func:`_cell_kernel_at` for ``d = 0..J`` (zero at d = 0: cells after t do not count)."""
    out = np.zeros(J + 1)
    out[1:] = _cell_kernel_at(alpha, np.arange(1, J + 1), delta)
    return out


def _lagrange(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Lagrange basis values, shape ``(x.size, nodes.size)``; exact indicators at nodes."""
    x = np.asarray(x, dtype=float)
    K = nodes.size
    out = np.ones((x.size, K))
    for m in range(K):
        for i in range(K):
            if i != m:
                out[:, m] *= (x - nodes[i]) / (nodes[m] - nodes[i])
    hit = np.isclose(x[:, None], nodes[None, :], rtol=0, atol=0)
    rows = hit.any(axis=1)
    out[rows] = hit[rows].astype(float)
    return out


def _cheb_nodes(lo: float, hi: float, K: int) -> np.ndarray:
    k = np.arange(K)
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos((2 * k + 1) * np.pi / (2 * K))


def _interp_error(nodes, lo, hi, J, delta):
    d = np.unique(np.round(np.logspace(0, math.log10(max(J, 2)), 120)).astype(int))
    test = np.linspace(lo, hi, 41)
    basis = _lagrange(nodes, test)
    table = np.array([_cell_kernel_at(a, d, delta) for a in nodes])
    worst = 0.0
    for j, a in enumerate(test):
        exact = _cell_kernel_at(a, d, delta)
        approx = basis[j] @ table
        worst = max(worst, float(np.max(np.abs(approx - exact) / np.abs(exact))))
    return worst


def _choose_nodes(alphas: np.ndarray, J: int, delta: float, max_nodes: int, tol: float):
    uniq = np.unique(alphas)
    if uniq.size <= max_nodes:
        return uniq, 0.0
    lo, hi = float(uniq[0]), float(uniq[-1])
    err = np.inf
    for K in range(4, max_nodes + 1):
        nodes = _cheb_nodes(lo, hi, K)
        err = _interp_error(nodes, lo, hi, J, delta)
        if err < tol:
            return nodes, err
    return nodes, err


# observation steps before t=0 that keep the fine mesh; older cells are 1/n wide
_NEAR_PAST = 64


@dataclass(frozen=True)
class _Mesh:
    """Fine cells of width ``delta`` on ``[-near/n, 1]`` and coarse 1/n cells on ``[-M, -near/n)``."""

    delta: float
    n: int
    near: int
    coarse: int
    fine_positions: np.ndarray
    coarse_positions: np.ndarray
    fine_mid: np.ndarray
    coarse_mid: np.ndarray
    times: np.ndarray

    @property
    def fine_cells(self) -> int:
        return self.fine_mid.size

    @property
    def horizon(self) -> float:
        return (self.near + self.coarse) / self.n


def _mesh(cfg: MbmConfig) -> _Mesh:
    n, m = cfg.n, cfg.m_sub
    past_steps = max(math.ceil(cfg.past_horizon * n), cfg.lead_in)
    near = min(past_steps, cfg.lead_in + _NEAR_PAST)
    coarse = past_steps - near
    delta = 1.0 / (n * m)
    grid = ObservationGrid(n, cfg.lead_in)
    fine_positions = (near + grid.indices) * m
    coarse_positions = coarse + near + grid.indices
    fine_mid = (np.arange((near + n) * m) - near * m + 0.5) * delta
    coarse_mid = (np.arange(coarse) - past_steps + 0.5) / n
    return _Mesh(delta, n, near, coarse, fine_positions, coarse_positions, fine_mid, coarse_mid, grid.times)


def _tail_ratio(cfg: MbmConfig, mesh: _Mesh) -> float:
    # neglected variance of X_1 from s < -M relative to the stationary level
    H0 = float(cfg.theta.hurst_at(0.0))
    a = H0 - 0.5
    M = mesh.horizon
    return float(a * a * M ** (2 * a - 1) / (1 - 2 * a) / mvn_variance(H0))


def _exponents(cfg: MbmConfig, mesh: _Mesh):
    theta = cfg.theta
    if cfg.variant == "ito":
        pts = np.concatenate([mesh.coarse_mid, mesh.fine_mid])
    else:
        pts = mesh.times
    h = theta.hurst_at(pts)
    scale = theta.sigma_at(pts)
    if cfg.normalize:
        scale = scale / np.sqrt(mvn_variance(h))
    return h - 0.5, scale


def mbm_diagnostics(cfg: MbmConfig) -> dict:
    """Mesh and interpolation diagnostics for :func:`simulate_mbm` (no sampling)."""
    mesh = _mesh(cfg)
    alphas, _ = _exponents(cfg, mesh)
    nodes, err = _choose_nodes(alphas, mesh.fine_cells, mesh.delta, cfg.max_nodes, cfg.interp_tol)
    return {
        "fine_cells": mesh.fine_cells,
        "coarse_cells": mesh.coarse,
        "delta": mesh.delta,
        "past_horizon": mesh.horizon,
        "m_sub": cfg.m_sub,
        "variant": cfg.variant,
        "exponent_nodes": int(nodes.size),
        "interp_rel_error": err,
        "tail_variance_ratio": _tail_ratio(cfg, mesh),
    }


def simulate_mbm(cfg: MbmConfig) -> SamplePath:
    """Discretised moving-average mBm.

    ``X_t = sum_j f(t, cell_j) dB_j`` over Brownian cells shared by all
    observation times: width ``1/(n m_sub)`` on ``[-64/n, 1]`` and ``1/n`` on
    the older past, where the integrand is smooth. The power kernel is averaged
    over each cell in closed form. For ``variant='ito'`` the exponent and
    volatility are frozen at the cell midpoint; for ``'classical'`` at the
    observation time.

    The kernel depends on the exponent, so the sum is not a convolution. It is
    reduced to a few by Lagrange interpolation in the exponent: exact when the
    path takes at most ``max_nodes`` distinct values, Chebyshev nodes otherwise.
    """
    mesh = _mesh(cfg)
    tail = _tail_ratio(cfg, mesh)
    if tail > cfg.tail_warn:
        warnings.warn(f"past horizon {mesh.horizon:g} neglects ~{tail:.1%} of Var X_1",
                      SimulationWarning, stacklevel=2)
    rng = np.random.default_rng(cfg.seed)
    dB_coarse = rng.standard_normal(mesh.coarse) * math.sqrt(1.0 / cfg.n)
    dB_fine = rng.standard_normal(mesh.fine_cells) * math.sqrt(mesh.delta)
    alphas, scale = _exponents(cfg, mesh)
    nodes, _ = _choose_nodes(alphas, mesh.fine_cells, mesh.delta, cfg.max_nodes, cfg.interp_tol)
    basis = _lagrange(nodes, alphas)
    fpos, cpos = mesh.fine_positions, mesh.coarse_positions
    k0 = cfg.lead_in
    x = np.zeros(fpos.size)
    for m, a in enumerate(nodes):
        fine_kern = _cell_kernel(float(a), int(fpos[-1]), mesh.delta)
        coarse_kern = _cell_kernel(float(a), int(cpos[-1]), 1.0 / cfg.n)
        if cfg.variant == "ito":
            w = basis[:, m] * scale
            wc, wf = w[:mesh.coarse], w[mesh.coarse:]
            y = signal.fftconvolve(wf * dB_fine, fine_kern)[fpos]
            if mesh.coarse:
                y += signal.fftconvolve(wc * dB_coarse, coarse_kern)[cpos]
            x += y - y[k0]
        else:
            y = signal.fftconvolve(dB_fine, fine_kern)[fpos]
            if mesh.coarse:
                y += signal.fftconvolve(dB_coarse, coarse_kern)[cpos]
            x += basis[:, m] * scale * (y - y[k0])
    x[k0] = 0.0
    return SamplePath(ObservationGrid(cfg.n, cfg.lead_in), x)


def _check_var_curve(var_curve) -> np.ndarray:
    v = np.asarray(var_curve, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise DomainError("variance curve must be a non-empty 1-d sequence")
    if v[0] < 0 or np.any(np.diff(v) < 0):
        raise DomainError("variance curve must start >= 0 and be nondecreasing")
    return v


def time_changed_bm_paths(var_curve, reps: int, rng: np.random.Generator, chunk: int = 4096):
    """Yield blocks of ``W(var_curve[k])`` paths, shape ``(block, len(var_curve))``."""
    v = _check_var_curve(var_curve)
    sd = np.sqrt(np.diff(v, prepend=0.0))
    done = 0
    while done < reps:
        b = min(chunk, reps - done)
        yield np.cumsum(rng.standard_normal((b, v.size)) * sd, axis=1)
        done += b


def simulate_time_changed_bm(var_curve, seed: int) -> np.ndarray:
    """One path of ``W(Sigma(u_k))`` built from independent ``N(0, Sigma(u_k) - Sigma(u_{k-1}))`` steps."""
    rng = np.random.default_rng(seed)
    return next(time_changed_bm_paths(var_curve, 1, rng))[0]
