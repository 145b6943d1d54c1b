"""Second-order increments, local Hurst estimators, the integrated estimator and
the plug-in variance curve."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import DomainError, SamplePath
from .fracmath import AsymVarConfig, tau_squared_interpolant
from .localpoly import Kernel, grid_smoother, smooth, weights

__all__ = [
    "IncrementPair",
    "EstimatorParams",
    "MomentPair",
    "HurstCurve",
    "IntegratedCurve",
    "VarCurve",
    "increments",
    "phi_hat",
    "hurst_log_ratio",
    "hurst_smoothed_log",
    "local_hurst_grid",
    "integrated_hurst",
    "plugin_hurst",
    "variance_curve",
]

_LN2 = math.log(2.0)


@dataclass(frozen=True, eq=False)
class IncrementPair:
    """``chi[i-1] = X_i - 2X_{i-1} + X_{i-2}`` and ``chi_tilde[i-1] = X_i - 2X_{i-2} + X_{i-4}``, i = 1..n."""

    chi: np.ndarray
    chi_tilde: np.ndarray

    @property
    def n(self) -> int:
        return self.chi.size

    def squares(self) -> np.ndarray:
        """Shape ``(n, 2)`` array of ``(chi^2, chi_tilde^2)``."""
        return np.column_stack([self.chi ** 2, self.chi_tilde ** 2])


def increments(path: SamplePath) -> IncrementPair:
    lead = path.grid.lead_in
    if lead < 3:
        raise DomainError(f"second-order increments need X at -3/n (lead_in >= 3), got lead_in={lead}")
    x = np.asarray(path.values)
    n = path.grid.n
    i = np.arange(1, n + 1) + lead
    chi = x[i] - 2.0 * x[i - 1] + x[i - 2]
    chi_tilde = x[i] - 2.0 * x[i - 2] + x[i - 4]
    return IncrementPair(chi, chi_tilde)


@dataclass(frozen=True)
class EstimatorParams:
    """Tuning of the local and integrated estimators.

    ``bandwidth=None`` selects ``bandwidth_const * n^(-1/(2 eta + 1))``;
    ``lag=None`` selects ``ceil(n^0.3)``. ``integrated_degree`` is the degree of
    the one-sided fits inside :func:`integrated_hurst` and the plug-in variance;
    ``None`` reuses ``degree``. A one-sided fit evaluates at the edge of its
    window, where degree >= 1 inflates the variance enough to make the
    linearisation unstable in short early windows, so the default is the
    locally constant fit (admissible whenever eta <= 1).
    """

    kernel: Kernel = Kernel("epanechnikov", "two_sided")
    bandwidth: float | None = None
    bandwidth_const: float = 1.0
    eta: float = 1.0
    degree: int = 1
    epsilon_floor: float = 1e-3
    lag: int | None = None
    integrated_degree: int | None = 0

    def __post_init__(self):
        if self.degree < 0 or (self.integrated_degree is not None and self.integrated_degree < 0):
            raise DomainError("polynomial degrees must be >= 0")
        if not self.epsilon_floor > 0:
            raise DomainError("epsilon_floor must be positive")
        if not self.eta > 0:
            raise DomainError("eta must be positive")

    def bandwidth_for(self, n: int) -> float:
        b = self.bandwidth if self.bandwidth is not None else self.bandwidth_const * n ** (-1.0 / (2.0 * self.eta + 1.0))
        if not 0.0 < b < 0.5:
            raise DomainError(f"bandwidth must lie in (0, 1/2), got {b}")
        return float(b)

    def lag_for(self, n: int) -> int:
        L = self.lag if self.lag is not None else math.ceil(n ** 0.3)
        if not n ** (1.0 / 6.0) < L < n ** 0.5:
            raise DomainError(f"lag L={L} outside (n^(1/6), n^(1/2)) = ({n ** (1 / 6):.3g}, {n ** 0.5:.3g})")
        return int(L)

    def left_sided(self) -> "EstimatorParams":
        return replace(self, kernel=self.kernel.with_support("left"))

    def one_sided_fit(self) -> "EstimatorParams":
        """Left-supported kernel with the integrated-estimator degree."""
        deg = self.degree if self.integrated_degree is None else self.integrated_degree
        return replace(self, kernel=self.kernel.with_support("left"), degree=deg)


@dataclass(frozen=True)
class MomentPair:
    phi1: float
    phi2: float
    raw: tuple[float, float] = (math.nan, math.nan)
    clamped: bool = False


@dataclass(frozen=True, eq=False)
class HurstCurve:
    u: np.ndarray
    values: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class IntegratedCurve:
    """Step function ``u -> H(u)`` sampled at ``u = t/n``, t = 0..n.

    ``origin`` is the left end of the time range the sum covers; reference
    integrals in goodness-of-fit comparisons start there.
    """

    u: np.ndarray
    values: np.ndarray
    start: int = 0
    origin: float = 0.0
    summands: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def at(self, u) -> np.ndarray:
        idx = np.searchsorted(self.u, np.asarray(u, dtype=float) + 1e-12, side="right") - 1
        return self.values[np.clip(idx, 0, None)]


@dataclass(frozen=True, eq=False)
class VarCurve:
    u: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size and (v[0] < 0 or np.any(np.diff(v) < -1e-15)):
            raise DomainError("variance curve must be nonnegative and nondecreasing")

    def at(self, u) -> np.ndarray:
        idx = np.searchsorted(self.u, np.asarray(u, dtype=float) + 1e-12, side="right") - 1
        return np.where(idx < 0, 0.0, self.values[np.clip(idx, 0, None)])


def _floor_level(sq: np.ndarray, w, params: EstimatorParams) -> float:
    seg = sq[w.start - 1:w.start - 1 + w.values.size, 0]
    return max(params.epsilon_floor * float(np.mean(seg)), np.finfo(float).tiny)


def phi_hat(inc: IncrementPair, params: EstimatorParams, u: float) -> MomentPair:
    """Local polynomial smooth of ``(chi^2, chi_tilde^2)`` at ``u``, floored for the logarithm."""
    n = inc.n
    w = weights(params.kernel, n, u, params.bandwidth_for(n), params.degree)
    sq = inc.squares()
    raw = smooth(w, sq)
    floor = _floor_level(sq, w, params)
    clamped = bool(raw[0] < floor or raw[1] < floor)
    return MomentPair(max(raw[0], floor), max(raw[1], floor), (float(raw[0]), float(raw[1])), clamped)


def _half_log2_ratio(phi1, phi2):
    return 0.5 * np.log2(np.asarray(phi2) / np.asarray(phi1))


def hurst_log_ratio(inc: IncrementPair, params: EstimatorParams, u_grid) -> HurstCurve:
    """``(0.5 log2(phi2/phi1)) v 0 ^ 1`` at each ``u``."""
    u = np.atleast_1d(np.asarray(u_grid, dtype=float))
    pairs = [phi_hat(inc, params, float(x)) for x in u]
    raw = _half_log2_ratio([p.phi1 for p in pairs], [p.phi2 for p in pairs])
    vals = np.clip(raw, 0.0, 1.0)
    diag = {
        "clip_low": int(np.sum(raw < 0)),
        "clip_high": int(np.sum(raw > 1)),
        "floor_clamps": int(sum(p.clamped for p in pairs)),
        "bandwidth": params.bandwidth_for(inc.n),
    }
    return HurstCurve(u, vals, "log_ratio", diag)


def hurst_smoothed_log(inc: IncrementPair, params: EstimatorParams, u_grid) -> HurstCurve:
    """``0.5 sum_i w_i(u) log2(chi_tilde_i^2 / chi_i^2)`` clipped to [0, 1].

    Indices where either squared increment vanishes are dropped and the local
    fit is recomputed on the remaining points.
    """
    n = inc.n
    b = params.bandwidth_for(n)
    u = np.atleast_1d(np.asarray(u_grid, dtype=float))
    sq = inc.squares()
    ok = (sq[:, 0] > 0) & (sq[:, 1] > 0)
    logr = np.zeros(n)
    logr[ok] = np.log2(sq[ok, 1] / sq[ok, 0])
    mask = None if ok.all() else ok
    vals = np.empty(u.size)
    excluded, unreliable = [], []
    for j, x in enumerate(u):
        w = weights(params.kernel, n, float(x), b, params.degree, mask=mask)
        vals[j] = 0.5 * smooth(w, logr)
        if mask is not None:
            window = np.arange(w.start, w.start + w.values.size) - 1
            dropped = int(np.sum(~ok[window]))
            excluded.append(dropped)
            if dropped > 0.1 * window.size:
                unreliable.append(float(x))
    diag = {
        "clip_low": int(np.sum(vals < 0)),
        "clip_high": int(np.sum(vals > 1)),
        "excluded_indices": [int(i) + 1 for i in np.flatnonzero(~ok)],
        "excluded_per_point": excluded,
        "unreliable_u": unreliable,
        "bandwidth": b,
    }
    return HurstCurve(u, np.clip(vals, 0.0, 1.0), "smoothed_log", diag)


def _phi_on_grid(inc: IncrementPair, params: EstimatorParams, positions: np.ndarray):
    """Floored moment pairs at ``u = p/n`` plus the number of clamped points."""
    n = inc.n
    sm = grid_smoother(params.kernel, n, params.bandwidth_for(n), params.degree)
    sq = inc.squares()
    phi = sm.apply(sq, positions)
    floor = params.epsilon_floor * _window_means(sq[:, 0], sm, positions)
    floor = np.where(floor > 0, floor, np.finfo(float).tiny)
    clamped = (phi[:, 0] < floor) | (phi[:, 1] < floor)
    return np.maximum(phi, floor[:, None]), int(clamped.sum())


def _window_means(y: np.ndarray, sm, positions: np.ndarray) -> np.ndarray:
    csum = np.concatenate([[0.0], np.cumsum(y)])
    lo = np.clip(positions + sm.offsets[0], 1, sm.n)
    hi = np.clip(positions + sm.offsets[-1], 1, sm.n)
    return (csum[hi] - csum[lo - 1]) / (hi - lo + 1)


def local_hurst_grid(inc: IncrementPair, params: EstimatorParams, positions=None) -> HurstCurve:
    """Log-ratio estimator at every design point ``u = p/n`` (default p = 1..n, skipping
    positions where the window is too small for the degree)."""
    n = inc.n
    if positions is None:
        positions = np.arange(params.degree + 1 if params.kernel.support == "left" else 1, n + 1)
    positions = np.asarray(positions, dtype=int)
    phi, clamps = _phi_on_grid(inc, params, positions)
    raw = _half_log2_ratio(phi[:, 0], phi[:, 1])
    diag = {"clip_low": int(np.sum(raw < 0)), "clip_high": int(np.sum(raw > 1)), "floor_clamps": clamps}
    return HurstCurve(positions / n, np.clip(raw, 0.0, 1.0), "log_ratio", diag)


def integrated_hurst(inc: IncrementPair, params: EstimatorParams) -> IntegratedCurve:
    """Linearised integrated Hurst estimator.

    ``H(u) = (1/n) sum_{t=2L}^{floor(un)} [H_n((t-L)/n)
    + (chi~_t^2 / phi2((t-L)/n) - chi_t^2 / phi1((t-L)/n)) / (2 ln 2)]``,
    with the local fits one-sided so every summand's weights use data up to
    ``t - L`` only. The local estimate is clipped to [0, 1].
    """
    if params.kernel.support != "left":
        raise DomainError("the integrated estimator needs a kernel supported on [-1, 0]")
    n = inc.n
    L = params.lag_for(n)
    if n <= 4 * L:
        raise DomainError(f"need n > 4L, got n={n}, L={L}")
    t = np.arange(2 * L, n + 1)
    params = params.one_sided_fit()
    phi, clamps = _phi_on_grid(inc, params, t - L)
    raw = _half_log2_ratio(phi[:, 0], phi[:, 1])
    h_loc = np.clip(raw, 0.0, 1.0)
    sq = inc.squares()[t - 1]
    correction = (sq[:, 1] / phi[:, 1] - sq[:, 0] / phi[:, 0]) / (2.0 * _LN2)
    summands = h_loc + correction
    values = np.zeros(n + 1)
    values[2 * L:] = np.cumsum(summands) / n
    diag = {
        "lag": L,
        "degree": params.degree,
        "bandwidth": params.bandwidth_for(n),
        "clip_low": int(np.sum(raw < 0)),
        "clip_high": int(np.sum(raw > 1)),
        "floor_clamps": clamps,
    }
    return IntegratedCurve(np.arange(n + 1) / n, values, start=2 * L, origin=(2 * L - 1) / n,
                           summands=summands, diagnostics=diag)


def plugin_hurst(inc: IncrementPair, params: EstimatorParams) -> HurstCurve:
    """One-sided local estimates ``H_n(t/n)``, t = 2L..n, as used by the plug-in variance."""
    n = inc.n
    L = params.lag_for(n)
    return local_hurst_grid(inc, params.one_sided_fit(), np.arange(2 * L, n + 1))


def variance_curve(hurst: HurstCurve, params: EstimatorParams, cfg: AsymVarConfig = AsymVarConfig(),
                   n: int | None = None, form: str = "lrv") -> VarCurve:
    """Plug-in ``Sigma(u) = (1/n) sum_{t=2L}^{floor(un)} tau^2(H_n(t/n))``.

    ``hurst`` must be sampled at (a superset of) ``u = t/n`` for t = 2L..n.
    ``form='lrv'`` uses :func:`~mbmhurst.fracmath.tau_squared_lrv` (the variance
    of the linearised estimator); ``form='printed'`` the closed form
    :func:`~mbmhurst.fracmath.tau_squared`.
    """
    u = np.asarray(hurst.u, dtype=float)
    if n is None:
        n = int(round(1.0 / np.min(np.diff(u)))) if u.size > 1 else 1
    L = params.lag_for(n)
    pos = np.rint(u * n).astype(int)
    lookup = dict(zip(pos.tolist(), np.asarray(hurst.values, dtype=float).tolist()))
    t = np.arange(2 * L, n + 1)
    missing = [int(x) for x in t if x not in lookup]
    if missing:
        raise DomainError(f"hurst curve lacks grid points t/n for t in {missing[:5]}...")
    h = np.clip(np.array([lookup[int(x)] for x in t]), 0.01, 0.99)
    tau2 = tau_squared_interpolant(form, cfg)(h)
    values = np.zeros(n + 1)
    values[2 * L:] = np.cumsum(tau2) / n
    return VarCurve(np.arange(n + 1) / n, values)
