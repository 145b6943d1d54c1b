"""CUSUM test for a constant Hurst exponent and sup-norm goodness-of-fit tests,
calibrated by Monte-Carlo quantiles of a time-changed Brownian motion."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import linprog, minimize_scalar

from .core import DomainError, SamplePath, derive_seed
from .estimators import (EstimatorParams, IntegratedCurve, VarCurve, increments, integrated_hurst, plugin_hurst,
                         variance_curve)
from .fracmath import AsymVarConfig
from .simulate import time_changed_bm_paths

__all__ = [
    "FunctionClass",
    "MCSettings",
    "TestReport",
    "DegenerateVarianceError",
    "cusum_statistic",
    "mc_sup_samples",
    "mc_quantile_cusum",
    "mc_quantile_sup",
    "gof_statistic",
    "test_constancy",
    "test_gof",
]

_KINDS = ("singleton", "constant_family", "linear_family", "sampled_grid")
# -zeta(1/2) / sqrt(2 pi): shift between discretely and continuously monitored Gaussian maxima
_BGK = 0.5825971579390106
_MIN_QUANTILE_REPS = 1000


class DegenerateVarianceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class FunctionClass:
    """Candidate set of Hurst paths ``v -> H(v)`` on [0, 1].

    Use the constructors: :meth:`singleton`, :meth:`constant_family`,
    :meth:`linear_family`, :meth:`sampled_grid`. The linear family is
    ``H(v) = a v + b`` with ``b`` and ``a + b`` in ``[margin, 1 - margin]``;
    a positive margin keeps the set closed in the uniform norm.
    """

    kind: str
    curves: tuple = ()
    lo: float = 0.01
    hi: float = 0.99
    margin: float = 0.01

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown function class {self.kind!r}")
        if self.kind in ("singleton", "sampled_grid") and not self.curves:
            raise DomainError("function class is empty")
        if self.kind == "constant_family" and not (0.0 < self.lo <= self.hi < 1.0):
            raise DomainError(f"constant range must lie in (0, 1), got [{self.lo}, {self.hi}]")
        if self.kind == "linear_family" and not (0.0 < self.margin < 0.5):
            raise DomainError(f"margin must lie in (0, 1/2), got {self.margin}")

    @classmethod
    def singleton(cls, curve) -> "FunctionClass":
        """``curve`` is a vectorised callable or samples on an equally spaced grid of [0, 1]."""
        return cls("singleton", (_as_curve(curve),))

    @classmethod
    def constant_family(cls, lo: float = 0.01, hi: float = 0.99) -> "FunctionClass":
        return cls("constant_family", lo=lo, hi=hi)

    @classmethod
    def linear_family(cls, margin: float = 0.01) -> "FunctionClass":
        return cls("linear_family", margin=margin)

    @classmethod
    def sampled_grid(cls, curves: Sequence) -> "FunctionClass":
        return cls("sampled_grid", tuple(_as_curve(c) for c in curves))


def _as_curve(c) -> Callable[[np.ndarray], np.ndarray]:
    if callable(c):
        return c
    s = np.asarray(c, dtype=float)
    if s.ndim != 1 or s.size < 2:
        raise DomainError("sampled curves need >= 2 equally spaced samples on [0, 1]")
    if np.any(~(s > 0) | ~(s < 1)):
        raise DomainError("candidate curves must map into (0, 1)")
    grid = np.linspace(0.0, 1.0, s.size)
    return lambda v: np.interp(v, grid, s)


@dataclass(frozen=True)
class MCSettings:
    """Monte-Carlo calibration: replications, grid points of the limit process, seed.

    ``continuity_correction`` shifts each simulated grid supremum by
    ``0.5826 * sqrt(step variance)`` at the maximiser, the standard correction
    from discrete to continuous monitoring of a Gaussian random walk.
    """

    reps: int = 2000
    grid_size: int = 512
    seed: int = 0
    chunk: int = 4096
    continuity_correction: bool = True

    def __post_init__(self):
        if self.reps < 1:
            raise DomainError("reps must be >= 1")
        if self.grid_size < 2:
            raise DomainError("grid_size must be >= 2")


@dataclass
class TestReport:
    test: str
    statistic: float
    quantile: float
    alpha: float
    p_value: float
    decision: str
    mc_reps: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), default=_jsonable, **kw)

    def summary(self) -> str:
        return (f"{self.test}: statistic={self.statistic:.4f} quantile={self.quantile:.4f} "
                f"alpha={self.alpha:g} p={self.p_value:.4f} -> {self.decision}")


TestReport.__test__ = False  # not a pytest class


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serialisable: {type(x)}")


def _sup_positions(m: int, sup_points: int | None) -> np.ndarray:
    # indices into a grid of m points, keeping both ends
    if sup_points is None or m <= sup_points:
        return np.arange(m)
    return np.unique(np.rint(np.linspace(0, m - 1, sup_points)).astype(int))


def cusum_statistic(curve, sup_points: int | None = 1024) -> float:
    """``sup_u |H(u) - u H(1)|`` over the curve grid (coarsened to ``sup_points``)."""
    u = np.asarray(curve.u, dtype=float)
    y = np.asarray(curve.values, dtype=float)
    if u.size == 0:
        raise DomainError("empty curve")
    if not math.isclose(u[-1], 1.0, abs_tol=1e-12):
        raise DomainError("curve must extend to u = 1")
    k = _sup_positions(u.size, sup_points)
    return float(np.max(np.abs(y[k] - u[k] * y[-1])))


def mc_sup_samples(var_curve: VarCurve, kind: str, reps: int, grid_size: int, seed: int,
                   chunk: int = 4096, continuity_correction: bool = True) -> np.ndarray:
    """Samples of ``sup_u |W(S(u)) - u W(S(1))|`` (``kind='bridge'``) or
    ``sup_u |W(S(u))|`` (``kind='sup'``) on ``u = k/grid_size``."""
    if kind not in ("bridge", "sup"):
        raise DomainError(f"unknown functional {kind!r}")
    u = np.linspace(0.0, 1.0, grid_size + 1)
    s = np.asarray(var_curve.at(u), dtype=float)
    if not s[-1] > 0:
        raise DegenerateVarianceError("variance curve vanishes at u = 1; the test is undefined")
    rng = np.random.default_rng(derive_seed(seed, "mc", kind))
    ds = np.diff(s, prepend=0.0)
    # step variance attributed to grid point k: mean of the two adjacent steps
    local = 0.5 * (ds + np.append(ds[1:], ds[-1]))
    out = []
    for w in time_changed_bm_paths(s, reps, rng, chunk):
        if kind == "bridge":
            w = w - u * w[:, -1:]
        a = np.abs(w)
        k = np.argmax(a, axis=1)
        m = a[np.arange(a.shape[0]), k]
        if continuity_correction:
            m = m + _BGK * np.sqrt(local[k])
        out.append(m)
    return np.concatenate(out)


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def _check_reps(reps):
    # tail quantiles from fewer draws are too noisy to be worth reporting
    if reps < _MIN_QUANTILE_REPS:
        raise DomainError(f"quantile estimation needs reps >= {_MIN_QUANTILE_REPS}, got {reps}")


def mc_quantile_cusum(var_curve: VarCurve, alpha: float = 0.05, reps: int = 2000, grid_size: int = 512,
                      seed: int = 0, continuity_correction: bool = True) -> float:
    """Empirical ``1 - alpha`` quantile of the bridge supremum of ``W(S(.))``."""
    _check_alpha(alpha)
    _check_reps(reps)
    return float(np.quantile(mc_sup_samples(var_curve, "bridge", reps, grid_size, seed,
                                                   continuity_correction=continuity_correction), 1.0 - alpha))


def mc_quantile_sup(var_curve: VarCurve, alpha: float = 0.05, reps: int = 2000, grid_size: int = 512,
                    seed: int = 0, continuity_correction: bool = True) -> float:
    """Empirical ``1 - alpha`` quantile of ``sup_u |W(S(u))|``."""
    _check_alpha(alpha)
    _check_reps(reps)
    return float(np.quantile(mc_sup_samples(var_curve, "sup", reps, grid_size, seed,
                                                   continuity_correction=continuity_correction), 1.0 - alpha))


def _reference_grid(curve, sup_points):
    u = np.asarray(curve.u, dtype=float)
    y = np.asarray(curve.values, dtype=float)
    if u.size == 0:
        raise DomainError("empty curve")
    k = _sup_positions(u.size, sup_points)
    origin = float(getattr(curve, "origin", 0.0))
    return u[k], y[k], origin


def _integral(fn, u, origin, dense_u):
    # int_origin^max(u, origin) fn, by the trapezoid rule on the dense grid
    v = np.clip(dense_u, origin, None)
    v = np.unique(np.concatenate([[origin], v]))
    cum = cumulative_trapezoid(fn(v), v, initial=0.0)
    return np.interp(np.clip(u, origin, None), v, cum)


def _linear_objective(u, y, origin):
    v = np.clip(u, origin, None)
    p = 0.5 * (v ** 2 - origin ** 2)  # coefficient of a
    q = v - origin  # coefficient of b

    def obj(a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        r = y - a[..., None] * p - b[..., None] * q
        return np.max(np.abs(r), axis=-1)

    return obj, p, q


def _linear_nested_grid(obj, margin, size=64, refinements=2, factor=4.0):
    # parametrise by (b, c) = (H(0), H(1)) on the square [margin, 1 - margin]^2
    lo, hi = margin, 1.0 - margin
    centre = np.array([0.5, 0.5])
    width = hi - lo
    best = (math.inf, None)
    for level in range(refinements + 1):
        axes = [np.linspace(max(lo, c - width / 2), min(hi, c + width / 2), size) for c in centre]
        B, C = np.meshgrid(*axes, indexing="ij")
        vals = np.array([obj(C[i] - B[i], B[i]) for i in range(size)])
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        if vals[i, j] < best[0]:
            best = (float(vals[i, j]), (float(B[i, j]), float(C[i, j])))
        centre = np.array(best[1])
        width /= factor
    b, c = best[1]
    return best[0], {"a": c - b, "b": b}


def _linear_lp(y, p, q, margin):
    # variables (a, b, s): minimise s with |y - a p - b q| <= s, b and a + b in [margin, 1 - margin]
    m = y.size
    A = np.block([[-p[:, None], -q[:, None], -np.ones((m, 1))],
                  [p[:, None], q[:, None], -np.ones((m, 1))],
                  [np.array([[1.0, 1.0, 0.0], [-1.0, -1.0, 0.0]])]])
    rhs = np.concatenate([-y, y, [1.0 - margin, -margin]])
    res = linprog([0.0, 0.0, 1.0], A_ub=A, b_ub=rhs,
                  bounds=[(None, None), (margin, 1.0 - margin), (0.0, None)], method="highs")
    if not res.success:
        raise ArithmeticError(f"linear programme failed: {res.message}")
    a, b, s = res.x
    return float(s), {"a": float(a), "b": float(b)}


def gof_statistic(curve, cls: FunctionClass, sup_points: int | None = 1024,
                  linear_method: str = "grid") -> tuple[float, dict]:
    """``inf_{G in cls} sup_u |H(u) - int_origin^u G|`` and the minimising member.

    ``origin`` is taken from the curve (0 if absent). The linear family is
    minimised on nested grids (``linear_method='grid'``) or exactly as a
    linear programme (``'lp'``).
    """
    u, y, origin = _reference_grid(curve, sup_points)
    if cls.kind in ("singleton", "sampled_grid"):
        dense = np.asarray(curve.u, dtype=float)
        best = (math.inf, None)
        for idx, fn in enumerate(cls.curves):
            ref = _integral(fn, u, origin, dense)
            val = float(np.max(np.abs(y - ref)))
            if val < best[0]:
                best = (val, {"index": idx})
        return best
    if cls.kind == "constant_family":
        q = np.clip(u, origin, None) - origin
        f = lambda c: float(np.max(np.abs(y - c * q)))
        res = minimize_scalar(f, bounds=(cls.lo, cls.hi), method="bounded", options={"xatol": 1e-10})
        # the bounded search never probes the end points themselves
        cands = [(res.fun, res.x), (f(cls.lo), cls.lo), (f(cls.hi), cls.hi)]
        val, c = min(cands)
        return float(val), {"c": float(c)}
    obj, p, q = _linear_objective(u, y, origin)
    if linear_method == "lp":
        return _linear_lp(y, p, q, cls.margin)
    if linear_method != "grid":
        raise DomainError(f"unknown linear_method {linear_method!r}")
    return _linear_nested_grid(obj, cls.margin)


def _pipeline(path: SamplePath, params: EstimatorParams, asym: AsymVarConfig, form: str):
    inc = increments(path)
    params = params.left_sided()
    curve = integrated_hurst(inc, params)
    local = plugin_hurst(inc, params)
    var = variance_curve(local, params, asym, n=inc.n, form=form)
    return inc.n, curve, local, var


def _report(name, stat, samples, alpha, reps, diagnostics):
    q = float(np.quantile(samples, 1.0 - alpha))
    p = (1.0 + float(np.sum(samples >= stat))) / (reps + 1.0)
    return TestReport(name, float(stat), q, float(alpha), p, "reject" if stat > q else "retain", int(reps),
                      diagnostics)


def test_constancy(path: SamplePath, params: EstimatorParams = EstimatorParams(), alpha: float = 0.05,
                   mc: MCSettings = MCSettings(), asym: AsymVarConfig = AsymVarConfig(), form: str = "lrv",
                   sup_points: int | None = 1024) -> TestReport:
    """CUSUM test of ``H`` constant: reject when ``sqrt(n) T_CUSUM`` exceeds the MC quantile."""
    _check_alpha(alpha)
    n, curve, local, var = _pipeline(path, params, asym, form)
    stat = math.sqrt(n) * cusum_statistic(curve, sup_points)
    samples = mc_sup_samples(var, "bridge", mc.reps, mc.grid_size, mc.seed, mc.chunk, mc.continuity_correction)
    diag = dict(curve.diagnostics)
    diag.update(variance_end=float(var.values[-1]), plugin_clip_low=local.diagnostics["clip_low"],
                plugin_clip_high=local.diagnostics["clip_high"], tau2_form=form)
    return _report("cusum", stat, samples, alpha, mc.reps, diag)


def test_gof(path: SamplePath, cls: FunctionClass, params: EstimatorParams = EstimatorParams(),
             alpha: float = 0.05, mc: MCSettings = MCSettings(), asym: AsymVarConfig = AsymVarConfig(),
             form: str = "lrv", sup_points: int | None = 1024, linear_method: str = "grid") -> TestReport:
    """Goodness-of-fit test of ``H in cls`` against the MC quantile of ``sup_u |W(S(u))|``."""
    _check_alpha(alpha)
    n, curve, local, var = _pipeline(path, params, asym, form)
    raw, minimiser = gof_statistic(curve, cls, sup_points, linear_method)
    stat = math.sqrt(n) * raw
    samples = mc_sup_samples(var, "sup", mc.reps, mc.grid_size, mc.seed, mc.chunk, mc.continuity_correction)
    diag = dict(curve.diagnostics)
    diag.update(variance_end=float(var.values[-1]), minimiser=minimiser, function_class=cls.kind, tau2_form=form)
    return _report("gof", stat, samples, alpha, mc.reps, diag)


# keep pytest from collecting these when imported into test modules
test_constancy.__test__ = False
test_gof.__test__ = False
