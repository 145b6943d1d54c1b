"""Kernels and local polynomial regression weights."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.integrate import trapezoid

from .core import DomainError

__all__ = [
    "Kernel",
    "WeightVector",
    "RankDeficiencyError",
    "weights",
    "smooth",
    "grid_smoother",
]

_SHAPES = ("epanechnikov", "uniform", "triangular", "custom-sampled")
_SUPPORTS = {"two_sided": (-1.0, 1.0), "left": (-1.0, 0.0), "right": (0.0, 1.0)}
# relative slack when testing |i/n - u| <= b, so that points exactly on the edge count
_EDGE_TOL = 1e-12


class RankDeficiencyError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class Kernel:
    """Kernel ``K`` with ``int K = 1`` on its support.

    ``samples`` is only used by the ``custom-sampled`` shape: values on an
    equally spaced grid over the support, linearly interpolated and renormalised.
    """

    shape: str = "epanechnikov"
    support: str = "two_sided"
    samples: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.shape not in _SHAPES:
            raise DomainError(f"unknown kernel shape {self.shape!r}")
        if self.support not in _SUPPORTS:
            raise DomainError(f"unknown kernel support {self.support!r}")
        if self.shape == "custom-sampled":
            s = np.asarray(self.samples, dtype=float)
            if s.ndim != 1 or s.size < 2 or np.any(s < 0) or not np.any(s > 0):
                raise DomainError("custom kernel needs >= 2 non-negative samples, not all zero")
            object.__setattr__(self, "samples", tuple(float(x) for x in s))

    @property
    def interval(self) -> tuple[float, float]:
        return _SUPPORTS[self.support]

    def with_support(self, support: str) -> "Kernel":
        return replace(self, support=support)

    def _profile(self, x):
        # unnormalised shape on the symmetric [-1, 1]
        ax = np.abs(x)
        if self.shape == "epanechnikov":
            return 0.75 * (1.0 - ax ** 2)
        if self.shape == "uniform":
            return np.full_like(ax, 0.5)
        if self.shape == "triangular":
            return 1.0 - ax
        lo, hi = self.interval
        s = np.asarray(self.samples)
        grid = np.linspace(lo, hi, s.size)
        mass = trapezoid(s, grid)
        return np.interp(x, grid, s) / mass

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.interval
        inside = (x >= lo) & (x <= hi)
        out = np.where(inside, self._profile(np.clip(x, lo, hi)), 0.0)
        if self.shape != "custom-sampled" and self.support != "two_sided":
            out = 2.0 * out
        return out


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Local polynomial weights ``w_i(u)``, non-zero only on ``i = start .. start+len(values)-1``."""

    u: float
    b: float
    degree: int
    n: int
    start: int
    values: np.ndarray
    kernel_points: int = 0

    def dense(self) -> np.ndarray:
        out = np.zeros(self.n)
        out[self.start - 1:self.start - 1 + self.values.size] = self.values
        return out

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.values.size)

    def moments(self, up_to: int) -> np.ndarray:
        """``sum_i (i/n - u)^k w_i`` for ``k = 0 .. up_to``."""
        d = self.indices / self.n - self.u
        return np.array([np.sum(d ** k * self.values) for k in range(up_to + 1)])

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    @property
    def abs_sum(self) -> float:
        return float(np.sum(np.abs(self.values)))


def _solve_weights(kw: np.ndarray, x: np.ndarray, degree: int, where: str) -> np.ndarray:
    """First row of the weighted least-squares hat matrix, via QR of the scaled design."""
    active = kw > 0
    if np.unique(x[active]).size < degree + 1:
        raise RankDeficiencyError(
            f"window {where} has {int(active.sum())} points with kernel mass; degree {degree} needs {degree + 1}")
    sw = np.sqrt(kw)
    design = sw[:, None] * x[:, None] ** np.arange(degree + 1)
    q, r = linalg.qr(design, mode="economic")
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-12 * diag.max():
        raise RankDeficiencyError(f"singular local design in window {where}")
    e0 = np.zeros(degree + 1)
    e0[0] = 1.0
    z = linalg.solve_triangular(r, e0, trans="T")
    return sw * (q @ z)


def _window(kernel: Kernel, n: int, center: float, b: float) -> tuple[int, int]:
    # indices i in 1..n with (i - center)/(n b) inside the kernel support
    lo, hi = kernel.interval
    nb = n * b
    slack = _EDGE_TOL * max(1.0, nb)
    first = max(1, int(np.ceil(center + lo * nb - slack)))
    last = min(n, int(np.floor(center + hi * nb + slack)))
    return first, last


def weights(kernel: Kernel, n: int, u: float, b: float, l: int = 1, mask: np.ndarray | None = None) -> WeightVector:
    """Local polynomial weights of degree ``l`` at ``u`` for the design ``i/n, i = 1..n``.

    Near the boundary the window is truncated and the fit is recomputed on the
    points that remain. ``mask`` (length ``n``, boolean) excludes indices.
    """
    if not (0.0 <= u <= 1.0):
        raise DomainError(f"u must lie in [0, 1], got {u}")
    if not (0.0 < b < 1.0):
        raise DomainError(f"bandwidth must lie in (0, 1), got {b}")
    if l < 0:
        raise DomainError(f"degree must be >= 0, got {l}")
    first, last = _window(kernel, n, u * n, b)
    if last < first:
        raise RankDeficiencyError(f"empty window at u={u}, b={b}")
    idx = np.arange(first, last + 1)
    # points admitted by the (slack-tolerant) window count as inside the support
    x = np.clip((idx - u * n) / (n * b), *kernel.interval)
    kw = kernel(x) / b
    if mask is not None:
        kw = np.where(np.asarray(mask)[idx - 1], kw, 0.0)
    w = _solve_weights(kw, x, l, f"[{first}, {last}] at u={u:.6g}")
    return WeightVector(u=float(u), b=float(b), degree=l, n=n, start=first, values=w,
                        kernel_points=int(np.count_nonzero(kw)))


def smooth(w: WeightVector, y) -> np.ndarray | float:
    """``sum_i w_i y_i``; ``y`` may be ``(n,)`` or ``(n, k)`` (component-wise)."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] != w.n:
        raise DomainError(f"expected {w.n} observations, got {y.shape[0]}")
    seg = y[w.start - 1:w.start - 1 + w.values.size]
    out = np.tensordot(w.values, seg, axes=(0, 0))
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class _GridSmoother:
    kernel: Kernel
    n: int
    b: float
    degree: int
    template: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    def weights_at(self, p: int) -> WeightVector:
        if p not in self._cache:
            self._cache[p] = weights(self.kernel, self.n, p / self.n, self.b, self.degree)
        return self._cache[p]

    def is_interior(self, p: int) -> bool:
        return 1 <= p + self.offsets[0] and p + self.offsets[-1] <= self.n

    def apply(self, y: np.ndarray, positions: np.ndarray) -> np.ndarray:
        """Smooth ``y`` (shape ``(n,)`` or ``(n, k)``) at integer positions ``p`` (``u = p/n``)."""
        y = np.asarray(y, dtype=float)
        positions = np.asarray(positions, dtype=int)
        lo, hi = self.offsets[0], self.offsets[-1]
        interior = (positions + lo >= 1) & (positions + hi <= self.n)
        out = np.empty((positions.size,) + y.shape[1:])
        if np.any(interior):
            # valid correlation: result[j] = sum_k template[k] y[j + k], y index j <-> i = j + 1
            cols = y.reshape(self.n, -1)
            corr = np.stack([np.correlate(cols[:, c], self.template, mode="valid")
                             for c in range(cols.shape[1])], axis=-1)
            p = positions[interior]
            out[interior] = corr[p + lo - 1].reshape((p.size,) + y.shape[1:])
        for j in np.flatnonzero(~interior):
            out[j] = smooth(self.weights_at(int(positions[j])), y)
        return out


def grid_smoother(kernel: Kernel, n: int, b: float, l: int = 1) -> _GridSmoother:
    """Smoother for evaluation points on the design grid ``u = p/n``.

    Windows lying entirely inside ``1..n`` share one set of weights (a function
    of ``i - p`` only), so interior points are a single correlation; the
    boundary points fall back to :func:`weights`.
    """
    lo, hi = kernel.interval
    nb = n * b
    slack = _EDGE_TOL * max(1.0, nb)
    offsets = np.arange(int(np.ceil(lo * nb - slack)), int(np.floor(hi * nb + slack)) + 1)
    x = offsets / nb
    template = _solve_weights(kernel(x) / b, x, l, "interior template")
    return _GridSmoother(kernel, n, b, l, template, offsets)
