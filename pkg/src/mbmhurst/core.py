"""Shared domain types: parameter paths, observation grids and sample paths."""

from __future__ import annotations

import csv
import hashlib
import io
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "ThetaFunction",
    "ObservationGrid",
    "SamplePath",
    "PathDiagnostics",
    "theta_from_samples",
    "constant_theta",
    "validate_path",
    "write_path_csv",
    "read_path_csv",
    "derive_seed",
]

_MASK64 = (1 << 64) - 1


class DomainError(ValueError):
    """Raised when an argument lies outside the mathematical domain of an operation."""


def _as_callable(f, name):
    if callable(f):
        return f
    value = float(f)
    return lambda v: np.full(np.shape(v), value, dtype=float)


@dataclass(frozen=True)
class ThetaFunction:
    """Parameter path ``v -> (sigma_v, H_v)``.

    ``hurst`` and ``sigma`` are vectorised callables on ``[0, 1]``; queries at
    ``v < 0`` are answered with the value at ``v = 0`` (constant extension into
    the past). Bounds are probed on a fine grid when not given.
    """

    hurst: Callable[[np.ndarray], np.ndarray]
    sigma: Callable[[np.ndarray], np.ndarray]
    eta: float = 1.0
    bounds: tuple[float, float, float, float] | None = None
    probe_points: int = 4097

    def __post_init__(self):
        object.__setattr__(self, "hurst", _as_callable(self.hurst, "hurst"))
        object.__setattr__(self, "sigma", _as_callable(self.sigma, "sigma"))
        if not self.eta > 0:
            raise DomainError(f"Hölder exponent must be positive, got {self.eta}")
        if self.bounds is None:
            v = np.linspace(0.0, 1.0, self.probe_points)
            h = self.hurst_at(v)
            s2 = self.sigma_at(v) ** 2
            bounds = (float(h.min()), float(h.max()), float(s2.min()), float(s2.max()))
            object.__setattr__(self, "bounds", bounds)
        h_lo, h_hi, s2_lo, s2_hi = self.bounds
        if not (0.0 < h_lo <= h_hi < 1.0):
            raise DomainError(f"Hurst bounds must lie in (0, 1), got ({h_lo}, {h_hi})")
        # sigma == 0 is tolerated for degenerate simulations; estimators never see it
        if not (0.0 <= s2_lo <= s2_hi):
            raise DomainError(f"invalid volatility bounds ({s2_lo}, {s2_hi})")

    def hurst_at(self, v) -> np.ndarray:
        v = np.maximum(np.asarray(v, dtype=float), 0.0)
        return np.asarray(self.hurst(v), dtype=float) * np.ones_like(v)

    def sigma_at(self, v) -> np.ndarray:
        v = np.maximum(np.asarray(v, dtype=float), 0.0)
        return np.asarray(self.sigma(v), dtype=float) * np.ones_like(v)

    @property
    def is_constant(self) -> bool:
        h_lo, h_hi, s2_lo, s2_hi = self.bounds
        return h_lo == h_hi and s2_lo == s2_hi


def theta_from_samples(h_samples: Sequence[float], s_samples: Sequence[float], eta: float = 1.0) -> ThetaFunction:
    """Build a piecewise-linear parameter path from equally spaced samples on [0, 1].

    ``s_samples`` are volatilities sigma (not variances). Evaluation uses linear
    interpolation on [0, 1] and constant extrapolation outside.
    """
    h = np.asarray(h_samples, dtype=float)
    s = np.asarray(s_samples, dtype=float)
    if h.ndim != 1 or h.shape != s.shape or h.size < 2:
        raise DomainError("h_samples and s_samples need equal lengths >= 2")
    for i, x in enumerate(h):
        if not (0.0 < x < 1.0):
            raise DomainError(f"h_samples[{i}] = {x} is outside (0, 1)")
    for i, x in enumerate(s):
        if not (np.isfinite(x) and x ** 2 > 0.0):
            raise DomainError(f"s_samples[{i}] = {x} gives a non-positive variance")
    grid = np.linspace(0.0, 1.0, h.size)
    h = h.copy()
    s = s.copy()
    h.setflags(write=False)
    s.setflags(write=False)
    return ThetaFunction(
        hurst=lambda v: np.interp(v, grid, h),
        sigma=lambda v: np.interp(v, grid, s),
        eta=eta,
        bounds=(float(h.min()), float(h.max()), float((s ** 2).min()), float((s ** 2).max())),
    )


def constant_theta(hurst: float, sigma: float = 1.0) -> ThetaFunction:
    return ThetaFunction(hurst=hurst, sigma=sigma, eta=1.0,
                         bounds=(hurst, hurst, sigma ** 2, sigma ** 2))


@dataclass(frozen=True)
class ObservationGrid:
    """Regular grid ``{-lead_in/n, ..., 0, 1/n, ..., n/n}``."""

    n: int
    lead_in: int = 3

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n}")
        if int(self.lead_in) != self.lead_in or self.lead_in < 0:
            raise DomainError(f"lead_in must be a non-negative integer, got {self.lead_in}")

    @property
    def size(self) -> int:
        return self.n + self.lead_in + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.lead_in, self.n + 1)

    @property
    def times(self) -> np.ndarray:
        return self.indices / self.n


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Observations of X on an :class:`ObservationGrid`; ``values[j]`` is X at ``grid.times[j]``."""

    grid: ObservationGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.grid.n

    def at(self, i: int) -> float:
        """Value at grid time ``i/n`` (``i`` may be negative down to ``-lead_in``)."""
        return float(self.values[i + self.grid.lead_in])

    def scaled(self, c: float) -> "SamplePath":
        return SamplePath(self.grid, c * self.values)


@dataclass(frozen=True)
class PathDiagnostics:
    length: int
    expected_length: int
    n: int
    lead_in: int
    bad_indices: tuple[int, ...] = field(default_factory=tuple)
    structural_mismatch: bool = False

    @property
    def n_bad(self) -> int:
        return len(self.bad_indices)

    @property
    def valid(self) -> bool:
        return not self.structural_mismatch and not self.bad_indices


def validate_path(path: SamplePath) -> PathDiagnostics:
    values = np.asarray(path.values)
    bad = tuple(int(i) for i in np.flatnonzero(~np.isfinite(values)))
    return PathDiagnostics(
        length=int(values.size),
        expected_length=path.grid.size,
        n=path.grid.n,
        lead_in=path.grid.lead_in,
        bad_indices=bad,
        structural_mismatch=values.ndim != 1 or values.size != path.grid.size,
    )


def write_path_csv(path: SamplePath, dest) -> None:
    """Write ``t,x`` rows; ``x`` is written with shortest round-trip repr."""
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", newline="") if own else dest
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "x"])
        for j, x in zip(path.grid.indices, path.values):
            writer.writerow([f"{j / path.grid.n:.12g}", repr(float(x))])
    finally:
        if own:
            fh.close()


def read_path_csv(src) -> SamplePath:
    """Read a path written by :func:`write_path_csv`, reconstructing ``n`` and ``lead_in``."""
    if isinstance(src, (str, os.PathLike)):
        with open(src, newline="") as fh:
            text = fh.read()
    else:
        text = src.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["t", "x"]:
        raise DomainError("path CSV must start with header 't,x'")
    rows = [r for r in rows[1:] if r]
    if len(rows) < 3:
        raise DomainError("path CSV needs at least 3 rows")
    t = np.array([float(r[0]) for r in rows])
    x = np.array([float(r[1]) for r in rows])
    step = np.diff(t)
    if np.any(step <= 0):
        raise DomainError("time column must be strictly increasing")
    n = int(round(1.0 / np.median(step)))
    lead_in = int(np.sum(t < -0.5 / n))
    grid = ObservationGrid(n, lead_in)
    if t.size != grid.size or not np.allclose(t, grid.times, rtol=0, atol=1e-9):
        raise DomainError(f"time column is not the regular grid for n={n}, lead_in={lead_in}")
    return SamplePath(grid, x)


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(seed: int, *keys) -> int:
    """Derive an independent 64-bit seed from ``seed`` and a tuple of keys.

    Stable across processes and Python versions (no reliance on ``hash``).
    """
    digest = hashlib.blake2b(repr(keys).encode(), digest_size=8).digest()
    return _splitmix64((int(seed) & _MASK64) ^ int.from_bytes(digest, "little"))
