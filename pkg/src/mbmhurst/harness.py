"""Experiment orchestration: scenario definitions, rate studies, level/power studies
and flat-file persistence."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DomainError, ThetaFunction, derive_seed, theta_from_samples
from .estimators import EstimatorParams, hurst_log_ratio, hurst_smoothed_log, increments
from .hypotests import FunctionClass, MCSettings, test_constancy, test_gof
from .localpoly import Kernel
from .simulate import FbmConfig, MbmConfig, mbm_diagnostics, simulate_fbm, simulate_mbm

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ResultTable",
    "scenario_theta",
    "simulate_scenario",
    "run_rate_study",
    "run_test_study",
    "load_config_file",
]

log = logging.getLogger(__name__)

SCENARIOS = ("constant_h", "smooth_h", "jump_h", "linear_h", "custom")
_METHODS = ("log_ratio", "smoothed")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation study.

    Scenarios: ``constant_h`` (``H = hurst``), ``smooth_h``
    (``H_v = hurst + amplitude sin(2 pi v)``), ``jump_h`` (``h_before`` to
    ``h_after`` at ``jump_at``), ``linear_h`` (``H_v = intercept + slope v``)
    and ``custom`` (``theta_file``: JSON/YAML with ``h_samples``, ``s_samples``).
    ``sigma='sinusoidal'`` replaces the unit volatility by
    ``1 + sigma_amplitude sin(2 pi v)``. Constant ``H`` with constant
    volatility is simulated exactly as fBm; everything else by the mBm scheme.
    """

    scenario: str = "constant_h"
    n_list: tuple[int, ...] = (1024,)
    replications: int = 10
    seed: int = 0
    output_dir: str | None = None
    hurst: float = 0.5
    amplitude: float = 0.2
    h_before: float = 0.3
    h_after: float = 0.7
    jump_at: float = 0.5
    intercept: float = 0.4
    slope: float = 0.3
    theta_file: str | None = None
    sigma: str = "constant"
    sigma_amplitude: float = 0.5
    variant: str = "ito"
    m_sub: int = 16
    past_horizon: float = 10.0
    params: EstimatorParams = EstimatorParams()
    mc: MCSettings = MCSettings()
    probes: tuple[float, ...] = (0.25, 0.5, 0.75)
    methods: tuple[str, ...] = _METHODS
    test: str = "cusum"
    gof_class: str = "constant"
    alpha: float = 0.05
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "probes", tuple(float(u) for u in self.probes))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.scenario == "custom" and not self.theta_file:
            raise ConfigError("scenario 'custom' needs theta_file")
        if self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications}")
        if not self.n_list or any(n < 256 for n in self.n_list):
            raise ConfigError(f"n_list must be nonempty with every n >= 256, got {self.n_list}")
        if self.sigma not in ("constant", "sinusoidal"):
            raise ConfigError(f"sigma must be 'constant' or 'sinusoidal', got {self.sigma!r}")
        if self.test not in ("cusum", "gof"):
            raise ConfigError(f"test must be 'cusum' or 'gof', got {self.test!r}")
        if self.gof_class not in ("singleton", "constant", "linear"):
            raise ConfigError(f"gof_class must be singleton, constant or linear, got {self.gof_class!r}")
        if any(m not in _METHODS for m in self.methods):
            raise ConfigError(f"methods must be a subset of {_METHODS}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if isinstance(d.get("params"), dict):
                d["params"] = params_from_dict(d["params"])
            if isinstance(d.get("mc"), dict):
                d["mc"] = MCSettings(**d["mc"])
            return cls(**d)
        except (TypeError, DomainError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))


def params_from_dict(d: dict) -> EstimatorParams:
    d = dict(d)
    k = d.pop("kernel", None)
    if isinstance(k, dict):
        if k.get("samples") is not None:
            k["samples"] = tuple(k["samples"])
        d["kernel"] = Kernel(**k)
    elif isinstance(k, str):
        d["kernel"] = Kernel(k)
    return EstimatorParams(**d)


def load_config_file(path) -> dict:
    """Read a JSON or YAML mapping."""
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        import yaml

        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def scenario_theta(cfg: ExperimentConfig) -> ThetaFunction:
    if cfg.scenario == "custom":
        theta_spec = load_config_file(cfg.theta_file)
        try:
            theta = theta_from_samples(theta_spec["h_samples"], theta_spec["s_samples"], theta_spec.get("eta", 1.0))
        except KeyError as exc:
            raise ConfigError(f"{cfg.theta_file}: missing key {exc}") from exc
        return theta
    if cfg.scenario == "constant_h":
        h = lambda v: np.full(np.shape(v), cfg.hurst)
    elif cfg.scenario == "smooth_h":
        h = lambda v: cfg.hurst + cfg.amplitude * np.sin(2.0 * np.pi * np.asarray(v))
    elif cfg.scenario == "jump_h":
        h = lambda v: np.where(np.asarray(v) < cfg.jump_at, cfg.h_before, cfg.h_after)
    else:
        h = lambda v: cfg.intercept + cfg.slope * np.asarray(v)
    if cfg.sigma == "sinusoidal":
        s = lambda v: 1.0 + cfg.sigma_amplitude * np.sin(2.0 * np.pi * np.asarray(v))
    else:
        s = lambda v: np.ones(np.shape(v))
    try:
        return ThetaFunction(hurst=h, sigma=s)
    except DomainError as exc:
        raise ConfigError(f"scenario parameters: {exc}") from exc


def _uses_exact_fbm(cfg: ExperimentConfig, theta: ThetaFunction) -> bool:
    return theta.is_constant


def _mbm_config(cfg, theta, n, seed):
    return MbmConfig(theta=theta, n=n, past_horizon=cfg.past_horizon, m_sub=cfg.m_sub, variant=cfg.variant,
                     seed=seed)


def simulate_scenario(cfg: ExperimentConfig, n: int, seed: int):
    theta = scenario_theta(cfg)
    if _uses_exact_fbm(cfg, theta):
        h_lo, _, s2_lo, _ = theta.bounds
        return simulate_fbm(FbmConfig(H=h_lo, sigma=math.sqrt(s2_lo), n=n, seed=seed))
    return simulate_mbm(_mbm_config(cfg, theta, n, seed))


@dataclass
class ResultTable:
    """Flat table of per-replication rows plus aggregate summaries."""

    columns: list[str]
    rows: list[dict]
    summary_columns: list[str] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @staticmethod
    def _csv(columns, rows) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])
        return buf.getvalue()

    def to_csv(self) -> str:
        return self._csv(self.columns, self.rows)

    def summary_csv(self) -> str:
        return self._csv(self.summary_columns, self.summary)

    def write(self, output_dir, stem: str, manifest: dict) -> dict:
        out = Path(output_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            paths = {"rows": out / f"{stem}.csv", "summary": out / f"{stem}_summary.csv",
                     "manifest": out / f"{stem}_manifest.json"}
            paths["rows"].write_text(self.to_csv())
            paths["summary"].write_text(self.summary_csv())
            paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write results to {out}: {exc}") from exc
        return {k: str(v) for k, v in paths.items()}


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _run_jobs(fn, jobs, threads):
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    return [fn(j) for j in jobs]


def _guarded(kind, work):
    def run(job):
        cfg, n, rep = job
        seed = derive_seed(cfg.seed, cfg.scenario, n, rep)
        t0 = time.perf_counter()
        base = {"scenario": cfg.scenario, "n": n, "replication": rep, "seed": seed}
        try:
            row = dict(base, status="ok", error="", **work(cfg, n, seed))
        except Exception as exc:  # one failing replication must not sink the study
            log.warning("%s replication failed: scenario=%s n=%d rep=%d seed=%d: %r",
                        kind, cfg.scenario, n, rep, seed, exc)
            row = dict(base, status="error", error=f"{type(exc).__name__}: {exc}")
        return row, time.perf_counter() - t0
    return run


def _rate_work(cfg: ExperimentConfig, n: int, seed: int) -> dict:
    path = simulate_scenario(cfg, n, seed)
    inc = increments(path)
    theta = scenario_theta(cfg)
    out = {}
    probes = np.array(cfg.probes)
    truth = theta.hurst_at(probes)
    for m in cfg.methods:
        fn = hurst_log_ratio if m == "log_ratio" else hurst_smoothed_log
        est = fn(inc, cfg.params, probes).values
        for u, e, h in zip(cfg.probes, est, truth):
            out[f"{m}@{u:g}"] = float(e)
            out[f"err_{m}@{u:g}"] = float(e - h)
    return out


def _rate_job(job):
    return _guarded("rate", _rate_work)(job)


def _test_work(cfg: ExperimentConfig, n: int, seed: int) -> dict:
    path = simulate_scenario(cfg, n, seed)
    mc = dataclasses.replace(cfg.mc, seed=derive_seed(seed, "mc"))
    if cfg.test == "cusum":
        rep = test_constancy(path, cfg.params, cfg.alpha, mc)
    else:
        rep = test_gof(path, _gof_class(cfg), cfg.params, cfg.alpha, mc)
    return {"statistic": rep.statistic, "quantile": rep.quantile, "p_value": rep.p_value,
            "reject": int(rep.decision == "reject")}


def _test_job(job):
    return _guarded("test", _test_work)(job)


def _gof_class(cfg: ExperimentConfig) -> FunctionClass:
    if cfg.gof_class == "singleton":
        return FunctionClass.singleton(scenario_theta(cfg).hurst_at)
    if cfg.gof_class == "constant":
        return FunctionClass.constant_family()
    return FunctionClass.linear_family()


def _jobs(cfg):
    return [(cfg, n, rep) for n in cfg.n_list for rep in range(cfg.replications)]


def _manifest(cfg, kind, wall, extra):
    import scipy

    theta = scenario_theta(cfg)
    diag = None
    if not _uses_exact_fbm(cfg, theta):
        diag = {str(n): mbm_diagnostics(_mbm_config(cfg, theta, n, 0)) for n in cfg.n_list}
    return {
        "study": kind,
        "config": cfg.to_dict(),
        "versions": {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_s": wall,
        "generator": "exact_fbm" if diag is None else "mbm",
        "mesh_diagnostics": diag,
        **extra,
    }


def _fit_slope(ns, rmse):
    ok = np.isfinite(rmse) & (np.asarray(rmse) > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(np.asarray(ns, dtype=float)[ok]), np.log(np.asarray(rmse)[ok]), 1)[0])


def run_rate_study(cfg: ExperimentConfig, write: bool = True) -> ResultTable:
    """Simulate, estimate at the probe points, aggregate RMSE per n and fit log-log slopes."""
    t0 = time.perf_counter()
    results = _run_jobs(_rate_job, _jobs(cfg), cfg.threads)
    rows = [r for r, _ in results]
    keys = [f"{m}@{u:g}" for m in cfg.methods for u in cfg.probes]
    columns = ["scenario", "n", "replication", "seed", "status", "error"] + keys + [f"err_{k}" for k in keys]
    summary, slopes = [], {}
    for k in keys:
        rmse_by_n = []
        for n in cfg.n_list:
            errs = np.array([r[f"err_{k}"] for r in rows if r["n"] == n and r["status"] == "ok"])
            rmse = float(np.sqrt(np.mean(errs ** 2))) if errs.size else math.nan
            med = float(np.median(np.abs(errs))) if errs.size else math.nan
            rmse_by_n.append(rmse)
            summary.append({"estimator": k, "n": n, "ok": int(errs.size), "rmse": rmse, "median_abs_error": med})
        slopes[k] = _fit_slope(cfg.n_list, rmse_by_n)
    for s in summary:
        s["slope"] = slopes[s["estimator"]]
    table = ResultTable(columns, rows, ["estimator", "n", "ok", "rmse", "median_abs_error", "slope"], summary,
                        {"slopes": slopes})
    if write and cfg.output_dir:
        manifest = _manifest(cfg, "rate", time.perf_counter() - t0,
                             {"slopes": slopes, "job_times_s": [round(t, 6) for _, t in results],
                              "failures": sum(r["status"] != "ok" for r in rows)})
        table.meta["files"] = table.write(cfg.output_dir, f"rate_{cfg.scenario}", manifest)
    return table


def run_test_study(cfg: ExperimentConfig, write: bool = True) -> ResultTable:
    """Run the configured test over replications and tabulate rejection rates with binomial SEs."""
    t0 = time.perf_counter()
    results = _run_jobs(_test_job, _jobs(cfg), cfg.threads)
    rows = [r for r, _ in results]
    columns = ["scenario", "n", "replication", "seed", "status", "error", "statistic", "quantile", "p_value",
               "reject"]
    summary = []
    for n in cfg.n_list:
        dec = np.array([r["reject"] for r in rows if r["n"] == n and r["status"] == "ok"], dtype=float)
        rate = float(dec.mean()) if dec.size else math.nan
        se = math.sqrt(rate * (1.0 - rate) / dec.size) if dec.size else math.nan
        summary.append({"scenario": cfg.scenario, "test": cfg.test, "n": n, "ok": int(dec.size),
                        "rejection_rate": rate, "se": se})
    table = ResultTable(columns, rows, ["scenario", "test", "n", "ok", "rejection_rate", "se"], summary)
    if write and cfg.output_dir:
        manifest = _manifest(cfg, "test", time.perf_counter() - t0,
                             {"rejection": summary, "job_times_s": [round(t, 6) for _, t in results],
                              "failures": sum(r["status"] != "ok" for r in rows)})
        table.meta["files"] = table.write(cfg.output_dir, f"test_{cfg.test}_{cfg.scenario}", manifest)
    return table
