"""Ensembles over independent Brownian paths and strong-order studies on
dyadically coupled paths.

Paths are independent work items keyed by their index; results are reduced in
path order, so the estimates do not depend on how many workers ran them.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import math
import os

import numpy as np

from .diagnostics import eta_value
from .dynamics import BlowUpError, DriftParams, NoiseModel, PathNormTracker, SchemeConfig, advance
from .spectral import SpectralField, norm_H
from .trajectory import run_trajectory, step_count
from .wiener import WienerGrid, coarsen, generate_path

__all__ = [
    "WienerGrid",
    "generate_path",
    "coarsen",
    "EnsembleConfig",
    "EnsembleEstimates",
    "EnsembleFailure",
    "OrderResult",
    "resolve_workers",
    "run_ensemble",
    "strong_order_estimate",
    "consistency_gap_estimate",
    "eta_order_estimate",
    "fit_order",
]

WORKERS_ENV = "SPHERE_SH_WORKERS"


class EnsembleFailure(RuntimeError):
    def __init__(self, statuses):
        super().__init__(f"all {len(statuses)} paths overflowed")
        self.statuses = statuses


@dataclass(frozen=True)
class EnsembleConfig:
    paths: int = 8
    T: float = 0.01
    dt_levels: tuple = (1e-4,)
    levels: tuple = ()
    stride: int = 1
    master_seed: int = 0

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if not self.T > 0:
            raise ValueError("T must be positive")
        dts = tuple(sorted(float(d) for d in self.dt_levels))
        if not dts:
            raise ValueError("at least one dt level is required")
        for a, b in zip(dts, dts[1:]):
            if not math.isclose(b, 2.0 * a, rel_tol=1e-12):
                raise ValueError(f"dt levels must be dyadically nested, got {dts}")
        object.__setattr__(self, "dt_levels", dts)
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @classmethod
    def dyadic(cls, dt_coarse: float, count: int, **kw) -> "EnsembleConfig":
        return cls(dt_levels=tuple(dt_coarse / 2**r for r in range(count)), **kw)

    @property
    def dt_fine(self) -> float:
        return self.dt_levels[0]


def resolve_workers(workers: int | None = None, tasks: int | None = None) -> int:
    """Worker count: explicit value, else CPU count; capped by $SPHERE_SH_WORKERS."""
    w = workers if workers is not None else (os.cpu_count() or 1)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {env!r}") from None
        if cap < 1:
            raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {env!r}")
        w = min(w, cap)
    if tasks is not None:
        w = min(w, tasks)
    return max(1, w)


def _map(func, tasks, workers):
    tasks = list(tasks)
    workers = resolve_workers(workers, len(tasks))
    if workers == 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks, chunksize=1))


# ---------------------------------------------------------------------------
# ensembles

@dataclass
class EnsembleEstimates:
    times: np.ndarray
    mean_Y: np.ndarray
    se_Y: np.ndarray
    mean_eta: np.ndarray
    se_eta: np.ndarray
    mean_V: np.ndarray
    se_V: np.ndarray
    levels: tuple
    hit_fraction: dict
    stopped_mean: dict
    stopped_se: dict
    completed: int
    failed: int
    statuses: list
    min_energy: float
    initial_energy: float
    sup_norm_V: float

    @property
    def conditional(self) -> bool:
        return self.failed > 0


def _ensemble_path(task):
    i, u0, T, params, cfg, noise, stride, levels = task
    try:
        d = run_trajectory(u0, T, params, cfg, noise, stride=stride, levels=levels, path_index=i)
    except BlowUpError as err:
        return {"status": f"overflow({err.step})"}
    arr = d.as_arrays()
    return {
        "status": "completed",
        "times": arr["times"],
        "Y": arr["energy_Y"],
        "eta": arr["eta"],
        "V": arr["norm_V"],
        "stopped": {l: d.stopped_energy(l) for l in levels},
        "hits": dict(d.tau_hits),
        "sup_V": d.sup_norm_V,
    }


def _mean_se(stack):
    mean = stack.mean(axis=0)
    if stack.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, stack.std(axis=0, ddof=1) / math.sqrt(stack.shape[0])


def run_ensemble(config: EnsembleConfig, u0: SpectralField, params: DriftParams,
                 cfg: SchemeConfig, noise: NoiseModel, workers: int | None = None
                 ) -> EnsembleEstimates:
    """Sample means and standard errors over ``config.paths`` independent paths.

    Uses ``config.dt_fine`` as the step and ``config.master_seed`` for the
    increments.  Overflowed paths are kept in ``statuses`` and excluded from the
    estimates, which are then conditional on completion.
    """
    cfg = replace(cfg, dt=config.dt_fine, seed=config.master_seed)
    cfg.check_stability(u0.space)
    levels = tuple(sorted(float(l) for l in config.levels))
    tasks = [(i, u0, config.T, params, cfg, noise, config.stride, levels)
             for i in range(config.paths)]
    results = _map(_ensemble_path, tasks, workers)
    statuses = [r["status"] for r in results]
    done = [r for r in results if r["status"] == "completed"]
    if not done:
        raise EnsembleFailure(statuses)
    Y = np.stack([r["Y"] for r in done])
    eta = np.stack([r["eta"] for r in done])
    V = np.stack([r["V"] for r in done])
    mY, sY = _mean_se(Y)
    mE, sE = _mean_se(eta)
    mV, sV = _mean_se(V)
    stopped_mean, stopped_se, hit_fraction = {}, {}, {}
    for l in levels:
        m, s = _mean_se(np.stack([r["stopped"][l] for r in done]))
        stopped_mean[l], stopped_se[l] = m, s
        hit_fraction[l] = sum(r["hits"][l] is not None for r in done) / len(done)
    return EnsembleEstimates(
        times=done[0]["times"], mean_Y=mY, se_Y=sY, mean_eta=mE, se_eta=sE, mean_V=mV, se_V=sV,
        levels=levels, hit_fraction=hit_fraction, stopped_mean=stopped_mean,
        stopped_se=stopped_se, completed=len(done), failed=len(results) - len(done),
        statuses=statuses, min_energy=float(Y.min()), initial_energy=float(Y[0, 0]),
        sup_norm_V=max(r["sup_V"] for r in done))


# ---------------------------------------------------------------------------
# strong order on coupled paths

@dataclass
class OrderResult:
    slope: float
    half_width: float
    dts: np.ndarray          # step size attached to each measured quantity
    means: np.ndarray
    samples: np.ndarray      # paths x len(dts)

    def summary(self) -> str:
        return f"order {self.slope:.4f} +- {self.half_width:.4f} (95%)"


def fit_order(dts, samples) -> OrderResult:
    """Least-squares slope of log2 E[X] against log2 dt, with a delta-method CI.

    ``samples`` is paths x levels.  The same paths feed every level, so the level
    means are correlated and the full sample covariance enters the error bar.
    """
    dts = np.asarray(dts, dtype=float)
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    means = samples.mean(axis=0)
    x = np.log2(dts)
    y = np.log2(means)
    w = (x - x.mean()) / np.sum((x - x.mean()) ** 2)
    slope = float(np.dot(w, y))
    P = samples.shape[0]
    if P > 1:
        cov = np.cov(samples, rowvar=False, ddof=1) / P
        grad = w / (means * math.log(2.0))
        se = math.sqrt(max(float(grad @ np.atleast_2d(cov) @ grad), 0.0))
    else:
        se = float("inf")
    return OrderResult(slope, 1.96 * se, dts, means, samples)


def _integrate(u0, increments, noise, params, cfg):
    """Final state and sup_t |eta| for one run; lean loop without diagnostics."""
    u = u0
    sup_eta = abs(eta_value(u))
    tracker = PathNormTracker() if cfg.truncation_level is not None else None
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(increments.shape[1]):
            x = 0.0
            if tracker is not None:
                x = tracker.observe(u)
                tracker.accumulate(u, cfg.dt)
            u = advance(u, increments[:, i], noise, params, cfg, x_norm=x, step=i)
            sup_eta = max(sup_eta, abs(eta_value(u)))
    return u, sup_eta


def _level_sweep(task):
    i, u0, T, params, cfgs, noise, dts, seed = task
    steps_fine = step_count(T, dts[0])
    grid = generate_path(seed, i, noise.channels, steps_fine, dts[0])
    finals, sups = {}, {}
    for r, dt in enumerate(dts):
        inc = coarsen(grid, r)
        for name, cfg in cfgs.items():
            try:
                u, s = _integrate(u0, inc, noise, params, replace(cfg, dt=dt))
            except BlowUpError:
                u, s = None, math.inf
            finals[name, r] = u
            sups[name, r] = s
    return finals, sups


def _sweep(config, u0, params, cfgs, noise, workers):
    if len(config.dt_levels) < 3:
        raise ValueError(f"order estimates need >= 3 dyadic dt levels, got {len(config.dt_levels)}")
    for cfg in cfgs.values():
        replace(cfg, dt=config.dt_levels[-1]).check_stability(u0.space)
    step_count(config.T, config.dt_levels[-1])
    tasks = [(i, u0, config.T, params, cfgs, noise, config.dt_levels, config.master_seed)
             for i in range(config.paths)]
    out = _map(_level_sweep, tasks, workers)
    for finals, _ in out:
        if any(v is None for v in finals.values()):
            raise EnsembleFailure(["overflow in convergence sweep"])
    return out


def strong_order_estimate(config: EnsembleConfig, u0: SpectralField, params: DriftParams,
                          cfg: SchemeConfig, noise: NoiseModel, workers: int | None = None
                          ) -> OrderResult:
    """Self-convergence order from E|u_dt(T) - u_{dt/2}(T)|_H over adjacent levels."""
    out = _sweep(config, u0, params, {"s": cfg}, noise, workers)
    dts = config.dt_levels
    samples = np.array([[norm_H(f["s", r + 1] - f["s", r]) for r in range(len(dts) - 1)]
                        for f, _ in out])
    return fit_order(np.array(dts[1:]), samples)


def consistency_gap_estimate(config: EnsembleConfig, u0: SpectralField, params: DriftParams,
                             noise: NoiseModel, dt_cfg: SchemeConfig | None = None,
                             workers: int | None = None) -> OrderResult:
    """Order at which |u_heun(T) - u_em(T)|_H vanishes on shared paths.

    Heun integrates the Stratonovich form, Euler-Maruyama the Ito form with the
    1/2 sum m_k correction; agreement in the limit is the Ito-Stratonovich
    conversion.
    """
    base = dt_cfg or SchemeConfig()
    cfgs = {
        "heun": replace(base, scheme="heun_strat", renormalize=False),
        "em": replace(base, scheme="em_ito", renormalize=False),
    }
    out = _sweep(config, u0, params, cfgs, noise, workers)
    dts = config.dt_levels
    samples = np.array([[norm_H(f["heun", r] - f["em", r]) for r in range(len(dts))]
                        for f, _ in out])
    return fit_order(np.array(dts), samples)


def eta_order_estimate(config: EnsembleConfig, u0: SpectralField, params: DriftParams,
                       cfg: SchemeConfig, noise: NoiseModel, workers: int | None = None
                       ) -> OrderResult:
    """Order at which E[sup_t |eta(t)|] vanishes for a non-renormalised scheme."""
    out = _sweep(config, u0, params, {"s": cfg}, noise, workers)
    dts = config.dt_levels
    samples = np.array([[s["s", r] for r in range(len(dts))] for _, s in out])
    return fit_order(np.array(dts), samples)
