"""Whole-trajectory drivers: time stepping with diagnostics, and Picard
iteration of the truncated mild equation on a fixed Brownian path."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .diagnostics import (
    StoppingMonitor,
    TrajectoryDiagnostics,
    energy_Y,
    stopping_update,
)
from .dynamics import (
    BlowUpError,
    DriftParams,
    NoiseModel,
    PathNormTracker,
    SchemeConfig,
    advance,
    ito_parts,
    theta_m,
)
from .spectral import SpectralField, norm_V, semigroup_apply
from .wiener import generate_path


def step_count(T: float, dt: float) -> int:
    steps = int(round(T / dt))
    if steps < 1 or not math.isclose(steps * dt, T, rel_tol=1e-9):
        raise ValueError(f"T={T} is not a positive multiple of dt={dt}")
    return steps


def _as_increments(increments, channels: int, steps: int) -> np.ndarray:
    inc = np.asarray(increments, dtype=float)
    if channels == 0:
        return np.zeros((0, steps))
    return inc.reshape(channels, -1)


def run_trajectory(u0: SpectralField, T: float, params: DriftParams, cfg: SchemeConfig,
                   noise: NoiseModel, increments=None, stride: int = 1, levels=(),
                   keep_states: bool = False, path_index: int = 0) -> TrajectoryDiagnostics:
    """Integrate from ``u0`` over [0, T] and record diagnostics every ``stride`` steps.

    ``increments`` (channels x steps) overrides the Brownian path that is otherwise
    generated from ``cfg.seed`` and ``path_index``.  On blow-up a
    :class:`BlowUpError` is raised whose ``diagnostics`` holds the partial record.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if not u0.is_finite():
        raise ValueError("initial state is not finite")
    cfg.check_stability(u0.space)
    steps = step_count(T, cfg.dt)
    if increments is None:
        increments = generate_path(cfg.seed, path_index, noise.channels, steps, cfg.dt).increments
    increments = _as_increments(increments, noise.channels, steps)
    if increments.shape[1] != steps:
        raise ValueError(f"need {steps} increments per channel, got {increments.shape[1]}")

    n = params.n
    diag = TrajectoryDiagnostics(dt=cfg.dt, stride=stride, n=n)
    if keep_states:
        diag.states, diag.gates, diag.increments = [u0], [], increments
    tracker = PathNormTracker()
    monitor = StoppingMonitor(levels)
    u = u0
    # huge but finite states overflow inside the norms; BlowUpError reports it
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(steps + 1):
            t = i * cfg.dt
            x = tracker.observe(u)
            vnorm = norm_V(u)
            diag.sup_norm_V = max(diag.sup_norm_V, vnorm)
            _, newly = stopping_update(monitor, t, vnorm)
            if newly:
                y = energy_Y(u, n)
                for l in newly:
                    diag.tau_energy[l] = y
            if i % stride == 0 or i == steps:
                diag.append(t, u, n, x)
            if i == steps:
                break
            if keep_states:
                g = 1.0 if cfg.truncation_level is None else theta_m(x, cfg.truncation_level)
                diag.gates.append(g)
            try:
                u_next = advance(u, increments[:, i], noise, params, cfg, x_norm=x, step=i)
            except BlowUpError as err:
                diag.terminal_status = "overflow"
                diag.failed_step = i
                diag.tau_hits = dict(monitor.hits)
                err.diagnostics = diag
                raise
            tracker.accumulate(u, cfg.dt)
            u = u_next
            if keep_states:
                diag.states.append(u)
    diag.tau_hits = dict(monitor.hits)
    diag.final_state = u
    return diag


@dataclass
class PicardResult:
    iterations: int
    residuals: list
    converged: bool
    path: list

    @property
    def ratios(self) -> list:
        r = self.residuals
        return [r[j + 1] / r[j] for j in range(len(r) - 1) if r[j] > 0]

    def report(self) -> str:
        state = "converged" if self.converged else "not contracting (max_iter reached; T too large?)"
        return f"picard: {self.iterations} iterations, {state}"


def _mild_map(path, u0, params, cfg, noise, increments, m):
    """Discrete truncated mild map on a time grid (left-endpoint sums).

    new[i+1] = S(dt) new[i] + S(dt) g_i (dt (F + 1/2 sum m_k)(old[i]) + sum B_k(old[i]) dW_i),
    which unrolls to S(t_{i+1}) u0 + sum_{l<=i} S(t_{i+1} - t_l)(...); g_i = theta_m of the
    X-norm of ``old`` at t_i.
    """
    dt = cfg.dt
    tracker = PathNormTracker()
    out = [u0]
    acc = u0
    for i, u in enumerate(path[:-1]):
        g = theta_m(tracker.observe(u), m)
        tracker.accumulate(u, dt)
        if g > 0:
            drift, kick = ito_parts(u, increments[:, i], noise, params)
            acc = semigroup_apply(dt, acc + g * (dt * drift + kick))
        else:
            acc = semigroup_apply(dt, acc)
        out.append(acc)
    return out


def picard_solve(u0: SpectralField, T: float, params: DriftParams, cfg: SchemeConfig,
                 noise: NoiseModel, increments=None, m: float = 100.0, tol: float = 1e-12,
                 max_iter: int = 50, path_index: int = 0) -> PicardResult:
    """Iterate the discretised truncated mild map starting from the constant path u0.

    Residuals are r_j = max_t ||u^{(j+1)}(t) - u^{(j)}(t)||_V.  Exceeding ``max_iter``
    is reported through ``converged=False`` rather than raised.
    """
    if m < 1:
        raise ValueError("truncation level m must be >= 1")
    steps = step_count(T, cfg.dt)
    if increments is None:
        increments = generate_path(cfg.seed, path_index, noise.channels, steps, cfg.dt).increments
    increments = _as_increments(increments, noise.channels, steps)
    path = [u0] * (steps + 1)
    residuals = []
    for j in range(1, max_iter + 1):
        new = _mild_map(path, u0, params, cfg, noise, increments, m)
        r = max(norm_V(a - b) for a, b in zip(new, path))
        residuals.append(r)
        path = new
        if r <= tol:
            return PicardResult(j, residuals, True, path)
    return PicardResult(max_iter, residuals, False, path)
