"""Drift, truncation and one-step integrators for the constrained equation

    du = [-A u + F(u) + 1/2 sum_k m_k(u)] dt + sum_k B_k(u) dW_k      (Ito)
       = (-A u + F(u)) dt + sum_k B_k(u) o dW_k                        (Stratonovich)

with A = Delta^2 - 2 Delta and B_k(u) = f_k - <f_k,u> u.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .manifold import diffusion_B, ito_correction_m, project_tangent
from .spectral import (
    SpectralField,
    SpectralSpace,
    apply_A,
    from_physical,
    integrate,
    inner_H,
    norm_E,
    norm_H,
    norm_V,
    seminorm_h10,
    seminorm_h20,
    semigroup_apply,
    to_physical,
)

MAX_N = 8
SCHEMES = ("em_ito", "em_ito_exponential", "heun_strat")
EXPLICIT_SCHEMES = ("em_ito", "heun_strat")


class BlowUpError(ArithmeticError):
    """The state stopped being finite. ``step`` is the index of the failing step."""

    def __init__(self, step: int, diagnostics=None):
        super().__init__(f"non-finite state after step {step}")
        self.step = step
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class DriftParams:
    a: float = 1.0
    n: int = 1

    def __post_init__(self):
        if int(self.n) != self.n or not 1 <= self.n <= MAX_N:
            raise ValueError(f"n must be an integer in [1, {MAX_N}], got {self.n}")
        if not math.isfinite(self.a):
            raise ValueError("a must be finite")


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str = "em_ito_exponential"
    dt: float = 1e-4
    renormalize: bool = False
    truncation_level: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.truncation_level is not None and self.truncation_level < 1:
            raise ValueError("truncation_level must be >= 1")

    def check_stability(self, space: SpectralSpace) -> None:
        """Explicit schemes need dt * mu_max <= 1."""
        if self.scheme in EXPLICIT_SCHEMES and self.dt * space.mu_max > 1.0:
            raise ValueError(
                f"dt={self.dt:.6g} too large for explicit scheme {self.scheme}: "
                f"dt*mu_max = {self.dt * space.mu_max:.6g} > 1 (mu_max={space.mu_max:.6g})")


@dataclass
class NoiseModel:
    """Fixed noise directions f_1..f_N; increments are supplied per step."""

    fields: tuple = ()

    def __post_init__(self):
        self.fields = tuple(self.fields)

    @property
    def channels(self) -> int:
        return len(self.fields)


@dataclass
class PathNormTracker:
    """Running pieces of |u|_{X_t}^2 = sup_s ||u(s)||_V^2 + int_0^t |u(p)|_E^2 dp."""

    sup_V_sq: float = 0.0
    int_E_sq: float = 0.0

    @property
    def x_norm_sq(self) -> float:
        return self.sup_V_sq + self.int_E_sq

    @property
    def x_norm(self) -> float:
        return math.sqrt(self.x_norm_sq)

    def observe(self, u: SpectralField) -> float:
        """Fold u into the running sup and return the current X-norm."""
        self.sup_V_sq = max(self.sup_V_sq, norm_V(u) ** 2)
        return self.x_norm

    def accumulate(self, u: SpectralField, dt: float) -> None:
        """Left-endpoint contribution of [t, t + dt] to the time integral."""
        self.int_E_sq += norm_E(u) ** 2 * dt


def xnorm_update(tracker: PathNormTracker, u: SpectralField, dt: float) -> float:
    if not dt > 0:
        raise ValueError("dt must be positive")
    tracker.observe(u)
    tracker.accumulate(u, dt)
    return tracker.x_norm


def theta(x: float) -> float:
    """Piecewise-linear cut-off: 1 on [0,1], 2 - x on (1,2), 0 beyond."""
    if x < 0:
        raise ValueError(f"theta is defined on [0, inf), got {x}")
    if x <= 1.0:
        return 1.0
    if x >= 2.0:
        return 0.0
    return 2.0 - x


def theta_m(x: float, m: float) -> float:
    if m < 1:
        raise ValueError("truncation level m must be >= 1")
    return theta(x / m)


def _power_and_norm(u: SpectralField, n: int):
    """u**(2n-1) and ||u||_{L2n}^{2n} from one trip to the padded grid."""
    if n == 1:
        return u, inner_H(u, u)
    grid = to_physical(u)
    return from_physical(grid ** (2 * n - 1), u.space), integrate(grid ** (2 * n), u.space)


def nonlinear_F(u: SpectralField, params: DriftParams) -> SpectralField:
    """F(u) = (|Delta u|^2 + 2 |grad u|^2 + ||u||_{L2n}^{2n}) u - u^{2n-1}."""
    power, l2n = _power_and_norm(u, params.n)
    factor = seminorm_h20(u) ** 2 + 2.0 * seminorm_h10(u) ** 2 + l2n
    return factor * u - power


def projected_drift(u: SpectralField, params: DriftParams) -> SpectralField:
    """pi_u(-A u - a u - u^{2n-1}); equals -A u + F(u) whenever |u|_H = 1."""
    power, _ = _power_and_norm(u, params.n)
    h = -apply_A(u) - params.a * u - power
    return project_tangent(u, h)


def stratonovich_drift(u: SpectralField, params: DriftParams) -> SpectralField:
    return -apply_A(u) + nonlinear_F(u, params)


def _gate(cfg: SchemeConfig, x_norm: float) -> float:
    if cfg.truncation_level is None:
        return 1.0
    return theta_m(x_norm, cfg.truncation_level)


def _check_increments(increments, noise: NoiseModel):
    dW = np.asarray(increments, dtype=float).reshape(-1)
    if dW.size != noise.channels:
        raise ValueError(f"expected {noise.channels} increments, got {dW.size}")
    return dW


def _finish(u_new: SpectralField, cfg: SchemeConfig, step: int) -> SpectralField:
    if not u_new.is_finite():
        raise BlowUpError(step)
    if cfg.renormalize:
        r = norm_H(u_new)
        if r == 0.0 or not math.isfinite(r):
            raise BlowUpError(step)
        u_new = u_new / r
    return u_new


def ito_parts(u: SpectralField, dW, noise: NoiseModel, params: DriftParams):
    """(F(u) + 1/2 sum m_k(u), sum B_k(u) dW_k) at the left endpoint."""
    drift = nonlinear_F(u, params)
    kick = u.space.zeros()
    for f, w in zip(noise.fields, dW):
        drift = drift + 0.5 * ito_correction_m(f, u)
        kick = kick + w * diffusion_B(f, u)
    return drift, kick


def step_em_ito(u: SpectralField, increments, noise: NoiseModel, params: DriftParams,
                cfg: SchemeConfig, x_norm: float = 0.0, step: int = 0) -> SpectralField:
    """One Euler-Maruyama step of the Ito form.

    With a truncation level m every term except the linear one is multiplied by
    theta_m(x_norm).  ``em_ito_exponential`` treats -A exactly through S(dt).
    """
    dW = _check_increments(increments, noise)
    dt = cfg.dt
    g = _gate(cfg, x_norm)
    with np.errstate(over="ignore", invalid="ignore"):
        if g > 0.0:
            drift, kick = ito_parts(u, dW, noise, params)
            update = g * (dt * drift + kick)
        else:
            update = u.space.zeros()
        if cfg.scheme == "em_ito_exponential":
            u_new = semigroup_apply(dt, u + update)
        else:
            u_new = u - dt * apply_A(u) + update
    return _finish(u_new, cfg, step)


def step_heun_strat(u: SpectralField, increments, noise: NoiseModel, params: DriftParams,
                    cfg: SchemeConfig, x_norm: float = 0.0, step: int = 0) -> SpectralField:
    """Stratonovich Heun step for du = D(u) dt + sum B_k(u) o dW_k, D = -A u + F(u).

    The gate multiplies F and the noise in both stages; the linear part is never gated.
    """
    dW = _check_increments(increments, noise)
    dt = cfg.dt
    g = _gate(cfg, x_norm)

    def slope(v):
        d = -apply_A(v)
        if g > 0.0:
            d = d + g * nonlinear_F(v, params)
        return d

    def kick(v):
        out = v.space.zeros()
        if g > 0.0:
            for f, w in zip(noise.fields, dW):
                out = out + (g * w) * diffusion_B(f, v)
        return out

    with np.errstate(over="ignore", invalid="ignore"):
        d0, k0 = slope(u), kick(u)
        pred = u + dt * d0 + k0
        d1, k1 = slope(pred), kick(pred)
        u_new = u + (0.5 * dt) * (d0 + d1) + 0.5 * (k0 + k1)
    return _finish(u_new, cfg, step)


def advance(u, increments, noise, params, cfg, x_norm=0.0, step=0):
    """Dispatch to the step function selected by ``cfg.scheme``."""
    if cfg.scheme == "heun_strat":
        return step_heun_strat(u, increments, noise, params, cfg, x_norm, step)
    return step_em_ito(u, increments, noise, params, cfg, x_norm, step)
