"""Energy functional, its derivative identities, the scalar dynamics of
eta = |u|^2 - 1, stopping-time monitors and the non-explosion report."""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import NamedTuple

import numpy as np

from .dynamics import DriftParams, nonlinear_F
from .manifold import IdentityResidual, diffusion_B, ito_correction_m, project_tangent
from .spectral import (
    SpectralField,
    apply_A,
    from_physical,
    inner_H,
    inner_V,
    integrate,
    norm_H,
    norm_L2n,
    norm_V,
    seminorm_h10,
    seminorm_h20,
    to_physical,
)


def energy_Y(u: SpectralField, n: int) -> float:
    """Y(u) = 1/2 ||u||_V^2 + 1/(2n) ||u||_{L2n}^{2n}."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 0.5 * norm_V(u) ** 2 + norm_L2n(u, n) ** (2 * n) / (2 * n)


def _grid(u: SpectralField, n: int):
    return None if n == 1 else to_physical(u)


def energy_pairing(u: SpectralField, p: SpectralField, n: int) -> float:
    """<Y'(u), p> = <u,p>_V + <u^{2n-1}, p>."""
    if n == 1:
        return inner_V(u, p) + inner_H(u, p)
    g = to_physical(u)
    return inner_V(u, p) + integrate(g ** (2 * n - 1) * to_physical(p), u.space)


def energy_pairing_operator(u: SpectralField, p: SpectralField, n: int) -> float:
    """Same pairing assembled as <Delta^2 u - 2 Delta u + u + u^{2n-1}, p> in H."""
    w = apply_A(u) + u
    if n == 1:
        w = w + u
    else:
        w = w + from_physical(to_physical(u) ** (2 * n - 1), u.space)
    return inner_H(w, p)


def energy_hessian(u: SpectralField, p1: SpectralField, p2: SpectralField, n: int) -> float:
    """Y''(u)(p1, p2) = <p1,p2>_V + (2n-1) <u^{2n-2}, p1 p2>.

    The weight (2n-1) is the second derivative of s -> s^{2n}/(2n); it is what the
    Ito formula needs and what finite differences of Y reproduce.
    """
    val = inner_V(p1, p2)
    if n == 1:
        return val + inner_H(p1, p2)
    g = to_physical(u)
    return val + (2 * n - 1) * integrate(g ** (2 * n - 2) * to_physical(p1) * to_physical(p2),
                                         u.space)


def _residual(name, lhs, rhs, terms):
    scale = max(abs(lhs), abs(rhs), sum(abs(t) for t in terms), np.finfo(float).tiny)
    r = abs(lhs - rhs)
    return IdentityResidual(name, lhs, rhs, r, r / scale)


def energy_identity_residuals(f: SpectralField, u: SpectralField,
                              params: DriftParams) -> list[IdentityResidual]:
    """Residuals of the four energy identities (B, drift, Hessian, Ito correction).

    The drift identity <Y'(u), -A u + F(u)> = -|pi_u(-A u - u - u^{2n-1})|^2 relies on
    pi_u(-A u - u - u^{2n-1}) = -A u + F(u), which needs |u|_H = 1; its residual is
    evaluated at u / |u|_H.  The other three hold at every u.
    """
    n = params.n
    c = inner_H(f, u)
    ff = inner_H(f, f)
    uV2 = norm_V(u) ** 2
    l2n = norm_L2n(u, n) ** (2 * n)
    g = _grid(u, n)
    if g is None:
        pow_f = inner_H(u, f)
    else:
        pow_f = integrate(g ** (2 * n - 1) * to_physical(f), u.space)
    uf_V = inner_V(u, f)
    out = []

    B = diffusion_B(f, u)
    lhs = energy_pairing(u, B, n)
    # ||u||_V^2 written out with weights (1, 1, 2) on |u|^2, |Delta u|^2, |grad u|^2.
    weights = norm_H(u) ** 2 + seminorm_h20(u) ** 2 + 2.0 * seminorm_h10(u) ** 2 + l2n
    out.append(_residual("enrgy_lmma_3", lhs, uf_V - c * weights + pow_f,
                         [uf_V, c * weights, pow_f]))

    r = norm_H(u)
    w = u / r if r > 0 else u
    h = -apply_A(w) - w - (w if n == 1 else from_physical(to_physical(w) ** (2 * n - 1), w.space))
    tang = project_tangent(w, h)
    lhs = energy_pairing(w, -apply_A(w) + nonlinear_F(w, params), n)
    rhs = -norm_H(tang) ** 2
    out.append(_residual("enrgy_lmma_4", lhs, rhs, [rhs, norm_H(h) ** 2]))

    lhs = energy_hessian(u, B, B, n)
    if g is None:
        powB = inner_H(B, B)
    else:
        powB = integrate(g ** (2 * n - 2) * to_physical(B) ** 2, u.space)
    rhs = norm_V(B) ** 2 + (2 * n - 1) * powB
    out.append(_residual("enrgy_lmma_5", lhs, rhs, [norm_V(B) ** 2, (2 * n - 1) * powB]))

    lhs = energy_pairing(u, ito_correction_m(f, u), n)
    S = uV2 + l2n
    rhs = S * (2.0 * c * c - ff) - c * (uf_V + pow_f)
    out.append(_residual("enrgy_lmma_6", lhs, rhs, [S * 2 * c * c, S * ff, c * uf_V, c * pow_f]))
    return out


def eta_value(u: SpectralField) -> float:
    return inner_H(u, u) - 1.0


class EtaCoefficients(NamedTuple):
    """dEta = sum_k a1_k eta dW_k + a2 eta dt along the exact Ito dynamics."""

    a1: np.ndarray
    a2: float


def eta_coefficients(u: SpectralField, noise, n: int) -> EtaCoefficients:
    """Coefficients of the linear scalar equation satisfied by eta.

    a1_k = -2 <u, f_k> (from <u, B_k(u)> = <u,f_k>(1 - |u|^2)) and
    a2 = 2|Delta u|^2 + 4|grad u|^2 + 2||u||_{L2n}^{2n} + sum_k (3<f_k,u>^2 - |f_k|^2).
    """
    cs = np.array([inner_H(f, u) for f in noise.fields])
    ffs = np.array([inner_H(f, f) for f in noise.fields])
    a2 = (2.0 * seminorm_h20(u) ** 2 + 4.0 * seminorm_h10(u) ** 2
          + 2.0 * norm_L2n(u, n) ** (2 * n) + float(np.sum(3.0 * cs**2 - ffs)))
    return EtaCoefficients(-2.0 * cs, a2)


class StoppingMonitor:
    """First times at which ||u||_V reaches each level."""

    def __init__(self, levels=()):
        self.levels = tuple(sorted(float(l) for l in levels))
        self.hits: dict[float, float | None] = {l: None for l in self.levels}
        self.last_t: float | None = None

    def pending(self):
        return [l for l in self.levels if self.hits[l] is None]


def stopping_update(monitor: StoppingMonitor, t: float, u: SpectralField | float, levels=None):
    """Record first hits of ||u||_V >= level; ``u`` may be a field or its V-norm."""
    if monitor.last_t is not None and not t > monitor.last_t:
        raise ValueError(f"times must increase strictly ({t} after {monitor.last_t})")
    monitor.last_t = t
    if levels is not None:
        for l in levels:
            monitor.hits.setdefault(float(l), None)
        monitor.levels = tuple(sorted(monitor.hits))
    value = u if isinstance(u, (int, float)) else norm_V(u)
    newly = []
    for l in monitor.pending():
        if value >= l:
            monitor.hits[l] = t
            newly.append(l)
    return monitor, newly


@dataclass
class TrajectoryDiagnostics:
    times: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    energy_Y: list = field(default_factory=list)
    norm_V: list = field(default_factory=list)
    norm_L2n: list = field(default_factory=list)
    x_norm: list = field(default_factory=list)
    tau_hits: dict = field(default_factory=dict)
    tau_energy: dict = field(default_factory=dict)
    sup_norm_V: float = 0.0
    terminal_status: str = "completed"
    failed_step: int | None = None
    dt: float = 0.0
    stride: int = 1
    n: int = 1
    final_state: SpectralField | None = None
    states: list | None = None
    gates: list | None = None
    increments: np.ndarray | None = None
    ito_terms: dict | None = None

    def append(self, t, u, n, x):
        self.times.append(t)
        self.eta.append(eta_value(u))
        self.energy_Y.append(energy_Y(u, n))
        self.norm_V.append(norm_V(u))
        self.norm_L2n.append(norm_L2n(u, n))
        self.x_norm.append(x)

    def as_arrays(self) -> dict:
        keys = ("times", "eta", "energy_Y", "norm_V", "norm_L2n", "x_norm")
        return {k: np.asarray(getattr(self, k), dtype=float) for k in keys}

    def stopped_energy(self, level: float) -> np.ndarray:
        """Y(u(t ^ tau_level)) at every recorded time."""
        Y = np.asarray(self.energy_Y, dtype=float)
        t_hit = self.tau_hits.get(level)
        if t_hit is None:
            return Y
        out = Y.copy()
        out[np.asarray(self.times) >= t_hit] = self.tau_energy[level]
        return out


def ito_energy_decomposition(diag: TrajectoryDiagnostics, noise, params: DriftParams):
    """Pathwise Ito expansion of Y along a stored trajectory.

    Returns (residual, terms) where terms holds the accumulated I1 (stochastic
    sum), I2 (Ito correction), I3 (Hessian) and I4 (drift), all left-endpoint,
    and residual = |Y(u_T) - Y(u_0) - (I1 + I2 + I3 + I4)|.  With a truncation
    gate g the integrands are g*<Y',B_k> dW, g/2 <Y',m_k>, g^2/2 Y''(B_k,B_k)
    and <Y', -A u + g F(u)>.
    """
    if diag.stride != 1 or diag.states is None or diag.increments is None:
        raise ValueError("the Ito decomposition needs a stride-1 record with stored states")
    n = params.n
    dt = diag.dt
    I = {"I1": 0.0, "I2": 0.0, "I3": 0.0, "I4": 0.0}
    gates = diag.gates if diag.gates is not None else [1.0] * (len(diag.states) - 1)
    for i, u in enumerate(diag.states[:-1]):
        g = gates[i]
        dW = diag.increments[:, i]
        drift = -apply_A(u) + g * nonlinear_F(u, params)
        I["I4"] += energy_pairing(u, drift, n) * dt
        for k, f in enumerate(noise.fields):
            B = diffusion_B(f, u)
            I["I1"] += g * energy_pairing(u, B, n) * dW[k]
            I["I2"] += 0.5 * g * energy_pairing(u, ito_correction_m(f, u), n) * dt
            I["I3"] += 0.5 * g * g * energy_hessian(u, B, B, n) * dt
    change = energy_Y(diag.states[-1], n) - energy_Y(diag.states[0], n)
    diag.ito_terms = I
    return abs(change - sum(I.values())), I


@dataclass
class KhashminskiiReport:
    condition_i: bool
    min_energy: float
    q_P_bound: float
    P: float
    condition_ii: bool
    initial_energy: float
    condition_iii: bool
    levels: tuple
    stopped_mean: np.ndarray          # (len(levels),) at the final time
    stopped_se: np.ndarray
    sup_norm_V: float
    saturated: bool
    condition_iv: bool
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.condition_i and self.condition_ii and self.condition_iii and self.condition_iv

    def lines(self) -> list[str]:
        out = [
            f"i)   Y >= 0 on V: {'PASS' if self.condition_i else 'FAIL'} (min observed Y = {self.min_energy:.17g})",
            f"ii)  q_P >= P^2/2 = {self.q_P_bound:.17g} at P = {self.P:.17g}: {'PASS' if self.condition_ii else 'FAIL'}",
            f"iii) Y(u0) = {self.initial_energy:.17g}: {'PASS' if self.condition_iii else 'FAIL'}",
        ]
        for l, m, s in zip(self.levels, self.stopped_mean, self.stopped_se):
            out.append(f"iv)  ell = {l:.17g}: E[Y(T ^ tau_ell)] = {m:.17g} +- {s:.17g}")
        out.append(f"iv)  sup ||u||_V = {self.sup_norm_V:.17g}; saturated beyond sup: "
                   f"{'PASS' if self.condition_iv else 'FAIL'}")
        out.extend(f"note: {n}" for n in self.notes)
        return out


def q_P_lower_bound(P: float) -> float:
    """inf over ||u||_V >= P of Y(u) is at least P^2 / 2."""
    return 0.5 * P * P


def khashminskii_report(estimates, levels, n: int, P: float = 10.0) -> KhashminskiiReport:
    """Check the four non-explosion conditions against ensemble estimates.

    ``estimates`` is an :class:`~sphere_sh.montecarlo.EnsembleEstimates`.  Condition
    iv) is declared satisfied when E[Y(u(t ^ tau_ell))] changes by at most two
    standard errors between consecutive levels that exceed the largest observed
    ||u||_V (at every recorded time), and at least one level does so.
    """
    if estimates is None or estimates.completed == 0:
        raise ValueError("khashminskii_report needs a non-empty ensemble")
    levels = tuple(sorted(float(l) for l in levels))
    notes = []
    min_energy = float(estimates.min_energy)
    cond_i = min_energy >= 0.0
    qP = q_P_lower_bound(P)
    cond_ii = qP > 0 and math.isfinite(qP)
    y0 = float(estimates.initial_energy)
    cond_iii = math.isfinite(y0)
    means = np.array([estimates.stopped_mean[l] for l in levels])   # (L, T)
    ses = np.array([estimates.stopped_se[l] for l in levels])
    sup = float(estimates.sup_norm_V)
    above = [i for i, l in enumerate(levels) if l > sup]
    saturated = bool(above)
    if not above:
        notes.append("no level exceeds the observed sup of ||u||_V; saturation not testable")
    for i, j in zip(above, above[1:]):
        gap = np.abs(means[j] - means[i])
        tol = 2.0 * np.hypot(ses[i], ses[j])
        if np.any(gap > tol + 1e-12 * np.abs(means[i])):
            saturated = False
    if estimates.conditional:
        notes.append(f"{estimates.failed} paths overflowed; estimates are conditional on completion")
    return KhashminskiiReport(
        condition_i=cond_i, min_energy=min_energy, q_P_bound=qP, P=P, condition_ii=cond_ii,
        initial_energy=y0, condition_iii=cond_iii, levels=levels,
        stopped_mean=means[:, -1] if means.size else means,
        stopped_se=ses[:, -1] if ses.size else ses,
        sup_norm_V=sup, saturated=saturated, condition_iv=saturated, notes=notes)
