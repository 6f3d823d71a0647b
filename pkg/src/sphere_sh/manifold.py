"""Geometry of the unit sphere M = {|u|_H = 1}: tangent projection, the
projection-type diffusion fields and their Ito correction, and the squared-norm
functional gamma used to show that M is invariant."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .spectral import (
    SpectralField,
    apply_A,
    inner_H,
    norm_H,
    norm_L2n,
    norm_V,
    seminorm_h10,
    seminorm_h20,
)


class TangentDecomposition(NamedTuple):
    tangential: SpectralField
    radial_coefficient: float


class IdentityResidual(NamedTuple):
    name: str
    lhs: float
    rhs: float
    residual: float
    relative: float


def decompose(u: SpectralField, h: SpectralField) -> TangentDecomposition:
    c = inner_H(h, u)
    return TangentDecomposition(h - c * u, c)


def project_tangent(u: SpectralField, h: SpectralField) -> SpectralField:
    """pi_u(h) = h - <h,u> u."""
    return h - inner_H(h, u) * u


def diffusion_B(f: SpectralField, u: SpectralField) -> SpectralField:
    """B(u) = pi_u(f)."""
    return project_tangent(u, f)


def frechet_dB(f: SpectralField, u: SpectralField, s: SpectralField) -> SpectralField:
    """Derivative of u -> B(u) at u in direction s."""
    return -inner_H(f, u) * s - inner_H(f, s) * u


def ito_correction_m(f: SpectralField, u: SpectralField) -> SpectralField:
    """m(u) = d_u B(B(u)) = -<f,B(u)> u - <f,u> B(u)."""
    return frechet_dB(f, u, diffusion_B(f, u))


def gamma(u: SpectralField) -> float:
    return 0.5 * inner_H(u, u)


def dgamma_pair(u: SpectralField, p: SpectralField) -> float:
    return inner_H(u, p)


def d2gamma_pair(p1: SpectralField, p2: SpectralField) -> float:
    return inner_H(p1, p2)


def _residual(name, lhs, rhs, terms):
    scale = max(abs(lhs), abs(rhs), sum(abs(t) for t in terms), np.finfo(float).tiny)
    r = abs(lhs - rhs)
    return IdentityResidual(name, lhs, rhs, r, r / scale)


def gamma_identity_residuals(f: SpectralField, u: SpectralField, n: int) -> list[IdentityResidual]:
    """Residuals of the four gamma identities at an arbitrary state ``u``.

    The left-hand sides are assembled from the field operations; the right-hand
    sides are the closed forms.  ``relative`` divides by the summed magnitude of
    the closed-form terms so that states on M (where several sides vanish) are
    still judged against a meaningful scale.

    The first identity is <gamma'(u), B(u)> = <u,f> (1 - |u|^2); the opposite sign
    is a misprint that only matters off the sphere.
    """
    from .dynamics import DriftParams, nonlinear_F  # circular at import time

    uu = inner_H(u, u)
    c = inner_H(f, u)
    ff = inner_H(f, f)
    B = diffusion_B(f, u)

    out = []
    lhs = dgamma_pair(u, B)
    out.append(_residual("lemm_1", lhs, c * (1.0 - uu), [c, c * uu]))

    # Drift pairing, both sides carry |u|^2 - 1.
    h20 = seminorm_h20(u) ** 2
    h10 = seminorm_h10(u) ** 2
    l2n = norm_L2n(u, n) ** (2 * n)
    drift = -apply_A(u) + nonlinear_F(u, DriftParams(a=1.0, n=n))
    lhs = dgamma_pair(u, drift)
    s = h20 + 2.0 * h10 + l2n
    out.append(_residual("lemm_prf", lhs, s * (uu - 1.0), [s * uu, s]))

    lhs = d2gamma_pair(B, B)
    out.append(_residual("lemm_2", lhs, ff + c * c * (uu - 2.0), [ff, c * c * uu, 2 * c * c]))

    lhs = dgamma_pair(u, ito_correction_m(f, u))
    out.append(_residual("lemm_3", lhs, -uu * ff + c * c * (2.0 * uu - 1.0),
                         [uu * ff, 2 * c * c * uu, c * c]))
    return out


def lipschitz_modulus_G(x: float, y: float, n: int, C: float, C_n: float) -> float:
    """Local Lipschitz modulus of F between V-balls of radii x and y."""
    if x < 0 or y < 0:
        raise ValueError("G is defined for nonnegative radii")
    poly = 2.0 * C * (x * x + y * y + x * y)
    tail = (
        0.5 * (2 * n - 1) * (x ** (2 * n - 1) + y ** (2 * n - 1)) * (x + y)
        + (x ** (2 * n) + y ** (2 * n))
        + (1.0 + x * x + y * y) ** (1.0 / 3.0)
    )
    return poly + C_n * tail


def calibrate_G(pairs, n: int, safety: float = 1.1) -> float:
    """Common value for C = C_n making the F-Lipschitz bound hold on ``pairs``.

    G is linear in (C, C_n), so with both set to c the bound holds on the sample
    iff c >= max ratio; the returned value is that maximum times ``safety``.
    """
    from .dynamics import DriftParams, nonlinear_F

    params = DriftParams(a=1.0, n=n)
    worst = 0.0
    for u, v in pairs:
        diff = norm_H(nonlinear_F(u, params) - nonlinear_F(v, params))
        g1 = lipschitz_modulus_G(norm_V(u), norm_V(v), n, 1.0, 1.0)
        dv = norm_V(u - v)
        if dv > 0:
            worst = max(worst, diff / (g1 * dv))
    return safety * worst


def B_lipschitz_check(f: SpectralField, u: SpectralField, v: SpectralField,
                      norm: str = "H") -> bool:
    """|B(u) - B(v)| <= |f| (|u| + |v|) |u - v| in the H or V norm."""
    nrm = norm_H if norm == "H" else norm_V
    lhs = nrm(diffusion_B(f, u) - diffusion_B(f, v))
    return lhs <= nrm(f) * (nrm(u) + nrm(v)) * nrm(u - v) * (1 + 1e-12) + 1e-300


def kappa_lipschitz_check(f: SpectralField, u: SpectralField, v: SpectralField,
                          norm: str = "H") -> bool:
    """|m(u) - m(v)| <= 2 |f|^2 (|u|^2 + |v|^2 + |u||v|) |u - v|.

    The inequality is not global: near u = v = 0 the map m behaves like
    -|f|^2 u - <f,u> f and the cubic right-hand side is too small.  It holds for
    states whose norms are of order one, which is where the dynamics lives.
    """
    nrm = norm_H if norm == "H" else norm_V
    a, b = nrm(u), nrm(v)
    lhs = nrm(ito_correction_m(f, u) - ito_correction_m(f, v))
    rhs = 2.0 * nrm(f) ** 2 * (a * a + b * b + a * b) * nrm(u - v)
    return lhs <= rhs * (1 + 1e-12) + 1e-300


__all__ = [
    "TangentDecomposition",
    "IdentityResidual",
    "decompose",
    "project_tangent",
    "diffusion_B",
    "frechet_dB",
    "ito_correction_m",
    "gamma",
    "dgamma_pair",
    "d2gamma_pair",
    "gamma_identity_residuals",
    "lipschitz_modulus_G",
    "calibrate_G",
    "B_lipschitz_check",
    "kappa_lipschitz_check",
]
