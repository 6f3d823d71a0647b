"""Run configuration read from ``key = value`` text files.

Blank lines and ``#`` comments are ignored.  Every key and its default:

    J = 16, K = 16            sine modes per axis
    Lx = pi, Ly = pi          domain lengths (``pi``, ``2*pi``, ``pi/2`` or a number)
    pad_factor = n            quadrature grid is pad_factor * (J + 1) per axis
    n = 1, a = 1              nonlinearity degree (1..8) and drift parameter a
    scheme = em_ito_exponential   em_ito | em_ito_exponential | heun_strat
    dt = 1e-4, T = 0.01
    renormalize = false
    truncation_level = none   truncation level m (>= 1) or none
    seed = 0                  master seed for the Brownian increments
    stride = 1                record every stride-th step
    paths = 8                 ensemble size
    dt_levels = 3             number of dyadic levels dt, dt/2, ... for convergence
    ell_levels =              comma-separated stopping levels for ||u||_V
    picard_T = 1e-3, picard_m = 100, picard_tol = 1e-12, picard_max_iter = 50
    khashminskii_P = 10
    verify_samples = 10, verify_tol = 1e-9
    out = out                 output directory

Noise fields are numbered from 1 without gaps and given either inline or as a
checkpoint file (relative paths resolve against the config file)::

    f1.modes = (1,1):0.5, (2,1):0.25
    f2.file = f2.txt

The initial state uses the same syntax (``u0.modes`` or ``u0.file``) and
defaults to the (1,1) mode normalised in L2.  No noise keys means zero noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
import os
import re

import numpy as np

from .dynamics import MAX_N, SCHEMES, DriftParams, NoiseModel, SchemeConfig
from .montecarlo import EnsembleConfig
from .spectral import SpectralField, SpectralSpace, norm_H, read_checkpoint
from .trajectory import step_count


class ConfigError(ValueError):
    pass


_SCALARS = {
    "J": 16, "K": 16, "Lx": math.pi, "Ly": math.pi, "pad_factor": None,
    "n": 1, "a": 1.0, "scheme": "em_ito_exponential", "dt": 1e-4, "T": 0.01,
    "renormalize": False, "truncation_level": None, "seed": 0, "stride": 1,
    "paths": 8, "dt_levels": 3, "ell_levels": (),
    "picard_T": 1e-3, "picard_m": 100.0, "picard_tol": 1e-12, "picard_max_iter": 50,
    "khashminskii_P": 10.0, "verify_samples": 10, "verify_tol": 1e-9, "out": "out",
}

_FIELD_KEY = re.compile(r"^(f[1-9][0-9]*|u0)\.(modes|file)$")
_MODE = re.compile(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*:\s*(\S+)")


@dataclass
class RunConfig:
    J: int = 16
    K: int = 16
    Lx: float = math.pi
    Ly: float = math.pi
    pad_factor: int | None = None
    n: int = 1
    a: float = 1.0
    scheme: str = "em_ito_exponential"
    dt: float = 1e-4
    T: float = 0.01
    renormalize: bool = False
    truncation_level: float | None = None
    seed: int = 0
    stride: int = 1
    paths: int = 8
    dt_levels: int = 3
    ell_levels: tuple = ()
    picard_T: float = 1e-3
    picard_m: float = 100.0
    picard_tol: float = 1e-12
    picard_max_iter: int = 50
    khashminskii_P: float = 10.0
    verify_samples: int = 10
    verify_tol: float = 1e-9
    out: str = "out"
    noise_specs: list = field(default_factory=list)   # ("modes", [(j,k,v),...]) or ("file", path)
    u0_spec: tuple | None = None
    source: str | None = None

    def __post_init__(self):
        self.validate()

    # -- builders ---------------------------------------------------------
    def space(self) -> SpectralSpace:
        return SpectralSpace(self.J, self.K, self.Lx, self.Ly, self.pad)

    @property
    def pad(self) -> int:
        return self.n if self.pad_factor is None else self.pad_factor

    def params(self) -> DriftParams:
        return DriftParams(a=self.a, n=self.n)

    def scheme_config(self) -> SchemeConfig:
        return SchemeConfig(self.scheme, self.dt, self.renormalize, self.truncation_level, self.seed)

    def noise(self) -> NoiseModel:
        return NoiseModel([self._field(s, f"f{i + 1}") for i, s in enumerate(self.noise_specs)])

    def initial_state(self) -> SpectralField:
        if self.u0_spec is None:
            u = self.space().mode(1, 1, 1.0)
        else:
            u = self._field(self.u0_spec, "u0")
        r = norm_H(u)
        if r == 0.0:
            raise ConfigError("u0: initial state is zero")
        return u / r

    def ensemble_config(self, levels=None) -> EnsembleConfig:
        return EnsembleConfig(paths=self.paths, T=self.T, dt_levels=(self.dt,),
                              levels=tuple(self.ell_levels if levels is None else levels),
                              stride=self.stride, master_seed=self.seed)

    def convergence_config(self) -> EnsembleConfig:
        if self.dt_levels < 3:
            raise ConfigError(f"dt_levels: convergence needs >= 3 dyadic levels, got {self.dt_levels}")
        cfg = EnsembleConfig.dyadic(self.dt, self.dt_levels, paths=self.paths, T=self.T,
                                    master_seed=self.seed)
        return cfg

    def _field(self, spec, name) -> SpectralField:
        space = self.space()
        kind, payload = spec
        if kind == "file":
            u = read_checkpoint(payload, self.pad)
            if u.space != space:
                raise ConfigError(f"{name}.file: {payload} has space {u.space.shape} "
                                  f"{u.space.length_x}x{u.space.length_y}, config expects "
                                  f"{space.shape} {space.length_x}x{space.length_y}")
            return u
        c = np.zeros(space.shape)
        for j, k, v in payload:
            c[j - 1, k - 1] += v
        return SpectralField(space, c)

    # -- validation -------------------------------------------------------
    def validate(self) -> None:
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(f"{key}: {msg}")

        need(self.J >= 1, "J", "must be >= 1")
        need(self.K >= 1, "K", "must be >= 1")
        need(self.Lx > 0 and math.isfinite(self.Lx), "Lx", "must be positive")
        need(self.Ly > 0 and math.isfinite(self.Ly), "Ly", "must be positive")
        need(1 <= self.n <= MAX_N, "n", f"must be in [1, {MAX_N}], got {self.n}")
        need(self.pad >= self.n, "pad_factor", f"must be >= n = {self.n}, got {self.pad}")
        need(math.isfinite(self.a), "a", "must be finite")
        need(self.scheme in SCHEMES, "scheme", f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        need(self.dt > 0, "dt", "must be positive")
        need(self.T > 0, "T", "must be positive")
        need(self.truncation_level is None or self.truncation_level >= 1,
             "truncation_level", "must be >= 1 or none")
        need(0 <= self.seed < 2**64, "seed", "must be an unsigned 64-bit integer")
        need(self.stride >= 1, "stride", "must be >= 1")
        need(self.paths >= 1, "paths", "must be >= 1")
        need(self.dt_levels >= 1, "dt_levels", "must be >= 1")
        need(all(l > 0 for l in self.ell_levels), "ell_levels", "levels must be positive")
        need(self.picard_T > 0, "picard_T", "must be positive")
        need(self.picard_m >= 1, "picard_m", "must be >= 1")
        need(self.picard_tol > 0, "picard_tol", "must be positive")
        need(self.picard_max_iter >= 1, "picard_max_iter", "must be >= 1")
        need(self.khashminskii_P > 0, "khashminskii_P", "must be positive")
        need(self.verify_samples >= 1, "verify_samples", "must be >= 1")
        need(self.verify_tol > 0, "verify_tol", "must be positive")
        try:
            space = self.space()
        except ValueError as err:
            raise ConfigError(f"pad_factor: {err}") from None
        try:
            self.scheme_config().check_stability(space)
        except ValueError as err:
            raise ConfigError(f"dt: {err}") from None
        for key, T in (("T", self.T), ("picard_T", self.picard_T)):
            try:
                step_count(T, self.dt)
            except ValueError as err:
                raise ConfigError(f"{key}: {err}") from None
        specs = [(f"f{i + 1}", s) for i, s in enumerate(self.noise_specs)]
        if self.u0_spec is not None:
            specs.append(("u0", self.u0_spec))
        for name, (kind, payload) in specs:
            if kind == "modes":
                for j, k, _ in payload:
                    need(1 <= j <= self.J and 1 <= k <= self.K, f"{name}.modes",
                         f"mode ({j},{k}) outside 1..{self.J} x 1..{self.K}")
            else:
                try:
                    self._field((kind, payload), name)
                except (OSError, ValueError) as err:
                    raise ConfigError(f"{name}.file: {err}") from None


# -- parsing ---------------------------------------------------------------

def parse_float(text: str) -> float:
    """A number, ``pi``, ``c*pi`` or ``pi/c``."""
    t = text.replace(" ", "").lower()
    if "pi" in t:
        if t == "pi":
            return math.pi
        if t.endswith("*pi"):
            return float(t[:-3]) * math.pi
        if t.startswith("pi/"):
            return math.pi / float(t[3:])
        raise ValueError(f"cannot read {text!r} as a number")
    return float(t)


def _parse_bool(text: str) -> bool:
    t = text.lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def parse_modes(text: str) -> list:
    """``(1,1):0.5, (2,1):0.25`` -> [(1, 1, 0.5), (2, 1, 0.25)]."""
    out = []
    rest = text.strip()
    pos = 0
    while pos < len(rest):
        m = _MODE.match(rest, pos)
        if not m:
            raise ValueError(f"bad mode list near {rest[pos:]!r}; expected (j,k):value")
        out.append((int(m.group(1)), int(m.group(2)), parse_float(m.group(3).rstrip(","))))
        pos = m.end()
        while pos < len(rest) and rest[pos] in ", ":
            pos += 1
    if not out:
        raise ValueError("empty mode list")
    return out


def format_modes(u: SpectralField, tol: float = 0.0) -> str:
    """Inverse of :func:`parse_modes` for the nonzero coefficients of ``u``."""
    parts = [f"({j + 1},{k + 1}):{u.coeff[j, k]:.17g}"
             for j, k in zip(*np.nonzero(np.abs(u.coeff) > tol))]
    return ", ".join(parts)


def _convert(key: str, text: str):
    default = _SCALARS[key]
    if key in ("pad_factor", "truncation_level"):
        if text.lower() in ("none", ""):
            return None
        return int(text) if key == "pad_factor" else parse_float(text)
    if key == "ell_levels":
        return tuple(parse_float(x) for x in text.split(",") if x.strip())
    if key == "scheme" or key == "out":
        return text
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        v = int(text, 0)
        return v
    return parse_float(text)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse a config file; ``overrides`` replaces keys after parsing."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as err:
        raise ConfigError(f"{path}: {err.strerror}") from None
    except UnicodeDecodeError as err:
        raise ConfigError(f"{path}: not UTF-8 ({err.reason})") from None
    base = os.path.dirname(os.path.abspath(path))
    values, fields, seen = {}, {}, set()
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, text = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        m = _FIELD_KEY.match(key)
        try:
            if m:
                name, kind = m.groups()
                if name in fields:
                    raise ValueError(f"{name} given both as modes and as file")
                if kind == "modes":
                    fields[name] = ("modes", parse_modes(text))
                else:
                    fields[name] = ("file", os.path.join(base, text))
            elif key in _SCALARS:
                values[key] = _convert(key, text)
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as err:
            raise ConfigError(f"{path}:{lineno}: {err}") from None
    noise_names = sorted((k for k in fields if k != "u0"), key=lambda s: int(s[1:]))
    for i, name in enumerate(noise_names):
        if name != f"f{i + 1}":
            raise ConfigError(f"{path}: noise fields must be numbered f1..fN without gaps, found {name}")
    values.update(overrides or {})
    return RunConfig(**values, noise_specs=[fields[k] for k in noise_names],
                     u0_spec=fields.get("u0"), source=str(path))
