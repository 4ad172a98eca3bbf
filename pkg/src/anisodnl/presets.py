"""Built-in problem families and construction of problems from plain
configuration dictionaries.

Expression schema for data entries (f, g, u0):

  {"kind": "constant", "value": c}
  {"kind": "affine", "const": c0, "x": [c1, ..., cN], "t": ct}
  {"kind": "bump", "amplitude": A, "rate": r}
      A * prod_j sin(pi x_j / L_j) * (1 + r t)

Coefficient entries (one per axis):

  {"kind": "constant", "value": a}
  {"kind": "bounded_u", "base": a0, "slope": a1}   # a0 + a1 u/(1+u)
"""

from __future__ import annotations

import json
import math
from typing import Sequence

import numpy as np

from .model import CoefficientSpec, Exponents, ProblemSpec

__all__ = [
    "PRESET_NAMES",
    "get_preset",
    "preset_defaults",
    "problem_from_config",
    "make_constant",
    "make_affine",
    "make_bump",
]


def make_constant(value: float):
    v = float(value)

    def f(x, t=None, u=None):
        return np.full(np.shape(x[0]), v)

    return f


def make_affine(box: Sequence[float], const: float, xc: Sequence[float],
                tc: float = 0.0):
    xc = tuple(float(c) for c in xc)
    c0, ct = float(const), float(tc)

    def f(x, t=0.0, u=None):
        out = np.full(np.shape(x[0]), c0) + ct * t
        for c, xi in zip(xc, x):
            out = out + c * xi
        return out

    return f


def make_bump(box: Sequence[float], amplitude: float, rate: float = 0.0):
    box = tuple(float(b) for b in box)
    A, r = float(amplitude), float(rate)

    def f(x, t=0.0, u=None):
        out = np.full(np.shape(x[0]), A * (1.0 + r * t))
        for L, xi in zip(box, x):
            out = out * np.sin(np.pi * xi / L)
        return out

    return f


def _coeff_from_config(entry: dict):
    kind = entry["kind"]
    if kind == "constant":
        v = float(entry["value"])
        if v <= 0:
            raise ValueError("coefficient must be positive")

        def a(x, t, u):
            return np.full(np.shape(u), v)

        return a, max(v, 1.0 / v), 0.0
    if kind == "bounded_u":
        a0 = float(entry["base"])
        a1 = float(entry["slope"])
        if a0 <= 0 or a1 < 0:
            raise ValueError("need base > 0 and slope >= 0")

        def a(x, t, u):
            uu = np.maximum(np.asarray(u, dtype=float), 0.0)
            return a0 + a1 * uu / (1.0 + uu)

        return a, max(a0 + a1, 1.0 / a0), a1
    raise ValueError(f"unknown coefficient kind {kind!r}")


def _data_from_config(entry: dict, box):
    kind = entry["kind"]
    if kind == "constant":
        return make_constant(entry["value"])
    if kind == "affine":
        return make_affine(box, entry.get("const", 0.0),
                           entry.get("x", [0.0] * len(box)),
                           entry.get("t", 0.0))
    if kind == "bump":
        return make_bump(box, entry["amplitude"], entry.get("rate", 0.0))
    raise ValueError(f"unknown data kind {kind!r}")


def problem_from_config(cfg: dict) -> ProblemSpec:
    """Build a ProblemSpec from a plain dictionary (parsed JSON)."""
    if "preset" in cfg:
        return get_preset(cfg["preset"])
    box = tuple(float(b) for b in cfg["box"])
    exps = Exponents(tuple(cfg["p"]), tuple(cfg["m"]))
    funcs, lams, lips = [], [], []
    for entry in cfg["coeffs"]:
        a, lam, lip = _coeff_from_config(entry)
        funcs.append(a)
        lams.append(lam)
        lips.append(lip)
    coeffs = CoefficientSpec(tuple(funcs), max(lams), max(lips))
    f = _data_from_config(cfg["f"], box)
    g = _data_from_config(cfg["g"], box)
    u0_entry = cfg["u0"]
    u0_fun = _data_from_config(u0_entry, box)
    return ProblemSpec(
        box=box, T=float(cfg["T"]), exponents=exps, coeffs=coeffs,
        f=f, g=lambda x, t: g(x, t),
        u0=lambda x: u0_fun(x, 0.0),
        sigma=float(cfg["sigma"]), eps0=float(cfg.get("eps0", 0.0)))


def _const_coeffs(n: int, value: float = 1.0) -> CoefficientSpec:
    def a(x, t, u):
        return np.full(np.shape(u), value)

    return CoefficientSpec(tuple([a] * n), max(value, 1.0 / value), 0.0)


def _preset_aniso_cascade() -> ProblemSpec:
    """Fully anisotropic closeness-satisfying family with f = 0.

    Data sit in [0.4, 0.6], so consecutive truncated solutions stay in
    disjoint bands and the trajectories never hit the truncation caps.
    """
    box = (1.0, 1.0)
    exps = Exponents((3.0, 2.0), (1.0, 1.5))
    g = make_affine(box, 0.4, (0.2, 0.0))
    bump = make_bump(box, 0.1)
    return ProblemSpec(
        box=box, T=0.25, exponents=exps, coeffs=_const_coeffs(2),
        f=make_constant(0.0),
        g=lambda x, t: g(x, t),
        u0=lambda x: g(x, 0.0) + bump(x, 0.0),
        sigma=3.0, eps0=0.4)


def _preset_porous_cascade() -> ProblemSpec:
    """Isotropic porous-medium-type exponents, 1D, zero boundary data.

    The initial bump decays toward the shifted boundary value 1/k, so the
    lower-bound property is tight at the boundary.
    """
    box = (1.0,)
    exps = Exponents((2.0,), (2.0,))
    u0 = make_bump(box, 0.5)
    return ProblemSpec(
        box=box, T=0.25, exponents=exps, coeffs=_const_coeffs(1),
        f=make_constant(0.0),
        g=make_constant(0.0),
        u0=lambda x: u0(x, 0.0),
        sigma=4.0, eps0=0.0)


def _preset_ortho_plaplace() -> ProblemSpec:
    """Orthotropic gradient nonlinearity (m = 1), data scale 10.

    With m = 1 the truncation factor is identically one, so all members
    of the cascade solve the same equation and differ only through the
    1/k data shift.
    """
    box = (1.0, 1.0)
    exps = Exponents((3.0, 2.0), (1.0, 1.0))
    u0 = make_bump(box, 10.0)
    return ProblemSpec(
        box=box, T=0.1, exponents=exps, coeffs=_const_coeffs(2),
        f=make_constant(0.0),
        g=make_constant(0.0),
        u0=lambda x: u0(x, 0.0),
        sigma=3.0, eps0=0.0)


def _preset_strong_source() -> ProblemSpec:
    """1D heat-type problem driven by a large interior source.

    Used for level-set and energy measurements: the solution rises far
    above the data bound so exceedance sets are nonempty and the relative
    effect of the 1/k shift is small.
    """
    box = (1.0,)
    exps = Exponents((2.0,), (1.0,))
    f = make_bump(box, 1000.0)
    return ProblemSpec(
        box=box, T=0.5, exponents=exps, coeffs=_const_coeffs(1),
        f=f,
        g=make_constant(0.0),
        u0=lambda x: np.zeros(np.shape(x[0])),
        sigma=3.0, eps0=0.0)


def _preset_manufactured_1d() -> ProblemSpec:
    """Closed-form source for the exact solution u = 1 + t x (1 - x)."""
    box = (1.0,)
    exps = Exponents((2.0,), (1.0,))

    def f(x, t):
        return x[0] * (1.0 - x[0]) + 2.0 * t

    return ProblemSpec(
        box=box, T=1.0, exponents=exps, coeffs=_const_coeffs(1),
        f=f,
        g=make_constant(1.0),
        u0=lambda x: np.ones(np.shape(x[0])),
        sigma=3.0, eps0=1.0)


def manufactured_1d_exact(x, t):
    """Exact solution matching the manufactured-1d preset."""
    return 1.0 + t * x[0] * (1.0 - x[0])


def _preset_manufactured_quartic() -> ProblemSpec:
    """Closed-form source for u = 1 + t^2 x^2 (1 - x)^2.

    Unlike the base manufactured case, this solution is not reproduced
    exactly by the scheme, so it shows genuine discretization error.
    """
    box = (1.0,)
    exps = Exponents((2.0,), (1.0,))

    def f(x, t):
        xx = x[0]
        return (2.0 * t * xx ** 2 * (1.0 - xx) ** 2
                - t * t * (2.0 - 12.0 * xx + 12.0 * xx ** 2))

    return ProblemSpec(
        box=box, T=1.0, exponents=exps, coeffs=_const_coeffs(1),
        f=f,
        g=make_constant(1.0),
        u0=lambda x: np.ones(np.shape(x[0])),
        sigma=3.0, eps0=1.0)


def manufactured_quartic_exact(x, t):
    """Exact solution matching the manufactured-quartic preset."""
    return 1.0 + t * t * x[0] ** 2 * (1.0 - x[0]) ** 2


def _preset_manufactured_strong() -> ProblemSpec:
    """Closed-form source for u = 1 + 40 t x (1 - x).

    The solution climbs an order of magnitude above the data bound, which
    makes level energies and exceedance sets robustly nonzero.
    """
    box = (1.0,)
    exps = Exponents((2.0,), (1.0,))

    def f(x, t):
        return 40.0 * x[0] * (1.0 - x[0]) + 80.0 * t

    return ProblemSpec(
        box=box, T=1.0, exponents=exps, coeffs=_const_coeffs(1),
        f=f,
        g=make_constant(1.0),
        u0=lambda x: np.ones(np.shape(x[0])),
        sigma=3.0, eps0=1.0)


def manufactured_strong_exact(x, t):
    """Exact solution matching the manufactured-strong preset."""
    return 1.0 + 40.0 * t * x[0] * (1.0 - x[0])


def _preset_constant() -> ProblemSpec:
    """Constant data c = 0.7: constants solve every mode exactly."""
    box = (1.0, 1.0)
    exps = Exponents((3.0, 2.0), (1.0, 1.5))
    return ProblemSpec(
        box=box, T=0.25, exponents=exps, coeffs=_const_coeffs(2),
        f=make_constant(0.0),
        g=make_constant(0.7),
        u0=lambda x: np.full(np.shape(x[0]), 0.7),
        sigma=3.0, eps0=0.7)


def _preset_varcoeff() -> ProblemSpec:
    """Solution-dependent coefficients exercising the Lipschitz audit."""
    box = (1.0, 1.0)
    exps = Exponents((2.0, 2.0), (1.0, 1.2))

    def a1(x, t, u):
        uu = np.maximum(np.asarray(u, dtype=float), 0.0)
        return 1.0 + 0.5 * uu / (1.0 + uu)

    def a2(x, t, u):
        return np.full(np.shape(u), 1.0)

    coeffs = CoefficientSpec((a1, a2), 1.5, 0.5)
    g = make_affine(box, 0.5, (0.1, 0.1))
    return ProblemSpec(
        box=box, T=0.25, exponents=exps, coeffs=coeffs,
        f=make_constant(0.0),
        g=lambda x, t: g(x, t),
        u0=lambda x: g(x, 0.0),
        sigma=3.0, eps0=0.5)


_PRESETS = {
    "aniso-cascade": _preset_aniso_cascade,
    "porous-cascade": _preset_porous_cascade,
    "ortho-plaplace": _preset_ortho_plaplace,
    "strong-source": _preset_strong_source,
    "manufactured-1d": _preset_manufactured_1d,
    "manufactured-quartic": _preset_manufactured_quartic,
    "manufactured-strong": _preset_manufactured_strong,
    "constant": _preset_constant,
    "varcoeff": _preset_varcoeff,
}

PRESET_NAMES = tuple(sorted(_PRESETS))

_DEFAULTS = {
    "aniso-cascade": {"grid": (33, 33), "n_steps": 32},
    "porous-cascade": {"grid": (65,), "n_steps": 32},
    "ortho-plaplace": {"grid": (33, 33), "n_steps": 32},
    "strong-source": {"grid": (65,), "n_steps": 32},
    "manufactured-1d": {"grid": (65,), "n_steps": 32},
    "manufactured-quartic": {"grid": (65,), "n_steps": 32},
    "manufactured-strong": {"grid": (65,), "n_steps": 32},
    "constant": {"grid": (33, 33), "n_steps": 32},
    "varcoeff": {"grid": (33, 33), "n_steps": 32},
}


def get_preset(name: str) -> ProblemSpec:
    try:
        return _PRESETS[name]()
    except KeyError:
        raise ValueError(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")


def preset_defaults(name: str) -> dict:
    """Suggested grid resolution and step count for a preset."""
    return dict(_DEFAULTS[name])
