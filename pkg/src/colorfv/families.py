"""Named families of model ingredients, buildable from short call
expressions like ``annulus(0, 0, 0.316, 0.447)`` or ``linear(2, 0)``.

Config files carry these expressions as plain strings; this module
parses them (numbers and nested calls only) and instantiates the
matching objects.  Every builder validates its parameters and raises
FamilyError with the offending expression.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .coupling import (Annulus, Difference, Disk, EmptyRegion, FluxFamily,
                       GammaMap, HalfPlane, Triangle)

__all__ = ["FamilyError", "Call", "parse_call", "build_region",
           "build_gamma", "build_flux", "build_initial",
           "REGIONS", "GAMMAS", "FLUXES", "INITIALS"]


class FamilyError(ValueError):
    """A family expression failed to parse or validate."""


@dataclass(frozen=True)
class Call:
    """Parsed call expression: a name plus numeric or Call arguments."""
    name: str
    args: tuple


_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")


def parse_call(text: str) -> Call:
    """Parse ``name(arg, ...)`` with numbers or nested calls as args."""
    src = text.strip()
    pos = 0

    def skip_ws(p):
        while p < len(src) and src[p].isspace():
            p += 1
        return p

    def parse_one(p):
        p = skip_ws(p)
        m = _NAME.match(src, p)
        if not m:
            raise FamilyError(f"expected a name at position {p} in {text!r}")
        name = m.group(0)
        p = skip_ws(m.end())
        if p >= len(src) or src[p] != "(":
            raise FamilyError(f"expected '(' after {name!r} in {text!r}")
        p = skip_ws(p + 1)
        args = []
        if p < len(src) and src[p] == ")":
            return Call(name, ()), p + 1
        while True:
            p = skip_ws(p)
            m = _NUMBER.match(src, p)
            # a number not followed by a name character is a literal
            if m and not _NAME.match(src, p):
                args.append(float(m.group(0)))
                p = m.end()
            else:
                sub, p = parse_one(p)
                args.append(sub)
            p = skip_ws(p)
            if p < len(src) and src[p] == ",":
                p += 1
                continue
            if p < len(src) and src[p] == ")":
                return Call(name, tuple(args)), p + 1
            raise FamilyError(f"expected ',' or ')' at position {p} "
                              f"in {text!r}")

    call, end = parse_one(0)
    if skip_ws(end) != len(src):
        raise FamilyError(f"trailing text after call in {text!r}")
    return call


def _numbers(call: Call, count: int):
    if len(call.args) != count or any(isinstance(a, Call)
                                      for a in call.args):
        raise FamilyError(
            f"{call.name} expects {count} numeric arguments")
    return call.args


# --------------------------------------------------------------------------
# regions


def _region_halfplane(call):
    nx, ny, offset = _numbers(call, 3)
    if nx == 0.0 and ny == 0.0:
        raise FamilyError("halfplane normal must be nonzero")
    return HalfPlane(nx=nx, ny=ny, offset=offset)


def _region_disk(call):
    cx, cy, r = _numbers(call, 3)
    if r <= 0.0:
        raise FamilyError("disk radius must be positive")
    return Disk(cx=cx, cy=cy, radius=r)


def _region_annulus(call):
    cx, cy, rin, rout = _numbers(call, 4)
    if not 0.0 < rin < rout:
        raise FamilyError("annulus needs 0 < r_inner < r_outer")
    return Annulus(cx=cx, cy=cy, r_inner=rin, r_outer=rout)


def _region_triangle(call):
    x1, y1, x2, y2, x3, y3 = _numbers(call, 6)
    twice = (x2 - x1) * (y3 - y1) - (y2 - y1) * (x3 - x1)
    if twice == 0.0:
        raise FamilyError("triangle is degenerate")
    return Triangle(p1=(x1, y1), p2=(x2, y2), p3=(x3, y3))


def _region_difference(call):
    if len(call.args) != 2 or not all(isinstance(a, Call)
                                      for a in call.args):
        raise FamilyError("difference expects two region arguments")
    return Difference(keep=_build_region_call(call.args[0]),
                      cut=_build_region_call(call.args[1]))


def _region_empty(call):
    _numbers(call, 0)
    return EmptyRegion()


REGIONS = {
    "halfplane": _region_halfplane,
    "disk": _region_disk,
    "annulus": _region_annulus,
    "triangle": _region_triangle,
    "difference": _region_difference,
    "empty": _region_empty,
}


def _build_region_call(call: Call):
    try:
        builder = REGIONS[call.name]
    except KeyError:
        raise FamilyError(f"unknown region family {call.name!r}") from None
    return builder(call)


def build_region(text: str):
    return _build_region_call(parse_call(text))


# --------------------------------------------------------------------------
# change-of-variable maps (strictly increasing)


def _gamma_linear(call, label):
    a, b = _numbers(call, 2)
    if a <= 0.0:
        raise FamilyError("linear gamma slope must be positive")
    return GammaMap(fn=lambda u: a * u + b,
                    deriv=lambda u: a * np.ones_like(np.asarray(u, float)),
                    label=label, linear=True)


def _gamma_cubic(call, label):
    a, b = _numbers(call, 2)
    if a <= 0.0 or b < 0.0:
        raise FamilyError("cubic gamma needs a > 0 and b >= 0")
    return GammaMap(fn=lambda u: a * u + b * u ** 3,
                    deriv=lambda u: a + 3.0 * b * np.asarray(u, float) ** 2,
                    label=label, linear=(b == 0.0))


GAMMAS = {"linear": _gamma_linear, "cubic": _gamma_cubic}


def build_gamma(text: str) -> GammaMap:
    call = parse_call(text)
    try:
        builder = GAMMAS[call.name]
    except KeyError:
        raise FamilyError(f"unknown gamma family {call.name!r}") from None
    return builder(call, text.strip())


# --------------------------------------------------------------------------
# component fluxes (map conserved value to a 2-vector)


def _flux_quadratic(call, label):
    shift, dx, dy = _numbers(call, 3)
    d = np.array([dx, dy])

    def fn(w):
        w = np.asarray(w, dtype=float)
        return (0.5 * (w - shift) ** 2)[..., None] * d

    def deriv(w):
        w = np.asarray(w, dtype=float)
        return (w - shift)[..., None] * d

    return FluxFamily(fn=fn, deriv=deriv, label=label, polynomial_degree=2)


def _flux_advect(call, label):
    ax, ay = _numbers(call, 2)
    d = np.array([ax, ay])

    def fn(w):
        w = np.asarray(w, dtype=float)
        return w[..., None] * d

    def deriv(w):
        w = np.asarray(w, dtype=float)
        return np.ones_like(w)[..., None] * d

    return FluxFamily(fn=fn, deriv=deriv, label=label, polynomial_degree=1)


FLUXES = {"quadratic": _flux_quadratic, "advect": _flux_advect}


def build_flux(text: str) -> FluxFamily:
    call = parse_call(text)
    try:
        builder = FLUXES[call.name]
    except KeyError:
        raise FamilyError(f"unknown flux family {call.name!r}") from None
    return builder(call, text.strip())


# --------------------------------------------------------------------------
# initial data (pointwise functions of x, y)


def _initial_constant(call):
    (c,) = _numbers(call, 1)
    return lambda x, y: c + 0.0 * np.asarray(x, dtype=float)


def _initial_step_x(call):
    x0, left, right = _numbers(call, 3)
    return lambda x, y: np.where(np.asarray(x, dtype=float) < x0,
                                 left, right)


def _initial_bump_x(call):
    amp, x0, x1 = _numbers(call, 3)
    if x1 <= x0:
        raise FamilyError("bump_x needs x1 > x0")

    def fn(x, y):
        x = np.asarray(x, dtype=float)
        s = np.clip((x - x0) / (x1 - x0), 0.0, 1.0)
        return amp * np.sin(np.pi * s) ** 2

    return fn


INITIALS = {
    "constant": _initial_constant,
    "step_x": _initial_step_x,
    "bump_x": _initial_bump_x,
}


def build_initial(text: str):
    call = parse_call(text)
    try:
        builder = INITIALS[call.name]
    except KeyError:
        raise FamilyError(f"unknown initial data family {call.name!r}") \
            from None
    return builder(call)
