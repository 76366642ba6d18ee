"""Whitelisted closed-form coefficient functions.

Spec files may only name functions from this catalog; anything else has to be
built in Python. Each entry is a frozen, vectorised callable that knows how to
print itself back to the file syntax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# name -> number of parameters
CATALOG = {
    "zero": 0,
    "const": 1,   # c
    "affine": 2,  # a + b*x
    "power": 2,   # c * |x|**p
    "expquad": 1,  # exp(c * x**2)
}


@dataclass(frozen=True)
class Expr:
    kind: str
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in CATALOG:
            raise ValueError(f"unknown catalog function {self.kind!r}")
        if len(self.params) != CATALOG[self.kind]:
            raise ValueError(
                f"{self.kind} takes {CATALOG[self.kind]} parameter(s), got {len(self.params)}"
            )

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        if k == "zero":
            out = np.zeros_like(x)
        elif k == "const":
            out = np.full_like(x, p[0])
        elif k == "affine":
            out = p[0] + p[1] * x
        elif k == "power":
            with np.errstate(divide="ignore"):
                out = p[0] * np.abs(x) ** p[1]
        else:
            with np.errstate(over="ignore"):
                out = np.exp(p[0] * x * x)
        return out if out.ndim else float(out)

    def to_text(self) -> str:
        return " ".join([self.kind, *(repr(float(v)) for v in self.params)])


def zero() -> Expr:
    return Expr("zero")


def const(c: float) -> Expr:
    return Expr("const", (float(c),))


def affine(a: float, b: float) -> Expr:
    return Expr("affine", (float(a), float(b)))


def power(c: float, p: float) -> Expr:
    return Expr("power", (float(c), float(p)))


def expquad(c: float) -> Expr:
    return Expr("expquad", (float(c),))


@dataclass(frozen=True)
class Tabulated:
    """Piecewise-linear function through sample points, constant beyond them."""

    x: tuple[float, ...]
    y: tuple[float, ...]

    def __post_init__(self):
        if len(self.x) != len(self.y) or len(self.x) < 2:
            raise ValueError("table needs at least two (x, y) rows of equal length")
        if np.any(np.diff(self.x) <= 0):
            raise ValueError("table abscissae must be strictly increasing")

    def __call__(self, x):
        out = np.interp(np.asarray(x, dtype=float), self.x, self.y)
        return out if np.ndim(out) else float(out)
