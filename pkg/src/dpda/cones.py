"""Closed convex cones: projection, polar projection and distance.

Every cone exposes the same small surface so solvers never branch on the
variant. Second-order cones put the radius first,
``{(t, x) : ||x|| <= t}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Cone",
    "ZeroCone",
    "FreeCone",
    "NonnegativeOrthant",
    "SecondOrderCone",
    "ProductCone",
    "project_cone",
    "project_polar",
    "cone_distance",
    "polar_distance",
    "dual_cone",
    "in_dual_cone",
]


class Cone:
    """Base class for the supported cones."""

    dim: int

    def project(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def project_polar(self, v: np.ndarray) -> np.ndarray:
        """Projection onto the polar cone, via Moreau decomposition."""
        return v - self.project(v)

    def distance(self, v: np.ndarray) -> float:
        return float(np.linalg.norm(self.project_polar(v)))

    def dual(self) -> "Cone":
        raise NotImplementedError

    def contains_interior(self, v: np.ndarray, margin: float = 0.0) -> bool:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroCone(Cone):
    """The cone ``{0}``. Its polar is the whole space."""

    dim: int

    def project(self, v):
        return np.zeros_like(v)

    def project_polar(self, v):
        return v.copy()

    def dual(self):
        return FreeCone(self.dim)

    def contains_interior(self, v, margin=0.0):
        return False

    def to_dict(self):
        return {"type": "zero", "dim": self.dim}


@dataclass(frozen=True)
class FreeCone(Cone):
    """The whole space. Its polar is ``{0}``."""

    dim: int

    def project(self, v):
        return v.copy()

    def project_polar(self, v):
        return np.zeros_like(v)

    def dual(self):
        return ZeroCone(self.dim)

    def contains_interior(self, v, margin=0.0):
        return True

    def to_dict(self):
        return {"type": "free", "dim": self.dim}


@dataclass(frozen=True)
class NonnegativeOrthant(Cone):
    dim: int

    def project(self, v):
        return np.maximum(v, 0.0)

    def project_polar(self, v):
        return np.minimum(v, 0.0)

    def dual(self):
        return self

    def contains_interior(self, v, margin=0.0):
        return bool(np.all(v > margin))

    def to_dict(self):
        return {"type": "orthant", "dim": self.dim}


def _soc_project(v: np.ndarray) -> np.ndarray:
    t = v[0]
    x = v[1:]
    nx = float(np.linalg.norm(x))
    if nx <= t:
        return v.copy()
    if nx <= -t:
        return np.zeros_like(v)
    a = 0.5 * (t + nx)
    out = np.empty_like(v)
    out[0] = a
    out[1:] = (a / nx) * x
    return out


@dataclass(frozen=True)
class SecondOrderCone(Cone):
    """Lorentz cone ``{(t, x) : ||x|| <= t}`` with the radius first."""

    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("second-order cone needs dim >= 1")

    def project(self, v):
        return _soc_project(v)

    def dual(self):
        return self

    def contains_interior(self, v, margin=0.0):
        return bool(v[0] - np.linalg.norm(v[1:]) > margin)

    def to_dict(self):
        return {"type": "soc", "dim": self.dim}


@dataclass(frozen=True)
class ProductCone(Cone):
    """Cartesian product of cones, stacked in order.

    Elementwise components (zero, free, orthant) are projected in one
    vectorized pass; second-order blocks are handled one by one.
    """

    cones: tuple
    dim: int = field(init=False)

    def __post_init__(self):
        cones = tuple(self.cones)
        object.__setattr__(self, "cones", cones)
        object.__setattr__(self, "dim", int(sum(c.dim for c in cones)))
        zero, orth, soc = [], [], []
        off = 0
        for c in _flatten(cones):
            idx = np.arange(off, off + c.dim)
            if isinstance(c, ZeroCone):
                zero.append(idx)
            elif isinstance(c, NonnegativeOrthant):
                orth.append(idx)
            elif isinstance(c, SecondOrderCone):
                soc.append((off, off + c.dim))
            elif not isinstance(c, FreeCone):
                raise TypeError(f"unsupported cone {c!r}")
            off += c.dim
        cat = lambda parts: np.concatenate(parts) if parts else np.zeros(0, dtype=int)
        object.__setattr__(self, "_zero", cat(zero))
        object.__setattr__(self, "_orth", cat(orth))
        object.__setattr__(self, "_soc", tuple(soc))

    def project(self, v):
        out = v.copy()
        out[self._zero] = 0.0
        out[self._orth] = np.maximum(v[self._orth], 0.0)
        for a, b in self._soc:
            out[a:b] = _soc_project(v[a:b])
        return out

    def dual(self):
        return ProductCone(tuple(c.dual() for c in self.cones))

    def contains_interior(self, v, margin=0.0):
        off = 0
        for c in self.cones:
            if not c.contains_interior(v[off:off + c.dim], margin):
                return False
            off += c.dim
        return True

    def blocks(self):
        """Yield ``(start, stop, cone)`` for each top-level component."""
        off = 0
        for c in self.cones:
            yield off, off + c.dim, c
            off += c.dim

    def to_dict(self):
        return {"type": "product", "cones": [c.to_dict() for c in self.cones]}


def _flatten(cones):
    for c in cones:
        if isinstance(c, ProductCone):
            yield from _flatten(c.cones)
        else:
            yield c


def cone_from_dict(d: dict) -> Cone:
    kind = d["type"]
    if kind == "product":
        return ProductCone(tuple(cone_from_dict(c) for c in d["cones"]))
    cls = {
        "zero": ZeroCone,
        "free": FreeCone,
        "orthant": NonnegativeOrthant,
        "soc": SecondOrderCone,
    }[kind]
    return cls(int(d["dim"]))


def _check(cone: Cone, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != cone.dim:
        raise ValueError(
            f"vector of shape {v.shape} does not match cone dimension {cone.dim}"
        )
    return v


def project_cone(cone: Cone, v) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``cone``.

    Raises
    ------
    ValueError
        If the dimension of ``v`` differs from the cone's.
    """
    return cone.project(_check(cone, v))


def project_polar(cone: Cone, v) -> np.ndarray:
    """Projection onto the polar cone, ``v - project_cone(cone, v)``."""
    return cone.project_polar(_check(cone, v))


def cone_distance(cone: Cone, v) -> float:
    """Distance from ``v`` to ``cone``."""
    return cone.distance(_check(cone, v))


def polar_distance(cone: Cone, v) -> float:
    """Distance from ``v`` to the polar cone, ``||project_cone(v)||``."""
    return float(np.linalg.norm(cone.project(_check(cone, v))))


def dual_cone(cone: Cone) -> Cone:
    """The dual cone ``K* = -K°``."""
    return cone.dual()


def in_dual_cone(cone: Cone, w, tol: float = 1e-12) -> bool:
    """Whether ``w`` lies in the dual cone up to ``tol``."""
    w = _check(cone, w)
    return cone.dual().distance(w) <= tol * (1.0 + np.linalg.norm(w))
