"""Prox-friendly nonsmooth terms and smooth quadratic terms.

Every nonsmooth term except the ball indicator is elementwise and fits

    rho(y) = sum_j w_j |y_j| + c_j y_j + [lo_j <= y_j <= hi_j]

whose prox is ``clip(soft(v - tau c, tau w), lo, hi)``. :class:`CompiledProx`
uses that form to apply the prox of many stacked agents in one pass.
Every smooth term is a convex quadratic, so stacked agents reduce to one
sparse block-diagonal Hessian (:class:`CompiledQuadratic`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ProxFunction",
    "Zero",
    "L1Norm",
    "WeightedLinearPlusNonneg",
    "IndicatorBall",
    "IndicatorBox",
    "SeparableSum",
    "prox_apply",
    "SmoothFunction",
    "ZeroSmooth",
    "Quadratic",
    "LeastSquares",
    "HalfSquaredNormOfSubblock",
    "smooth_eval",
    "CompiledProx",
    "CompiledQuadratic",
]


def _as_vec(v, n=None):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if n is not None and v.shape != (n,):
        v = np.broadcast_to(v, (n,)).copy()
    return v


class ProxFunction:
    """Base class for the nonsmooth terms."""

    #: fixed dimension, or None if the term applies to any length
    dim = None

    def prox(self, v: np.ndarray, tau) -> np.ndarray:
        raise NotImplementedError

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def elementwise(self, n: int):
        """Return ``(w, c, lo, hi)`` arrays, or None for ball indicators."""
        raise NotImplementedError

    def max_norm(self, n: int) -> float:
        """Largest Euclidean norm over the domain (inf if unbounded)."""
        return float("inf")


@dataclass(frozen=True)
class Zero(ProxFunction):
    def prox(self, v, tau):
        return np.array(v, dtype=float)

    def value(self, x):
        return 0.0

    def elementwise(self, n):
        return np.zeros(n), np.zeros(n), np.full(n, -np.inf), np.full(n, np.inf)


@dataclass(frozen=True)
class L1Norm(ProxFunction):
    """``weight * ||y||_1``; weight may be a scalar or a vector."""

    weight: object = 1.0

    def __post_init__(self):
        if np.any(np.asarray(self.weight) < 0):
            raise ValueError("L1 weight must be nonnegative")

    def prox(self, v, tau):
        v = np.asarray(v, dtype=float)
        t = np.asarray(tau) * np.asarray(self.weight)
        return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)

    def value(self, x):
        return float(np.sum(np.asarray(self.weight) * np.abs(x)))

    def elementwise(self, n):
        return _as_vec(self.weight, n), np.zeros(n), np.full(n, -np.inf), np.full(n, np.inf)


@dataclass(frozen=True)
class WeightedLinearPlusNonneg(ProxFunction):
    """``c^T y + [y >= 0]`` with ``c >= 0``; the SVM slack term."""

    c: np.ndarray

    def __post_init__(self):
        c = _as_vec(self.c)
        if np.any(c < 0):
            raise ValueError("cost vector must be nonnegative")
        object.__setattr__(self, "c", c)

    @property
    def dim(self):
        return None if self.c.size == 1 else self.c.size

    def prox(self, v, tau):
        return np.maximum(np.asarray(v, dtype=float) - np.asarray(tau) * self.c, 0.0)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            return float("inf")
        return float(np.sum(self.c * x))

    def elementwise(self, n):
        return np.zeros(n), _as_vec(self.c, n), np.zeros(n), np.full(n, np.inf)


@dataclass(frozen=True)
class IndicatorBall(ProxFunction):
    """Indicator of the Euclidean ball ``||y - center|| <= radius``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vec(self.center))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def dim(self):
        return None if self.center.size == 1 else self.center.size

    def _c(self, n):
        return self.center if self.center.size == n else np.broadcast_to(self.center, (n,))

    def prox(self, v, tau):
        v = np.asarray(v, dtype=float)
        c = self._c(v.size)
        d = v - c
        nd = float(np.linalg.norm(d))
        if nd <= self.radius:
            return v.copy()
        return c + (self.radius / nd) * d

    def value(self, x):
        x = np.asarray(x, dtype=float)
        ok = np.linalg.norm(x - self._c(x.size)) <= self.radius * (1 + 1e-12)
        return 0.0 if ok else float("inf")

    def elementwise(self, n):
        return None

    def max_norm(self, n):
        return float(np.linalg.norm(self._c(n)) + self.radius)


@dataclass(frozen=True)
class IndicatorBox(ProxFunction):
    """Indicator of ``lower <= y <= upper`` (bounds may be infinite)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, hi = _as_vec(self.lower), _as_vec(self.upper)
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        n = max(self.lower.size, self.upper.size)
        return None if n == 1 else n

    def prox(self, v, tau):
        return np.clip(np.asarray(v, dtype=float), self.lower, self.upper)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lower) or np.any(x > self.upper):
            return float("inf")
        return 0.0

    def elementwise(self, n):
        return np.zeros(n), np.zeros(n), _as_vec(self.lower, n), _as_vec(self.upper, n)

    def max_norm(self, n):
        m = np.maximum(np.abs(_as_vec(self.lower, n)), np.abs(_as_vec(self.upper, n)))
        return float(np.linalg.norm(m))


@dataclass(frozen=True)
class SeparableSum(ProxFunction):
    """Blockwise sum of terms over disjoint coordinate ranges.

    Parameters
    ----------
    pieces : sequence of ((start, stop), ProxFunction)
        Half-open ranges; uncovered coordinates get :class:`Zero`.
    dim : int
        Total dimension.
    """

    pieces: tuple
    dim: int = None

    def __post_init__(self):
        pieces = tuple(((int(a), int(b)), fn) for (a, b), fn in self.pieces)
        pieces = tuple(sorted(pieces, key=lambda p: p[0][0]))
        end = 0
        for (a, b), fn in pieces:
            if a < end or b <= a:
                raise ValueError(f"overlapping or empty coordinate range [{a}, {b})")
            if fn.dim is not None and fn.dim != b - a:
                raise ValueError(f"piece on [{a}, {b}) has dimension {fn.dim}")
            end = b
        if self.dim is not None and end > self.dim:
            raise ValueError("coordinate range exceeds dimension")
        object.__setattr__(self, "pieces", pieces)

    def prox(self, v, tau):
        v = np.asarray(v, dtype=float)
        out = v.copy()
        tau = np.asarray(tau, dtype=float)
        for (a, b), fn in self.pieces:
            t = tau if tau.ndim == 0 else tau[a:b]
            out[a:b] = fn.prox(v[a:b], t)
        return out

    def value(self, x):
        return float(sum(fn.value(x[a:b]) for (a, b), fn in self.pieces))

    def elementwise(self, n):
        if any(fn.elementwise(b - a) is None for (a, b), fn in self.pieces):
            return None
        w, c, lo, hi = Zero().elementwise(n)
        for (a, b), fn in self.pieces:
            w[a:b], c[a:b], lo[a:b], hi[a:b] = fn.elementwise(b - a)
        return w, c, lo, hi

    def max_norm(self, n):
        covered = sum(b - a for (a, b), _ in self.pieces)
        if covered < n:
            return float("inf")
        return float(np.sqrt(sum(fn.max_norm(b - a) ** 2 for (a, b), fn in self.pieces)))

    def restrict(self, start: int, stop: int) -> ProxFunction:
        """The term restricted to ``[start, stop)``, which must align with pieces."""
        sub = []
        for (a, b), fn in self.pieces:
            if a >= start and b <= stop:
                sub.append(((a - start, b - start), fn))
            elif a < stop and b > start:
                raise ValueError("range cuts through a piece")
        return SeparableSum(tuple(sub), stop - start)


def prox_apply(rho: ProxFunction, v, tau) -> np.ndarray:
    """Prox of ``tau * rho`` at ``v``.

    Raises
    ------
    ValueError
        If ``tau`` is not positive or dimensions disagree.
    """
    v = np.asarray(v, dtype=float)
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr <= 0):
        raise ValueError("prox step must be positive")
    if rho.dim is not None and v.size != rho.dim:
        raise ValueError(f"vector of length {v.size} for a term of dimension {rho.dim}")
    return rho.prox(v, tau_arr)


# ---------------------------------------------------------------------------
# smooth terms


class SmoothFunction:
    """Base class for smooth convex quadratics."""

    dim = None

    def value_grad(self, x: np.ndarray):
        Q, q, c = self.as_quadratic(x.size)
        g = Q @ x + q
        return float(0.5 * x @ (Q @ x) + q @ x + c), g

    @property
    def lipschitz(self) -> float:
        raise NotImplementedError

    def as_quadratic(self, n: int):
        """``(Q, q, c)`` with ``f(x) = x^T Q x / 2 + q^T x + c``; Q is sparse."""
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroSmooth(SmoothFunction):
    def value_grad(self, x):
        return 0.0, np.zeros_like(np.asarray(x, dtype=float))

    @property
    def lipschitz(self):
        return 0.0

    def as_quadratic(self, n):
        return sp.csr_matrix((n, n)), np.zeros(n), 0.0


@dataclass(frozen=True)
class Quadratic(SmoothFunction):
    """``x^T Q x / 2 + linear^T x + constant`` with ``Q`` symmetric PSD."""

    Q: np.ndarray
    linear: np.ndarray = None
    constant: float = 0.0
    _L: float = field(init=False, repr=False, compare=False, default=0.0)

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise ValueError("Q must be square")
        Q = 0.5 * (Q + Q.T)
        lin = np.zeros(Q.shape[0]) if self.linear is None else _as_vec(self.linear)
        if lin.shape != (Q.shape[0],):
            raise ValueError("linear term has the wrong length")
        ev = np.linalg.eigvalsh(Q)
        if ev[0] < -1e-10 * max(1.0, abs(ev[-1])):
            raise ValueError("Q must be positive semidefinite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "_L", float(max(ev[-1], 0.0)))

    @property
    def dim(self):
        return self.Q.shape[0]

    @property
    def lipschitz(self):
        return self._L

    def value_grad(self, x):
        Qx = self.Q @ x
        return float(0.5 * x @ Qx + self.linear @ x + self.constant), Qx + self.linear

    def as_quadratic(self, n):
        return sp.csr_matrix(self.Q), self.linear.copy(), float(self.constant)


@dataclass(frozen=True)
class LeastSquares(SmoothFunction):
    """``||A x - y||^2 / 2``."""

    A: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "y", _as_vec(self.y, A.shape[0]))

    @property
    def dim(self):
        return self.A.shape[1]

    @property
    def lipschitz(self):
        return float(np.linalg.norm(self.A, 2) ** 2)

    def value_grad(self, x):
        r = self.A @ x - self.y
        return float(0.5 * r @ r), self.A.T @ r

    def as_quadratic(self, n):
        return (
            sp.csr_matrix(self.A.T @ self.A),
            -(self.A.T @ self.y),
            float(0.5 * self.y @ self.y),
        )


@dataclass(frozen=True)
class HalfSquaredNormOfSubblock(SmoothFunction):
    """``||x[start:stop]||^2 / 2``; the SVM regularizer ``||w||^2 / 2``."""

    start: int
    stop: int

    def __post_init__(self):
        if not 0 <= self.start < self.stop:
            raise ValueError("empty or negative sub-block")

    @property
    def lipschitz(self):
        return 1.0

    def value_grad(self, x):
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        g[self.start:self.stop] = x[self.start:self.stop]
        return float(0.5 * g @ g), g

    def as_quadratic(self, n):
        d = np.zeros(n)
        d[self.start:self.stop] = 1.0
        return sp.diags(d, format="csr"), np.zeros(n), 0.0


def smooth_eval(f: SmoothFunction, x):
    """Value and gradient of ``f`` at ``x``.

    Raises
    ------
    ValueError
        If the length of ``x`` does not match ``f``.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(f, HalfSquaredNormOfSubblock) and x.size < f.stop:
        raise ValueError(f"vector of length {x.size} is shorter than the sub-block")
    if f.dim is not None and x.size != f.dim:
        raise ValueError(f"vector of length {x.size} for a function of dimension {f.dim}")
    return f.value_grad(x)


# ---------------------------------------------------------------------------
# stacked forms used by the solvers


class CompiledProx:
    """Prox of a sum of terms placed at offsets of one long vector.

    Parameters
    ----------
    blocks : sequence of (offset, length, ProxFunction)
    n : int
        Total length.
    """

    def __init__(self, blocks, n: int):
        self.n = n
        w, c, lo, hi = Zero().elementwise(n)
        self.balls = []
        for off, length, fn in blocks:
            self._place(off, length, fn, w, c, lo, hi)
        self._finish(w, c, lo, hi)

    @classmethod
    def from_arrays(cls, w, c, lo, hi, balls=()):
        """Build directly from elementwise arrays and ``(idx, center, radius)`` balls."""
        self = cls.__new__(cls)
        self.n = len(w)
        self.balls = [(np.asarray(i), np.asarray(ce, dtype=float), float(r)) for i, ce, r in balls]
        self._finish(np.asarray(w, float), np.asarray(c, float), np.asarray(lo, float), np.asarray(hi, float))
        return self

    def _finish(self, w, c, lo, hi):
        self.w, self.c, self.lo, self.hi = w, c, lo, hi
        self._has_w = bool(np.any(w))
        self._has_c = bool(np.any(c))
        self._has_box = bool(np.any(np.isfinite(lo)) or np.any(np.isfinite(hi)))

    def _place(self, off, length, fn, w, c, lo, hi):
        if isinstance(fn, SeparableSum):
            for (a, b), sub in fn.pieces:
                self._place(off + a, b - a, sub, w, c, lo, hi)
            return
        if isinstance(fn, IndicatorBall):
            idx = np.arange(off, off + length)
            self.balls.append((idx, fn._c(length).copy(), float(fn.radius)))
            return
        s = slice(off, off + length)
        w[s], c[s], lo[s], hi[s] = fn.elementwise(length)

    def prox(self, v: np.ndarray, tau) -> np.ndarray:
        u = v - tau * self.c if self._has_c else v.copy()
        if self._has_w:
            u = np.sign(u) * np.maximum(np.abs(u) - tau * self.w, 0.0)
        if self._has_box:
            np.clip(u, self.lo, self.hi, out=u)
        for idx, center, radius in self.balls:
            d = u[idx] - center
            nd = np.linalg.norm(d)
            if nd > radius:
                u[idx] = center + (radius / nd) * d
        return u

    def value(self, x: np.ndarray) -> float:
        if self._has_box and (np.any(x < self.lo - 1e-12 * (1 + np.abs(self.lo)))
                              or np.any(x > self.hi + 1e-12 * (1 + np.abs(self.hi)))):
            return float("inf")
        for idx, center, radius in self.balls:
            if np.linalg.norm(x[idx] - center) > radius * (1 + 1e-9):
                return float("inf")
        return float(self.w @ np.abs(x) + self.c @ x)

    def value_finite(self, x: np.ndarray) -> float:
        """The finite part ``sum w|x| + c^T x``, ignoring indicators."""
        return float(self.w @ np.abs(x) + self.c @ x)


class CompiledQuadratic:
    """Sum of quadratics placed at offsets of one long vector."""

    def __init__(self, blocks, n: int):
        q, const = np.zeros(n), 0.0
        rows, cols, vals = [], [], []
        for off, length, fn in blocks:
            Qi, qi, ci = fn.as_quadratic(length)
            Qi = sp.coo_matrix(Qi)
            rows.append(Qi.row + off)
            cols.append(Qi.col + off)
            vals.append(Qi.data)
            q[off:off + length] += qi
            const += ci
        cat = lambda a: np.concatenate(a) if a else np.zeros(0)
        self.Q = sp.csr_matrix((cat(vals), (cat(rows).astype(int), cat(cols).astype(int))), shape=(n, n))
        self.Q.sum_duplicates()
        self.q = q
        self.const = const

    def grad(self, x):
        return self.Q @ x + self.q

    def value(self, x):
        return float(0.5 * x @ (self.Q @ x) + self.q @ x + self.const)

    def lipschitz(self) -> float:
        if self.Q.nnz == 0:
            return 0.0
        Qd = self.Q.toarray()
        return float(max(np.linalg.eigvalsh(Qd)[-1], 0.0))
