"""Dual-radius bound from a strictly feasible (Slater) point."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .cones import Cone, FreeCone, NonnegativeOrthant, ProductCone, SecondOrderCone, ZeroCone, cone_distance

__all__ = ["NotSlaterError", "SlaterCertificate", "compute_r_tilde", "dual_radius", "slater_certificate"]

log = logging.getLogger(__name__)

# sign orthants grow as 2^(d-1); keep the SOC subproblem at desk scale
_MAX_SOC_DIM = 14


class NotSlaterError(ValueError):
    """The supplied point does not map into the interior of the cone."""


def _components(cone: Cone) -> list:
    if isinstance(cone, ProductCone):
        out = []
        for c in cone.cones:
            out.extend(_components(c))
        return out
    return [cone]


def _soc_min(g: np.ndarray) -> float:
    """``min w^T g`` over ``w`` in the SOC (self-dual) with ``||w||_1 = 1``.

    Within a fixed sign pattern of the tail coordinates the l1 constraint
    is linear, so each piece is a convex program; the answer is the best
    piece.
    """
    d = g.size
    if d > _MAX_SOC_DIM:
        raise ValueError(f"second-order cone of dimension {d} is too large for the r-tilde search")
    if d == 1:
        return float(g[0])
    best = np.inf
    for signs in itertools.product((1.0, -1.0), repeat=d - 1):
        s = np.r_[1.0, signs]
        cons = [
            {"type": "eq", "fun": lambda w, s=s: s @ w - 1.0, "jac": lambda w, s=s: s},
            {"type": "ineq", "fun": lambda w: w[0] ** 2 - w[1:] @ w[1:],
             "jac": lambda w: np.r_[2.0 * w[0], -2.0 * w[1:]]},
        ]
        bounds = [(0.0, 1.0)] + [(0.0, 1.0) if si > 0 else (-1.0, 0.0) for si in signs]
        w0 = np.r_[1.0, np.zeros(d - 1)]
        res = minimize(lambda w: g @ w, w0, jac=lambda w: g, method="SLSQP", bounds=bounds,
                       constraints=cons, options={"ftol": 1e-12, "maxiter": 500})
        w = res.x
        # accept only points that are feasible to solver tolerance
        if abs(s @ w - 1.0) <= 1e-8 and w[0] + 1e-8 >= np.linalg.norm(w[1:]):
            best = min(best, float(g @ w))
    return best


def compute_r_tilde(g_val, cone: Cone) -> float:
    """Interior margin ``min {w^T g : ||w||_1 = 1, w in K*}``.

    Parameters
    ----------
    g_val : array_like
        Constraint image at the Slater point; must lie in the interior of
        ``cone``.
    cone : Cone

    Returns
    -------
    float
        Closed form ``min_j g_j`` for orthants; products take the minimum
        over their components; free components impose nothing.

    Raises
    ------
    NotSlaterError
        If ``g_val`` is not interior (margin ``<= 0``) or the cone has an
        empty interior.
    """
    g = np.asarray(g_val, dtype=float).ravel()
    if g.size != cone.dim:
        raise ValueError(f"vector of length {g.size} does not match cone dimension {cone.dim}")
    vals = []
    off = 0
    for c in _components(cone):
        part = g[off:off + c.dim]
        off += c.dim
        if c.dim == 0 or isinstance(c, FreeCone):
            continue
        if isinstance(c, ZeroCone):
            raise NotSlaterError("the zero cone has an empty interior")
        if isinstance(c, NonnegativeOrthant):
            vals.append(float(part.min()))
        elif isinstance(c, SecondOrderCone):
            vals.append(_soc_min(part))
        else:
            raise TypeError(f"unsupported cone {type(c).__name__}")
    r = min(vals) if vals else np.inf
    if not r > 0:
        raise NotSlaterError(f"constraint image is not interior to the cone (margin {r:.3e})")
    return r


@dataclass
class SlaterCertificate:
    """Strictly feasible point with the data needed for a dual radius.

    Attributes
    ----------
    xi_bar : list of ndarray
        Per-agent Slater point.
    g : ndarray
        ``sum_i R_i xi_bar_i - r_i``.
    cone : Cone
    phi_bar : float
        Objective at ``xi_bar``.
    q_lower : float
        A lower bound on the dual function, by default ``q(0)``.
    r_tilde : float
    """

    xi_bar: list
    g: np.ndarray
    cone: Cone
    phi_bar: float
    q_lower: float
    r_tilde: float

    def __post_init__(self):
        if cone_distance(self.cone, self.g) > 1e-12:
            raise NotSlaterError("Slater point violates the shared constraint")
        if self.phi_bar < self.q_lower:
            raise ValueError("dual lower bound exceeds the primal value at the Slater point")

    def to_dict(self) -> dict:
        return {
            "xi_bar": [list(map(float, x)) for x in self.xi_bar],
            "g": list(map(float, self.g)),
            "phi_bar": self.phi_bar,
            "q_lower": self.q_lower,
            "r_tilde": self.r_tilde,
            "radius": dual_radius(self),
        }


def slater_certificate(problems, xi_bar, q_lower: float = None) -> SlaterCertificate:
    """Build a certificate for resource problems at the point ``xi_bar``.

    ``q_lower`` defaults to ``q(0)``, the unconstrained minimum of the
    objective, lowered by ``1e-9 (1 + |q|)`` to absorb solver tolerance.
    """
    from .oracle import unconstrained_minimum

    if len(xi_bar) != len(problems):
        raise ValueError("one Slater block per agent is required")
    xs = [np.asarray(x, dtype=float) for x in xi_bar]
    g = sum(p.R @ x - p.r for p, x in zip(problems, xs))
    cone = problems[0].cone
    phi = float(sum(p.objective(x) for p, x in zip(problems, xs)))
    if not np.isfinite(phi):
        raise NotSlaterError("Slater point lies outside the domain of the objective")
    if q_lower is None:
        q = unconstrained_minimum(problems)
        q_lower = q - 1e-9 * (1.0 + abs(q))
    return SlaterCertificate(xs, g, cone, phi, float(q_lower), compute_r_tilde(g, cone))


def dual_radius(cert: SlaterCertificate) -> float:
    """``(Phi(xi_bar) - q) / r_tilde``, a bound on the norm of every dual optimum."""
    if not cert.r_tilde > 0:
        raise NotSlaterError("r_tilde must be positive")
    gap = cert.phi_bar - cert.q_lower
    if gap == 0:
        log.warning("degenerate dual radius: primal value equals the dual lower bound")
    return gap / cert.r_tilde
