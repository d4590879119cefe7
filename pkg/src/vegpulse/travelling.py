"""Comoving-frame ODEs and the asymptotic rescaling to fast coordinates.

With xi = x - C t a travelling wave solves the first-order system in
(U, V, Q = V_xi, S). The rescaling

    V = v / (c eps^(2/3)),  Q = q / eps,  S = s / (c eps^(2/3)),
    xi = c^2 eps^(1/3) tau,  C = c eps^(-1/3),  delta = eps^(2/3) c

turns it into the fast system, which is written either in u = U or in
w = (1 + delta) u + q + v + D s.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import NondimParams

__all__ = [
    "TWPoint",
    "FastPoint",
    "ScalingMap",
    "tw_rhs",
    "to_fast",
    "from_fast",
    "fast_rhs_w",
    "fast_rhs_u",
]


class TWPoint(NamedTuple):
    U: np.ndarray | float
    V: np.ndarray | float
    Q: np.ndarray | float
    S: np.ndarray | float


class FastPoint(NamedTuple):
    """Point of the fast system; ``u`` is the optional pre-w coordinate."""

    w: np.ndarray | float
    v: np.ndarray | float
    q: np.ndarray | float
    s: np.ndarray | float
    u: np.ndarray | float | None = None

    @property
    def wvqs(self) -> np.ndarray:
        return np.array([self.w, self.v, self.q, self.s], dtype=float)


@dataclass(frozen=True)
class ScalingMap:
    """Rescaled speed c together with eps and A; delta, C and a are derived."""

    c: float
    eps: float
    A: float

    def __post_init__(self) -> None:
        if not (self.c > 0 and self.eps > 0):
            raise ValueError("ScalingMap needs c > 0 and eps > 0")

    @classmethod
    def from_speed(cls, C: float, eps: float, A: float) -> "ScalingMap":
        return cls(c=C * eps ** (1.0 / 3.0), eps=eps, A=A)

    @property
    def delta(self) -> float:
        return self.eps ** (2.0 / 3.0) * self.c

    @property
    def C(self) -> float:
        return self.eps ** (-1.0 / 3.0) * self.c

    @property
    def a(self) -> float:
        return (1.0 + self.delta) * self.A

    @property
    def amp_scale(self) -> float:
        """Factor c eps^(2/3) with v = factor * V and s = factor * S."""
        return self.c * self.eps ** (2.0 / 3.0)

    @property
    def xi_per_tau(self) -> float:
        return self.c**2 * self.eps ** (1.0 / 3.0)


def tw_rhs(p: TWPoint, P: NondimParams, C: float) -> TWPoint:
    if C <= 0:
        raise ValueError(f"wave speed must be positive, got {C}")
    if C * P.D == 0:
        raise ValueError("C*D vanishes; S_xi is undefined")
    U, V, Q, S = p
    kappa = P.eps / (1.0 + P.eps * C)
    UV2 = U * V * V
    return TWPoint(
        U=kappa * (U - P.A + UV2),
        V=Q,
        Q=P.B * V - UV2 + P.H * S * V - C * Q,
        S=(S - P.B * V - P.H * S * V) / (C * P.D),
    )


def to_fast(p: TWPoint, m: ScalingMap, P: NondimParams) -> FastPoint:
    U, V, Q, S = (np.asarray(x, dtype=float) for x in p)
    k = m.amp_scale
    v, q, s = k * V, m.eps * Q, k * S
    w = (1.0 + m.delta) * U + q + v + P.D * s
    return FastPoint(w=w, v=v, q=q, s=s, u=U)


def from_fast(f: FastPoint, m: ScalingMap, P: NondimParams) -> TWPoint:
    w, v, q, s = (np.asarray(x, dtype=float) for x in f[:4])
    u = (w - q - v - P.D * s) / (1.0 + m.delta)
    k = m.amp_scale
    return TWPoint(U=u, V=v / k, Q=q / m.eps, S=s / k)


def fast_rhs_w(f: FastPoint, P: NondimParams, m: ScalingMap) -> FastPoint:
    """Fast system in (w, v, q, s); derivative with respect to tau."""
    w, v, q, s = f[:4]
    d, c3 = m.delta, m.c**3
    u_part = w - q - v - P.D * s
    dw = d * s + d * d / (1.0 + d) * (u_part - m.a)
    dv = c3 * q
    dq = d * P.B * v - u_part * v * v / (1.0 + d) + P.H * s * v - c3 * q
    ds = (d * s - d * P.B * v - P.H * s * v) / P.D
    return FastPoint(w=dw, v=dv, q=dq, s=ds)


def fast_rhs_u(f: FastPoint, P: NondimParams, m: ScalingMap) -> FastPoint:
    """Fast system in (u, v, q, s); ``w`` of the result is d/dtau of the w-identity."""
    if f.u is None:
        raise ValueError("fast_rhs_u needs the u coordinate")
    u, v, q, s = f.u, f.v, f.q, f.s
    d, c3 = m.delta, m.c**3
    uv2 = u * v * v
    du = (uv2 + d * d * (u - P.A)) / (1.0 + d)
    dv = c3 * q
    dq = d * P.B * v - uv2 + P.H * s * v - c3 * q
    ds = (d * s - d * P.B * v - P.H * s * v) / P.D
    dw = (1.0 + d) * du + dq + dv + P.D * ds
    return FastPoint(w=dw, v=dv, q=dq, s=ds, u=du)


def tw_rhs_array(y: np.ndarray, P: NondimParams, C: float) -> np.ndarray:
    return np.array(tw_rhs(TWPoint(*y), P, C))


def fast_rhs_w_array(y: np.ndarray, P: NondimParams, m: ScalingMap) -> np.ndarray:
    return np.array(fast_rhs_w(FastPoint(*y), P, m)[:4])
