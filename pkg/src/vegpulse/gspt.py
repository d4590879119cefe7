"""Layer problem, reduced flows and the singular skeleton of the pulse.

The layer problem freezes w and evolves (v, q, s) on the fast time tau. Its
equilibria are p1(w) = (w,0,0,0), p2(w) = (w,w,0,0) and the line
p3(w, s) = (w,0,0,s). The singular pulse chains a superslow drift on
{v = q = s = 0}, a slow leg on the line w = D s, a fast jump inside the plane
Pi = {a - v - q - D s = 0} from p3 to p2, and a fast jump inside {s = 0} from
p2 back to p1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.spatial.distance import directed_hausdorff

from .io import write_csv
from .model import NondimParams
from .travelling import FastPoint, ScalingMap

__all__ = [
    "LayerParams",
    "LayerEquilibrium",
    "ShootingResult",
    "ShootingError",
    "ConsistencyError",
    "SlowTrajectory",
    "Segment",
    "SingularSkeleton",
    "layer_rhs",
    "layer_jacobian",
    "eig_p2",
    "eig_p3",
    "shoot_theta0",
    "pi_heteroclinic",
    "slow_flow",
    "w_of_s",
    "w3_star",
    "assemble_skeleton",
    "skeleton_distance",
    "orbit_distance",
    "write_skeleton_csv",
]


class ShootingError(RuntimeError):
    def __init__(self, message: str, scan: list[tuple[float, int]] | None = None):
        super().__init__(message)
        self.scan = list(scan or [])


class ConsistencyError(RuntimeError):
    """Closed-form eigenvalues disagree with the Jacobian."""


@dataclass(frozen=True)
class LayerParams:
    w_level: float
    c: float
    D: float
    H: float

    def __post_init__(self) -> None:
        if not (self.w_level > 0 and self.c > 0 and self.D > 0 and self.H >= 0):
            raise ValueError(f"invalid layer parameters {self}")

    @property
    def c3(self) -> float:
        return self.c**3


@dataclass
class LayerEquilibrium:
    kind: str
    point: FastPoint
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    formula_eigenvalues: np.ndarray | None = None
    hyperbolic: bool = True
    notes: str = ""


def layer_rhs(p, lp: LayerParams) -> np.ndarray:
    """Derivative of (w, v, q, s) for the layer problem."""
    w, v, q, s = (np.asarray(x) for x in tuple(p)[:4])
    c3 = lp.c3
    u_part = w - q - v - lp.D * s
    return np.array([
        np.zeros_like(w * v),
        c3 * q,
        -u_part * v * v + lp.H * s * v - c3 * q,
        -lp.H * s * v / lp.D,
    ])


def layer_jacobian(p, lp: LayerParams) -> np.ndarray:
    """Jacobian of the (v, q, s) layer flow at p = (w, v, q, s)."""
    w, v, q, s = (float(x) for x in tuple(p)[:4])
    c3, D, H = lp.c3, lp.D, lp.H
    u_part = w - q - v - D * s
    return np.array([
        [0.0, c3, 0.0],
        [v * v - 2.0 * u_part * v + H * s, v * v - c3, D * v * v + H * v],
        [-H * s / D, 0.0, -H * v / D],
    ])


def _check_pairs(J: np.ndarray, lam: np.ndarray, vecs: np.ndarray, tol: float) -> float:
    worst = 0.0
    for k, l in enumerate(lam):
        eta = vecs[:, k]
        worst = max(worst, float(np.max(np.abs(J @ eta - l * eta))) / max(1.0, float(np.max(np.abs(eta)))))
    if worst > tol:
        raise ConsistencyError(f"eigenpair residual {worst:.3e} exceeds {tol:g}")
    return worst


def eig_p2(lp: LayerParams, tol: float = 1e-10) -> LayerEquilibrium:
    """p2(w) with eigenvalues w^2 (unstable), -c^3 and -H w / D (stable)."""
    w, c3, D, H = lp.w_level, lp.c3, lp.D, lp.H
    point = FastPoint(w, w, 0.0, 0.0)
    J = layer_jacobian(point, lp)
    formula = np.array([w * w, -c3, -H * w / D])
    vecs = np.array([
        [c3, w * w, 0.0],
        [-1.0, 1.0, 0.0],
        [-c3 * D * D, w * D * H, c3 * D - w * H],
    ]).T
    numeric = np.linalg.eigvals(J).real
    mismatch = np.max(np.abs(np.sort(numeric) - np.sort(formula)))
    if mismatch > tol * max(1.0, float(np.max(np.abs(formula)))):
        raise ConsistencyError(f"p2 eigenvalues disagree with the Jacobian by {mismatch:.3e}")
    # the third vector degenerates when the two stable eigenvalues coincide
    if np.linalg.norm(vecs[:, 2]) > 0:
        _check_pairs(J, formula, vecs, tol)
    hyper = H > 0
    return LayerEquilibrium("p2", point, formula, vecs, formula_eigenvalues=formula, hyperbolic=hyper,
                            notes="" if hyper else "H = 0: eigenvalue -Hw/D vanishes, p2 not hyperbolic")


def eig_p3(lp: LayerParams, s_bar: float) -> LayerEquilibrium:
    """p3(w, s_bar); eigenvalues from the Jacobian, the closed form kept for comparison."""
    if s_bar < 0:
        raise ValueError("s_bar must be nonnegative")
    c15 = lp.c**1.5
    point = FastPoint(lp.w_level, 0.0, 0.0, s_bar)
    J = layer_jacobian(point, lp)
    lam, vecs = np.linalg.eig(J)
    order = np.argsort(lam.real)
    lam, vecs = lam[order], vecs[:, order]
    if np.all(np.abs(lam.imag) < 1e-14):
        lam, vecs = lam.real, vecs.real
    root = math.sqrt(lp.c3 + 4.0 * lp.H * s_bar)
    formula = np.array([-0.5 * c15 * (-c15 + root), -0.5 * c15 * (-c15 - root)])
    hyper = s_bar > 0 and lp.H > 0
    return LayerEquilibrium(
        "p3", point, lam, vecs, formula_eigenvalues=formula, hyperbolic=hyper,
        notes="closed-form pair solves l^2 - c^3 l - c^3 H s; the Jacobian gives l^2 + c^3 l - c^3 H s",
    )


# ---------------------------------------------------------------------------
# shooting for the heteroclinic p2 -> p1 in {s = 0}


@dataclass
class ShootingResult:
    w_level: float
    c_star: float
    theta0: float
    tau: np.ndarray
    orbit: np.ndarray  # rows (v, q)
    scan: list[tuple[float, int]] = field(default_factory=list)
    too_small_sign: int = -1


def _planar(c3: float, w: float):
    def f(t, y):
        v, q = y
        return [c3 * q, -(w - q - v) * v * v - c3 * q]
    return f


def _shot(c: float, w: float, h: float, tau_max: float, dense: bool = False):
    """Classify one launch: -1 if v + q reaches 0 (c too small), +1 if the orbit is
    captured by the centre manifold of the origin (c too large), 0 if undecided."""
    c3 = c**3
    e = np.array([c3, w * w])
    y0 = np.array([w, 0.0]) - h * e / np.linalg.norm(e)

    def crossed(t, y):
        return y[0] + y[1]
    crossed.terminal, crossed.direction = True, -1

    v_floor = 1e-2 * w

    def captured(t, y):
        return min(v_floor - y[0], y[1] + 0.5 * y[0])
    captured.terminal, captured.direction = True, 1

    sol = solve_ivp(_planar(c3, w), (0.0, tau_max), y0, method="DOP853", rtol=1e-10,
                    atol=1e-12, events=[crossed, captured], dense_output=dense)
    if sol.t_events[0].size:
        return -1, sol
    if sol.t_events[1].size:
        return 1, sol
    return 0, sol


def _classify(c, w, h, tau_max, scan):
    outcome, sol = _shot(c, w, h, tau_max)
    if outcome == 0:
        outcome, sol = _shot(c, w, h, 2.0 * tau_max)
    scan.append((float(c), outcome))
    if outcome == 0:
        raise ShootingError(f"no classification event for c={c:.10g} within tau={2 * tau_max:g}", scan)
    return outcome


def shoot_theta0(w_level: float = 1.0, c_bracket: tuple[float, float] | None = None,
                 h: float = 1e-6, tol: float = 1e-8, tau_max: float = 2000.0,
                 scan_points: int = 9) -> ShootingResult:
    """Bisect on c for the connection from (w, 0) to the origin of the planar layer flow."""
    if w_level <= 0:
        raise ValueError("w_level must be positive")
    w = float(w_level)
    lo, hi = c_bracket or (0.5 * w ** (2.0 / 3.0), 1.5 * w ** (2.0 / 3.0))
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < c_lo < c_hi")
    scan: list[tuple[float, int]] = []
    outcomes = [_classify(c, w, h, tau_max, scan) for c in np.linspace(lo, hi, scan_points)]
    switches = int(np.sum(np.diff(outcomes) != 0))
    if switches != 1:
        raise ShootingError(
            f"bracket [{lo:g}, {hi:g}] does not isolate a single connection ({switches} switches)", scan
        )
    lo_sign = outcomes[0]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _classify(mid, w, h, tau_max, scan) == lo_sign:
            lo = mid
        else:
            hi = mid
    c_star = 0.5 * (lo + hi)
    # orbit at the bracket side that undershoots, truncated at its closest approach to 0
    _, sol = _shot(lo, w, h, tau_max, dense=True)
    tau = sol.t
    orbit = sol.y.T
    k = int(np.argmin(np.hypot(orbit[:, 0], orbit[:, 1])))
    return ShootingResult(w, c_star, c_star**1.5 / w, tau[: k + 1], orbit[: k + 1], scan,
                          too_small_sign=lo_sign)


# ---------------------------------------------------------------------------
# the plane Pi


def pi_heteroclinic(lp: LayerParams, h: float = 1e-8, tol: float = 1e-8,
                    tau_max: float = 5000.0) -> tuple[np.ndarray, np.ndarray]:
    """Unstable separatrix of p3(a, a/D) inside Pi, run into p2(a).

    Returns tau and rows (w, v, q, s), starting exactly at p3 and ending within
    ``tol`` of p2.
    """
    if lp.H == 0:
        raise ValueError("H = 0: the plane dynamics reduce to q' = -c^3 q; no heteroclinic p3 -> p2")
    a, c3, D, H = lp.w_level, lp.c3, lp.D, lp.H
    k = H / D

    def f(t, y):
        v, q = y
        return [c3 * q, k * (a - q - v) * v - c3 * q]

    lam_u = 0.5 * (-c3 + math.sqrt(c3 * c3 + 4.0 * c3 * k * a))
    e = np.array([c3, lam_u])
    y0 = h * e / np.linalg.norm(e)

    def arrived(t, y):
        return math.hypot(y[0] - a, y[1]) - tol
    arrived.terminal, arrived.direction = True, -1

    sol = solve_ivp(f, (0.0, tau_max), y0, method="DOP853", rtol=1e-12, atol=1e-14, events=arrived)
    if not sol.t_events[0].size:
        raise RuntimeError("Pi heteroclinic did not reach p2 within tau_max")
    tau = np.concatenate([[0.0], sol.t])
    vq = np.vstack([[0.0, 0.0], sol.y.T])
    v, q = vq[:, 0], vq[:, 1]
    pts = np.column_stack([np.full_like(v, a), v, q, (a - v - q) / D])
    return tau, pts


# ---------------------------------------------------------------------------
# slow flows


@dataclass
class SlowTrajectory:
    sigma: np.ndarray
    w: np.ndarray
    s: np.ndarray
    closed_form: bool


def slow_flow(sigma: np.ndarray, ic: tuple[float, float], P: NondimParams, m: ScalingMap,
              closed_form: bool = True) -> SlowTrajectory:
    """Flow on {v = q = 0}:  w' = s + delta/(1+delta) (w - D s - a),  s' = s / D,
    started from (w, s) = ic at sigma = 0."""
    sigma = np.asarray(sigma, dtype=float)
    d, a, D = m.delta, m.a, P.D
    w0, s0 = ic
    if closed_form:
        c1, c2 = s0, w0 - a
        w = a + c1 * D * np.exp(sigma / D) + (c2 - c1 * D) * np.exp(d * sigma / (1.0 + d))
        s = c1 * np.exp(sigma / D)
        return SlowTrajectory(sigma, w, s, True)

    def f(t, y):
        w_, s_ = y
        return [s_ + d / (1.0 + d) * (w_ - D * s_ - a), s_ / D]

    out_w = np.empty_like(sigma)
    out_s = np.empty_like(sigma)
    for sel in (sigma >= 0, sigma < 0):
        if not sel.any():
            continue
        ts = sigma[sel]
        end = ts.max() if ts[0] >= 0 else ts.min()
        sol = solve_ivp(f, (0.0, end), [w0, s0], method="DOP853", rtol=1e-13, atol=1e-14,
                        dense_output=True)
        y = sol.sol(ts)
        out_w[sel], out_s[sel] = y
    return SlowTrajectory(sigma, out_w, out_s, False)


def w_of_s(s, k1: float, a: float, D: float, delta: float):
    """Slow orbits as graphs:  w = a + D s + k1 (s (1 + delta))^(delta D / (1 + delta))."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("w(s) is defined for s > 0 only")
    return a + D * s + k1 * (s * (1.0 + delta)) ** (delta * D / (1.0 + delta))


def w3_star(s, s_star_delta: float, a: float, D: float, delta: float):
    """The member of the w(s) family passing through (s*_delta, a)."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("w3*(s) is defined for s > 0 only")
    return a + D * s * (1.0 - (s_star_delta / s) ** (1.0 - delta * D / (1.0 + delta)))


# ---------------------------------------------------------------------------
# singular skeleton


@dataclass
class Segment:
    tag: str
    t: np.ndarray
    points: np.ndarray  # rows (w, v, q, s)


@dataclass
class SingularSkeleton:
    segments: list[Segment]
    s_star: float
    c_star: float
    theta0: float
    a: float

    @property
    def points(self) -> np.ndarray:
        return np.vstack([seg.points for seg in self.segments])

    def junction_gaps(self) -> list[float]:
        segs = self.segments
        return [float(np.max(np.abs(segs[i].points[-1] - segs[(i + 1) % len(segs)].points[0])))
                for i in range(len(segs))]

    def segment(self, tag: str) -> Segment:
        return next(s for s in self.segments if s.tag == tag)


def assemble_skeleton(P: NondimParams, m: ScalingMap, n_slow: int = 200,
                      theta0: float | None = None) -> SingularSkeleton:
    """Chain p1(a) -> origin -> p3(a, a/D) -> p2(a) -> p1(a)."""
    if P.H <= 0:
        raise ValueError("the skeleton needs H > 0")
    a, D = m.a, P.D
    shot = shoot_theta0(a)
    theta0 = shot.theta0 if theta0 is None else theta0
    c_star = shot.c_star
    s_star = a / D

    w_ss = np.linspace(a, 0.0, n_slow)
    superslow = np.column_stack([w_ss, np.zeros((n_slow, 3))])
    s_sl = np.linspace(0.0, s_star, n_slow)
    slow = np.column_stack([D * s_sl, np.zeros(n_slow), np.zeros(n_slow), s_sl])

    lp = LayerParams(a, c_star, D, P.H)
    tau1, pts1 = pi_heteroclinic(lp)
    pts1 = np.vstack([pts1, [a, a, 0.0, 0.0]])
    tau1 = np.append(tau1, tau1[-1])

    v, q = shot.orbit[:, 0], shot.orbit[:, 1]
    pts2 = np.column_stack([np.full_like(v, a), v, q, np.zeros_like(v)])
    pts2 = np.vstack([[a, a, 0.0, 0.0], pts2, [a, 0.0, 0.0, 0.0]])
    tau2 = np.concatenate([[0.0], shot.tau, [shot.tau[-1]]])

    segs = [
        Segment("superslow", np.linspace(0.0, 1.0, n_slow), superslow),
        Segment("slow", np.linspace(0.0, 1.0, n_slow), slow),
        Segment("fast1", tau1, pts1),
        Segment("fast2", tau2, pts2),
    ]
    return SingularSkeleton(segs, s_star, c_star, theta0, a)


def _densify(pts: np.ndarray, spacing: float) -> np.ndarray:
    seg = np.diff(pts, axis=0)
    n = np.maximum(1, np.ceil(np.linalg.norm(seg, axis=1) / spacing).astype(int))
    out = [pts[i] + np.outer(np.arange(n[i]) / n[i], seg[i]) for i in range(len(seg))]
    out.append(pts[-1:])
    return np.vstack(out)


def skeleton_distance(orbit, sk: SingularSkeleton, spacing: float = 1e-3) -> float:
    """Symmetric Hausdorff distance in (v, s, w), each coordinate scaled by its
    range on the skeleton. Both curves are refined to ``spacing`` so the result
    approximates the distance between the polylines, not their vertex sets."""
    orb = _as_points(orbit)
    scale = _vsw_scale(sk)
    X = np.vstack([_densify(seg.points[:, _VSW] / scale, spacing) for seg in sk.segments])
    Y = _densify(orb[:, _VSW] / scale, spacing)
    return max(directed_hausdorff(X, Y, seed=0)[0], directed_hausdorff(Y, X, seed=0)[0])


def orbit_distance(first, second, sk: SingularSkeleton, spacing: float = 1e-3) -> float:
    """Hausdorff distance between two sampled orbits, scaled as in skeleton_distance."""
    scale = _vsw_scale(sk)
    X = _densify(_as_points(first)[:, _VSW] / scale, spacing)
    Y = _densify(_as_points(second)[:, _VSW] / scale, spacing)
    return max(directed_hausdorff(X, Y, seed=0)[0], directed_hausdorff(Y, X, seed=0)[0])


_VSW = [1, 3, 0]


def _as_points(orbit) -> np.ndarray:
    if isinstance(orbit, SingularSkeleton):
        return orbit.points
    if isinstance(orbit, FastPoint):
        return orbit.wvqs.T
    return np.asarray(orbit, dtype=float)


def _vsw_scale(sk: SingularSkeleton) -> np.ndarray:
    scale = np.ptp(sk.points[:, _VSW], axis=0)
    scale[scale == 0] = 1.0
    return scale


def write_skeleton_csv(sk: SingularSkeleton, path) -> Path:
    tags, t, cols = [], [], []
    for seg in sk.segments:
        tags += [seg.tag] * len(seg.t)
        t.append(seg.t)
        cols.append(seg.points)
    pts = np.vstack(cols)
    return write_csv(path, ("tag", "tau", "w", "v", "q", "s"),
                     [tags, np.concatenate(t), pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3]])
