"""Pseudo-arclength continuation of periodic pulses with fold detection."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .collocation import (
    CONT_PARAMS,
    FLAT_LEVEL,
    BVPSolution,
    ConvergenceError,
    Discretisation,
    adapt_mesh,
    newton_pulse,
)
from .io import write_csv, write_rows
from .model import NondimParams
from .travelling import FastPoint, ScalingMap, TWPoint, to_fast

log = logging.getLogger(__name__)

__all__ = [
    "BranchPoint",
    "Branch",
    "ContinuationConfig",
    "continue_branch",
    "branch_to_orbit",
    "pulse_at",
    "write_branch_csv",
    "write_profile_csv",
    "write_orbit_csv",
]

BRANCH_COLUMNS = ("continued_param", "A", "B", "D", "H", "eps", "C", "U_max", "V_max", "S_max",
                  "fold_flag")


@dataclass
class BranchPoint:
    params: NondimParams
    C: float
    U_max: float
    V_max: float
    S_max: float
    arclength: float
    fold: bool = False
    lower_branch: bool = False
    solution: BVPSolution | None = field(default=None, repr=False, compare=False)

    def value(self, name: str) -> float:
        return getattr(self.params, name)


@dataclass
class Branch:
    points: list[BranchPoint]
    continued_parameter: str
    fold_indices: list[int] = field(default_factory=list)
    termination: str = ""

    @property
    def parameter_values(self) -> np.ndarray:
        return np.array([p.value(self.continued_parameter) for p in self.points])

    @property
    def speeds(self) -> np.ndarray:
        return np.array([p.C for p in self.points])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points])

    def upper(self) -> "Branch":
        """Points before the first fold (the branch the pulse was started on)."""
        pts = [p for p in self.points if not p.lower_branch]
        return Branch(pts, self.continued_parameter, [i for i in self.fold_indices if i < len(pts)],
                      self.termination)

    @property
    def folds(self) -> list[BranchPoint]:
        return [self.points[i] for i in self.fold_indices]


@dataclass
class ContinuationConfig:
    step: float = 0.05
    min_step: float = 1e-6
    max_step: float = 0.5
    max_points: int = 400
    newton_max_iter: int = 12
    fast_iterations: int = 4
    grow: float = 1.5
    adapt_every: int = 5
    fold_tol: float = 1e-4
    stop_after_fold: int | None = 10
    keep_solutions: bool = True

    def __post_init__(self) -> None:
        if not (0 < self.min_step <= self.step <= self.max_step):
            raise ValueError("need 0 < min_step <= step <= max_step")


# ---------------------------------------------------------------------------
# state vectors  X = (y, C, lam)


@dataclass
class _State:
    disc: Discretisation
    y: np.ndarray
    C: float
    lam: float


def _weighted_dot(disc, a, b) -> float:
    return disc.inner(a[0], b[0]) + a[1] * b[1] + a[2] * b[2]


def _normalise(disc, t):
    n = math.sqrt(_weighted_dot(disc, t, t))
    return (t[0] / n, t[1] / n, t[2] / n)


def _tangent(st: _State, P: NondimParams, pname: str, orient) -> tuple:
    """Kernel direction of the (y, C, lam) Jacobian, oriented along ``orient``."""
    disc = st.disc
    Pl = P.replace(**{pname: st.lam})
    Jy, colC, colp = disc.jacobian(st.y, st.C, Pl, pname)
    phase = disc.phase_row(st.y)
    oy, oC, ol = orient
    J = sp.bmat([[Jy, sp.csc_matrix(colC[:, None]), sp.csc_matrix(colp[:, None])],
                 [sp.csc_matrix(phase[None, :]), None, None],
                 [sp.csc_matrix(disc.norm_row(oy)[None, :]), sp.csc_matrix([[oC]]),
                  sp.csc_matrix([[ol]])]], format="csc")
    rhs = np.zeros(disc.n_y + 2)
    rhs[-1] = 1.0
    t = spla.splu(J).solve(rhs)
    n = disc.n_y
    tan = _normalise(disc, (t[:n], t[n], t[n + 1]))
    if _weighted_dot(disc, tan, orient) < 0:
        tan = (-tan[0], -tan[1], -tan[2])
    return tan


def _correct(st: _State, P, pname, direction, ds, cfg: ContinuationConfig):
    """Predict along ``direction`` by ``ds`` and correct on the arclength hyperplane."""
    disc = st.disc
    dy, dC, dl = direction
    y0 = st.y + ds * dy
    C0 = st.C + ds * dC
    l0 = st.lam + ds * dl
    ry = disc.norm_row(dy)
    rhs = ds + ry @ st.y + dC * st.C + dl * st.lam
    y, C, lam, hist, _ = newton_pulse(
        disc, y0, C0, P.replace(**{pname: l0}), y_ref=st.y, max_iter=cfg.newton_max_iter,
        extra=(pname, l0, ry, dC, dl, rhs),
    )
    return _State(disc, y, C, lam), len(hist) - 1


def _point(st: _State, P, pname, arclength, lower, keep) -> BranchPoint:
    Pl = P.replace(**{pname: st.lam})
    sol = BVPSolution(st.disc, st.y.copy(), st.C, Pl,
                      phase_value=0.0,
                      residual_norm=float(np.max(np.abs(st.disc.residual(st.y, st.C, Pl)))))
    umax, vmax, smax = sol.maxima()
    return BranchPoint(Pl, st.C, umax, vmax, smax, arclength, lower_branch=lower,
                       solution=sol if keep else None)


def continue_branch(start: BVPSolution, parameter: str, bounds: tuple[float, float],
                    direction: int = -1, cfg: ContinuationConfig | None = None) -> Branch:
    """Follow the pulse family through ``parameter`` until it leaves ``bounds``.

    ``direction`` sets the initial sign of the parameter change. Folds are
    located where the parameter component of the tangent changes sign, then
    refined by bisection in arclength; the refined fold is inserted as a branch
    point with ``fold=True`` and every point past an odd number of folds is
    tagged ``lower_branch``.
    """
    if parameter not in CONT_PARAMS:
        raise ValueError(f"cannot continue in {parameter!r}; choose from {CONT_PARAMS}")
    cfg = cfg or ContinuationConfig()
    lo, hi = bounds
    P = start.params
    lam0 = getattr(P, parameter)
    if not lo <= lam0 <= hi:
        raise ValueError(f"start value {parameter}={lam0} outside range {bounds}")
    if start.residual_norm > 1e-8:
        raise ValueError("start solution is not converged")

    st = _State(start.disc, start.y.copy(), start.C, lam0)
    zero_y = np.zeros_like(st.y)
    tan = _tangent(st, P, parameter, (zero_y, 0.0, float(np.sign(direction) or -1)))
    arclen = 0.0
    lower = False
    points = [_point(st, P, parameter, arclen, lower, cfg.keep_solutions)]
    fold_idx: list[int] = []
    ds = cfg.step
    secant = tan
    since_adapt = 0
    steps_after_fold = 0
    reason = "max_points"

    while len(points) < cfg.max_points:
        try:
            new, iters = _correct(st, P, parameter, secant, ds, cfg)
        except ConvergenceError as exc:
            ds *= 0.5
            log.debug("step rejected (%s); ds -> %.3g", exc, ds)
            if ds < cfg.min_step:
                reason = f"step underflow below min_step={cfg.min_step:g} at {parameter}={st.lam:.6g}"
                break
            continue
        new_tan = _tangent(new, P, parameter, secant)
        vmax = float(np.max(new.y.reshape(-1, 4)[:, 1]))
        if vmax < FLAT_LEVEL:
            reason = f"pulse lost (V_max < {FLAT_LEVEL:g}) at {parameter}={new.lam:.6g}"
            break

        if np.sign(new_tan[2]) != np.sign(tan[2]) and tan[2] != 0:
            fst, fs = _refine_fold(st, tan, secant, ds, P, parameter, cfg)
            fp = _point(fst, P, parameter, arclen + fs, lower, cfg.keep_solutions)
            lower = not lower
            fp.fold = True
            fold_idx.append(len(points))
            points.append(fp)
            log.info("fold at %s=%.6f, C=%.6f", parameter, fst.lam, fst.C)
            steps_after_fold = 0

        arclen += ds
        # exact secant for the next predictor
        d = (new.y - st.y, new.C - st.C, new.lam - st.lam)
        secant = _normalise(new.disc, d)
        st, tan = new, new_tan
        points.append(_point(st, P, parameter, arclen, lower, cfg.keep_solutions))
        if fold_idx:
            steps_after_fold += 1

        if not lo <= st.lam <= hi:
            reason = f"left range {bounds}"
            break
        if cfg.stop_after_fold is not None and fold_idx and steps_after_fold >= cfg.stop_after_fold:
            reason = "stopped after fold"
            break

        if iters <= cfg.fast_iterations:
            ds = min(ds * cfg.grow, cfg.max_step)
        since_adapt += 1
        if cfg.adapt_every and since_adapt >= cfg.adapt_every:
            st, secant, tan = _remesh(st, secant, tan, P, parameter, cfg)
            since_adapt = 0

    log.info("branch in %s finished: %d points, %s", parameter, len(points), reason)
    return Branch(points, parameter, fold_idx, reason)


def _remesh(st: _State, secant, tan, P, pname, cfg):
    disc = Discretisation(adapt_mesh(st.disc, st.y), st.disc.m)
    y = disc.interpolate_from(st.disc, st.y)
    sec = (disc.interpolate_from(st.disc, secant[0]), secant[1], secant[2])
    sec = _normalise(disc, sec)
    tmp = _State(disc, y, st.C, st.lam)
    new, _ = _correct(tmp, P, pname, sec, 0.0, cfg)
    t = (disc.interpolate_from(st.disc, tan[0]), tan[1], tan[2])
    new_tan = _tangent(new, P, pname, t)
    return new, sec, new_tan


def _refine_fold(st: _State, tan, secant, ds, P, pname, cfg):
    """Bisect in arclength between st (s=0) and s=ds for the tangent sign change."""
    sign0 = np.sign(tan[2])
    a, b = 0.0, ds
    lam_a, lam_b = st.lam, None
    best = st
    best_s = 0.0
    for _ in range(60):
        mid = 0.5 * (a + b)
        m_st, _ = _correct(st, P, pname, secant, mid, cfg)
        m_tan = _tangent(m_st, P, pname, secant)
        if np.sign(m_tan[2]) == sign0:
            a, lam_a = mid, m_st.lam
        else:
            b, lam_b = mid, m_st.lam
        best, best_s = m_st, mid
        if lam_b is not None and abs(lam_a - lam_b) < cfg.fold_tol:
            break
    return best, best_s


def pulse_at(branch: Branch, value: float, lower: bool = False, max_halvings: int = 6) -> BVPSolution:
    """Newton-solve at an exact parameter value, starting from the nearest stored point.

    The guess follows the branch tangent; if Newton fails the parameter step is halved.
    """
    name = branch.continued_parameter
    cands = [p for p in branch.points if p.solution is not None and p.lower_branch == lower]
    if not cands:
        raise ValueError("branch stores no solutions on the requested side")
    near = min(cands, key=lambda p: abs(p.value(name) - value))
    sol = near.solution
    st = _State(sol.disc, sol.y, sol.C, getattr(sol.params, name))
    P = sol.params
    hist: list[float] = []
    phase = 0.0
    halvings = 0
    while st.lam != value:
        target = value if halvings == 0 else st.lam + (value - st.lam) / 2**halvings
        ty, tC, tl = _tangent(st, P, name, (np.zeros_like(st.y), 0.0, 1.0))
        dl = (target - st.lam) / tl
        try:
            y, C, _, hist, phase = newton_pulse(st.disc, st.y + dl * ty, st.C + dl * tC,
                                                P.replace(**{name: float(target)}), y_ref=st.y)
        except ConvergenceError:
            halvings += 1
            if halvings > max_halvings:
                raise
            continue
        st = _State(st.disc, y, C, float(target))
        halvings = max(0, halvings - 1)
    if not hist:  # already on a stored point
        return sol.with_params(P.replace(**{name: float(value)}))
    return BVPSolution(st.disc, st.y, st.C, P.replace(**{name: float(value)}), phase_value=phase,
                       residual_norm=hist[-1], history=hist)


# ---------------------------------------------------------------------------
# orbits and export


def branch_to_orbit(bp: BranchPoint | BVPSolution, m: ScalingMap | None = None,
                    per_interval: int = 8) -> tuple[np.ndarray, FastPoint]:
    """Sample a pulse and map it to fast coordinates (w, v, q, s).

    Without an explicit ScalingMap the one built from the pulse's own speed is used.
    """
    sol = bp.solution if isinstance(bp, BranchPoint) else bp
    if sol is None:
        raise ValueError("branch point carries no solution (keep_solutions=False)")
    P = sol.params
    if m is None:
        m = ScalingMap.from_speed(sol.C, P.eps, P.A)
    xi, Y = sol.dense(per_interval)
    f = to_fast(TWPoint(*Y.T), m, P)
    return xi, f


def write_branch_csv(branch: Branch, path) -> Path:
    rows = []
    for p in branch.points:
        P = p.params
        rows.append([branch.continued_parameter, P.A, P.B, P.D, P.H, P.eps, p.C,
                     p.U_max, p.V_max, p.S_max, p.fold])
    return write_rows(path, BRANCH_COLUMNS, rows)


def write_profile_csv(sol: BVPSolution, path, per_interval: int = 8) -> Path:
    xi, Y = sol.dense(per_interval)
    return write_csv(path, ("xi", "U", "V", "Q", "S"), [xi, *Y.T])


def write_orbit_csv(path, tag: str, xi: np.ndarray, f: FastPoint) -> Path:
    n = len(xi)
    return write_csv(path, ("tag", "arclength", "w", "v", "q", "s"),
                     [[tag] * n, xi, f.w, f.v, f.q, f.s])
