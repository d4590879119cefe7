"""Periodic orthogonal collocation for travelling pulses.

A pulse of speed C is a periodic orbit of period L of the comoving-frame ODE
y' = f(y; C, params) with y = (U, V, Q, S). The orbit is represented by
continuous piecewise polynomials of degree m on a nonuniform mesh of [0, L];
each interval carries m + 1 equispaced Lagrange nodes (the last shared with
the next interval, wrapping periodically) and the ODE is imposed at the m
Gauss-Legendre points of every interval. The unknown speed C is balanced by
the integral phase condition  int <y, y_ref'> dxi = 0.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import NondimParams
from .travelling import FastPoint, ScalingMap, from_fast

log = logging.getLogger(__name__)

__all__ = [
    "BVPSolution",
    "PulseGuess",
    "ConvergenceError",
    "TrivialSolutionError",
    "Discretisation",
    "tw_vector_field",
    "adapt_mesh",
    "mesh_from_density",
    "solve_pulse",
    "guess_from_snapshot",
    "guess_from_skeleton",
]

N_COMP = 4
CONT_PARAMS = ("A", "D", "H", "eps")
RES_TOL = 1e-9
FLAT_LEVEL = 1e-6


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, history: list[float] | None = None):
        super().__init__(message)
        self.history = list(history or [])


class TrivialSolutionError(RuntimeError):
    """Newton landed on (or started from) the flat desert state."""


# ---------------------------------------------------------------------------
# reference element


@lru_cache(maxsize=None)
def _lagrange_coeffs(m: int) -> np.ndarray:
    nodes = np.linspace(0.0, 1.0, m + 1)
    vander = nodes[:, None] ** np.arange(m + 1)[None, :]
    # column i holds the monomial coefficients of the i-th Lagrange polynomial
    return np.linalg.inv(vander)


def basis(t: np.ndarray, m: int, deriv: int = 0) -> np.ndarray:
    """Lagrange basis (or its derivative) on [0, 1]; shape (len(t), m + 1)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    p = np.arange(m + 1)
    coef = np.ones(m + 1)
    powers = p.astype(float)
    for _ in range(deriv):
        coef = coef * powers
        powers = powers - 1
    mono = np.where(powers >= 0, coef * t[:, None] ** np.maximum(powers, 0), 0.0)
    return mono @ _lagrange_coeffs(m)


@lru_cache(maxsize=None)
def _gauss(m: int) -> tuple[np.ndarray, np.ndarray]:
    g, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (g + 1.0), 0.5 * w


# ---------------------------------------------------------------------------
# vector field


def tw_vector_field(y: np.ndarray, C: float, P: NondimParams, with_jac: bool = False):
    """Comoving-frame field on arrays of shape (..., 4).

    Returns f and, with ``with_jac``, the state Jacobian (..., 4, 4) and a dict
    of parameter derivatives (..., 4) for C and every continuation parameter.
    """
    U, V, Q, S = y[..., 0], y[..., 1], y[..., 2], y[..., 3]
    eps = P.eps
    kappa = eps / (1.0 + eps * C)
    CD = C * P.D
    V2 = V * V
    g = U - P.A + U * V2
    f = np.empty(y.shape)
    f[..., 0] = kappa * g
    f[..., 1] = Q
    f[..., 2] = P.B * V - U * V2 + P.H * S * V - C * Q
    f[..., 3] = (S - P.B * V - P.H * S * V) / CD
    if not with_jac:
        return f
    J = np.zeros(y.shape + (N_COMP,))
    J[..., 0, 0] = kappa * (1.0 + V2)
    J[..., 0, 1] = 2.0 * kappa * U * V
    J[..., 1, 2] = 1.0
    J[..., 2, 0] = -V2
    J[..., 2, 1] = P.B - 2.0 * U * V + P.H * S
    J[..., 2, 2] = -C
    J[..., 2, 3] = P.H * V
    J[..., 3, 1] = -(P.B + P.H * S) / CD
    J[..., 3, 3] = (1.0 - P.H * V) / CD
    zero = np.zeros(y.shape[:-1])
    d = {}
    d["C"] = np.stack([-(eps**2) / (1.0 + eps * C) ** 2 * g, zero, -Q, -f[..., 3] / C], axis=-1)
    d["A"] = np.stack([np.full_like(U, -kappa), zero, zero, zero], axis=-1)
    d["eps"] = np.stack([g / (1.0 + eps * C) ** 2, zero, zero, zero], axis=-1)
    d["B"] = np.stack([zero, zero, V, -V / CD], axis=-1)
    d["H"] = np.stack([zero, zero, S * V, -S * V / CD], axis=-1)
    d["D"] = np.stack([zero, zero, zero, -f[..., 3] / P.D], axis=-1)
    return f, J, d


# ---------------------------------------------------------------------------
# discretisation


class Discretisation:
    """Index bookkeeping and evaluation for a given mesh and degree."""

    def __init__(self, mesh: np.ndarray, degree: int = 4):
        mesh = np.asarray(mesh, dtype=float)
        if mesh[0] != 0.0 or np.any(np.diff(mesh) <= 0):
            raise ValueError("mesh must start at 0 and be strictly increasing")
        self.mesh = mesh
        self.L = float(mesh[-1])
        self.h = np.diff(mesh)
        self.N = self.h.size
        self.m = degree
        self.n_y = self.N * degree * N_COMP
        g, wg = _gauss(degree)
        self.gauss_t = g
        self.gauss_w = wg
        self.Lval = basis(g, degree)
        self.Lder = basis(g, degree, deriv=1)
        self.gauss_x = mesh[:-1, None] + self.h[:, None] * g[None, :]
        # global node number of local node i of interval j (wrapping at the end)
        j = np.arange(self.N)[:, None]
        i = np.arange(degree + 1)[None, :]
        self.node_index = (j * degree + i) % (self.N * degree)

    @property
    def node_x(self) -> np.ndarray:
        t = np.arange(self.m) / self.m
        return (self.mesh[:-1, None] + self.h[:, None] * t[None, :]).ravel()

    def full(self, y: np.ndarray) -> np.ndarray:
        """Nodal values per interval, shape (N, m + 1, 4)."""
        nodes = y.reshape(self.N * self.m, N_COMP)
        return nodes[self.node_index]

    def at_gauss(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Yf = self.full(y)
        Yg = np.einsum("ri,jik->jrk", self.Lval, Yf)
        dY = np.einsum("ri,jik->jrk", self.Lder, Yf) / self.h[:, None, None]
        return Yg, dY

    def evaluate(self, y: np.ndarray, x: np.ndarray, deriv: int = 0) -> np.ndarray:
        """Piecewise polynomial (or derivative) at points x; shape (len(x), 4)."""
        x = np.mod(np.atleast_1d(np.asarray(x, dtype=float)), self.L)
        j = np.clip(np.searchsorted(self.mesh, x, side="right") - 1, 0, self.N - 1)
        t = (x - self.mesh[j]) / self.h[j]
        out = np.einsum("pi,pik->pk", basis(t, self.m, deriv), self.full(y)[j])
        if deriv:
            out /= self.h[j][:, None] ** deriv
        return out

    def sample(self, y: np.ndarray, per_interval: int = 8, deriv: int = 0):
        """Evaluate on ``per_interval`` equispaced points of every interval."""
        t = np.arange(per_interval) / per_interval
        B = basis(t, self.m, deriv)
        vals = np.einsum("ri,jik->jrk", B, self.full(y))
        if deriv:
            vals = vals / self.h[:, None, None] ** deriv
        x = self.mesh[:-1, None] + self.h[:, None] * t[None, :]
        return x.ravel(), vals.reshape(-1, N_COMP)

    def integrate(self, values_at_gauss: np.ndarray) -> float:
        return float(np.einsum("j,r,jr...->...", self.h, self.gauss_w, values_at_gauss).sum())

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """L2 inner product of two nodal vectors, divided by L."""
        Ag, _ = self.at_gauss(a)
        Bg, _ = self.at_gauss(b)
        return float(np.einsum("j,r,jrk,jrk->", self.h, self.gauss_w, Ag, Bg)) / self.L

    def interpolate_from(self, other: "Discretisation", y_other: np.ndarray) -> np.ndarray:
        return other.evaluate(y_other, self.node_x).ravel()

    # -- residual and Jacobian ------------------------------------------------

    def residual(self, y, C, P):
        Yg, dY = self.at_gauss(y)
        return (dY - tw_vector_field(Yg, C, P)).ravel()

    def jacobian(self, y, C, P, cont_param: str | None = None):
        """Sparse Jacobian of the collocation residual w.r.t. y, and columns for C
        and (optionally) the continuation parameter."""
        Yg, _ = self.at_gauss(y)
        _, Jf, d = tw_vector_field(Yg, C, P, with_jac=True)
        N, m = self.N, self.m
        # block[j, r, k, i, l] = Lder[r,i]/h_j delta_kl - Jf[j,r,k,l] Lval[r,i]
        eye = np.eye(N_COMP)
        block = (
            self.Lder[None, :, None, :, None] / self.h[:, None, None, None, None]
            * eye[None, None, :, None, :]
            - Jf[:, :, :, None, :] * self.Lval[None, :, None, :, None]
        )
        rows = np.broadcast_to(
            (np.arange(N)[:, None, None] * m + np.arange(m)[None, :, None]) * N_COMP
            + np.arange(N_COMP)[None, None, :],
            (N, m, N_COMP),
        )[:, :, :, None, None]
        cols = (
            self.node_index[:, None, None, :, None] * N_COMP
            + np.arange(N_COMP)[None, None, None, None, :]
        )
        shape5 = (N, m, N_COMP, m + 1, N_COMP)
        rows = np.broadcast_to(rows, shape5).ravel()
        cols = np.broadcast_to(cols, shape5).ravel()
        Jy = sp.csc_matrix((block.ravel(), (rows, cols)), shape=(self.n_y, self.n_y))
        col_C = -d["C"].ravel()
        col_p = -d[cont_param].ravel() if cont_param else None
        return Jy, col_C, col_p

    def phase_row(self, y_ref: np.ndarray) -> np.ndarray:
        """Gradient of  int <y, y_ref'> dxi  with respect to the nodal values of y."""
        _, dref = self.at_gauss(y_ref)
        w = self.h[:, None, None] * self.gauss_w[None, :, None] * dref  # (N, m, 4)
        contrib = np.einsum("jrk,ri->jik", w, self.Lval)  # (N, m+1, 4)
        row = np.zeros((self.N * self.m, N_COMP))
        np.add.at(row, self.node_index.ravel(), contrib.reshape(-1, N_COMP))
        return row.ravel()

    def norm_row(self, t_y: np.ndarray) -> np.ndarray:
        """Gradient of inner(y, t_y) with respect to y."""
        Tg, _ = self.at_gauss(t_y)
        w = self.h[:, None, None] * self.gauss_w[None, :, None] * Tg / self.L
        contrib = np.einsum("jrk,ri->jik", w, self.Lval)
        row = np.zeros((self.N * self.m, N_COMP))
        np.add.at(row, self.node_index.ravel(), contrib.reshape(-1, N_COMP))
        return row.ravel()


# ---------------------------------------------------------------------------
# mesh selection


def mesh_from_density(x: np.ndarray, rho: np.ndarray, L: float, n_intervals: int,
                      uniform_share: float = 0.2, smooth: int = 5) -> np.ndarray:
    """Equidistribute a sampled density (plus a uniform floor) over [0, L]."""
    x = np.asarray(x, dtype=float)
    rho = np.asarray(rho, dtype=float)
    order = np.argsort(x)
    x, rho = x[order], rho[order]
    if smooth > 1:
        kernel = np.ones(smooth) / smooth
        rho = np.convolve(np.pad(rho, smooth, mode="wrap"), kernel, mode="same")[smooth:-smooth]
    # close the periodic loop
    xs = np.concatenate([[x[-1] - L], x, [x[0] + L]])
    rs = np.concatenate([[rho[-1]], rho, [rho[0]]])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (rs[1:] + rs[:-1]) * np.diff(xs))])
    total_rho = np.interp(L, xs, cum) - np.interp(0.0, xs, cum)
    floor = uniform_share / (1.0 - uniform_share) * total_rho / L if total_rho > 0 else 1.0
    cum = cum + floor * (xs - xs[0])
    c0, c1 = np.interp(0.0, xs, cum), np.interp(L, xs, cum)
    targets = np.linspace(c0, c1, n_intervals + 1)
    mesh = np.interp(targets, cum, xs)
    mesh[0], mesh[-1] = 0.0, L
    return mesh


def density_from_samples(x: np.ndarray, Y: np.ndarray, deriv2: np.ndarray | None = None) -> np.ndarray:
    """Curvature monitor sqrt(sum_k |y_k''| / range_k) on samples (x, Y[n, 4])."""
    if deriv2 is None:
        d1 = np.gradient(Y, x, axis=0)
        deriv2 = np.gradient(d1, x, axis=0)
    ranges = np.ptp(Y, axis=0)
    ranges[ranges == 0] = 1.0
    return np.sqrt(np.sum(np.abs(deriv2) / ranges, axis=1))


def adapt_mesh(disc: Discretisation, y: np.ndarray, n_intervals: int | None = None) -> np.ndarray:
    x, Y = disc.sample(y, per_interval=8)
    _, Y2 = disc.sample(y, per_interval=8, deriv=2)
    rho = density_from_samples(x, Y, Y2)
    return mesh_from_density(x, rho, disc.L, n_intervals or disc.N)


# ---------------------------------------------------------------------------
# solutions


@dataclass
class PulseGuess:
    """Sampled profile (xi in [0, L), values (n, 4) of U, V, Q, S) and a speed."""

    xi: np.ndarray
    Y: np.ndarray
    C: float
    L: float
    source: str = "samples"

    def __post_init__(self) -> None:
        order = np.argsort(self.xi)
        self.xi = np.asarray(self.xi, dtype=float)[order]
        self.Y = np.asarray(self.Y, dtype=float)[order]

    def on(self, disc: Discretisation) -> np.ndarray:
        xs = np.concatenate([self.xi, [self.xi[0] + self.L]])
        Ys = np.vstack([self.Y, self.Y[:1]])
        xn = disc.node_x
        return np.stack([np.interp(xn, xs, Ys[:, k]) for k in range(N_COMP)], axis=1).ravel()


def guess_from_snapshot(x: np.ndarray, u: np.ndarray, v: np.ndarray, s: np.ndarray, C: float,
                        L: float, peak_at: float = 0.5) -> PulseGuess:
    """Periodic PDE snapshot on a uniform grid, shifted so the V peak sits at peak_at * L.

    Q is the centred difference of V.
    """
    x = np.asarray(x, dtype=float)
    dx = x[1] - x[0]
    q = (np.roll(v, -1) - np.roll(v, 1)) / (2.0 * dx)
    xi = (x - x[np.argmax(v)] + peak_at * L) % L
    return PulseGuess(xi, np.column_stack([u, v, q, s]), C, L, source="snapshot")


def guess_from_skeleton(sk, P: NondimParams, L: float, peak_at: float = 0.5,
                        trim: float = 0.05, n_background: int = 4000) -> PulseGuess:
    """Profile assembled from a singular skeleton.

    Away from the pulse the slow legs give U = A (1 - exp(kappa d)) and
    S = S* exp(d / (C D)) at distance d < 0 behind it; the two fast legs, cut
    where they come within ``trim`` of p2, are mapped back through the rescaling
    and glued at the V peak.
    """
    m = ScalingMap(sk.c_star, P.eps, P.A)
    C = m.C
    kappa = P.eps / (1.0 + P.eps * C)
    k_xi = m.xi_per_tau
    p2 = np.array([sk.a, sk.a, 0.0, 0.0])

    def cut(seg, keep_before):
        dist = np.max(np.abs(seg.points - p2), axis=1)
        far = dist >= trim
        idx = np.flatnonzero(far)
        sel = slice(0, idx[idx < np.argmin(dist)].max() + 1) if keep_before else slice(idx[idx > np.argmin(dist)].min(), None)
        return seg.t[sel], seg.points[sel]

    t1, f1 = cut(sk.segment("fast1"), True)
    t2, f2 = cut(sk.segment("fast2"), False)
    # drop the exact end points appended to the integrated legs
    t1, f1 = t1[1:], f1[1:]
    t2, f2 = t2[:-1], f2[:-1]
    xi_p = peak_at * L
    xi1 = xi_p + k_xi * (t1 - t1[-1])
    xi2 = xi_p + k_xi * (t2 - t2[0])
    fast = np.vstack([f1, f2])
    tw = from_fast(FastPoint(*fast.T), m, P)
    xi_fast = np.concatenate([xi1, xi2])
    order = np.argsort(xi_fast)
    xi_fast = xi_fast[order]
    Y_fast = np.column_stack(tw)[order]
    # keep strictly increasing abscissae
    keep = np.concatenate([[True], np.diff(xi_fast) > 1e-9])
    xi_fast, Y_fast = xi_fast[keep], Y_fast[keep]

    s_star = sk.s_star / m.amp_scale
    xb = np.linspace(0.0, L, n_background, endpoint=False)
    d = np.mod(xb - xi_p, L) - L
    Yb = np.column_stack([P.A * (1.0 - np.exp(kappa * d)), np.zeros_like(d), np.zeros_like(d),
                          s_star * np.exp(d / (C * P.D))])
    outside = (xb < xi_fast[0]) | (xb > xi_fast[-1])
    xi = np.concatenate([xb[outside], np.mod(xi_fast, L)])
    Y = np.vstack([Yb[outside], Y_fast])
    return PulseGuess(xi, Y, C, L, source="skeleton")


@dataclass
class BVPSolution:
    disc: Discretisation
    y: np.ndarray
    C: float
    params: NondimParams
    phase_value: float = 0.0
    residual_norm: float = math.inf
    history: list[float] = field(default_factory=list)

    @property
    def mesh(self) -> np.ndarray:
        return self.disc.mesh

    @property
    def L(self) -> float:
        return self.disc.L

    @property
    def degree(self) -> int:
        return self.disc.m

    def evaluate(self, xi: np.ndarray) -> np.ndarray:
        return self.disc.evaluate(self.y, xi)

    def dense(self, per_interval: int = 8) -> tuple[np.ndarray, np.ndarray]:
        return self.disc.sample(self.y, per_interval)

    def maxima(self) -> tuple[float, float, float]:
        _, Y = self.dense(16)
        return float(Y[:, 0].max()), float(Y[:, 1].max()), float(Y[:, 3].max())

    def closure_mismatch(self) -> float:
        """|y(L) - y(0)| from the last and first interval polynomials."""
        Yf = self.disc.full(self.y)
        end = basis(np.array([1.0]), self.degree)[0] @ Yf[-1]
        start = basis(np.array([0.0]), self.degree)[0] @ Yf[0]
        return float(np.max(np.abs(end - start)))

    def peak_position(self) -> float:
        x, Y = self.dense(16)
        return float(x[np.argmax(Y[:, 1])])

    def field_state(self, grid, t: float = 0.0):
        """Profile sampled at the cell centres of a simulator grid (x = xi)."""
        from .pde import FieldState

        if not np.isclose(grid.length, self.L, rtol=1e-12):
            raise ValueError(f"grid length {grid.length} differs from the period {self.L}")
        Y = self.evaluate(grid.x)
        return FieldState(t, np.maximum(Y[:, 0], 0.0), np.maximum(Y[:, 1], 0.0),
                          np.maximum(Y[:, 3], 0.0))

    def with_params(self, P: NondimParams) -> "BVPSolution":
        return BVPSolution(self.disc, self.y.copy(), self.C, P, self.phase_value,
                           self.residual_norm, list(self.history))


# ---------------------------------------------------------------------------
# Newton


def _is_flat(disc: Discretisation, y: np.ndarray) -> bool:
    return float(np.max(np.abs(y.reshape(-1, N_COMP)[:, 1]))) < FLAT_LEVEL


def newton_pulse(disc: Discretisation, y0: np.ndarray, C0: float, P: NondimParams,
                 y_ref: np.ndarray, max_iter: int = 40, tol: float = RES_TOL,
                 extra=None):
    """Damped Newton on (y, C[, lam]) with the phase condition against y_ref.

    ``extra`` (optional) adds a continuation parameter:
    (name, lam0, row_y, row_C, row_lam, rhs_fn) where the extra equation is
    row_y.y + row_C C + row_lam lam = rhs (linear, pseudo-arclength).
    """
    phase = disc.phase_row(y_ref)
    y, C = y0.copy(), float(C0)
    lam = None
    if extra is not None:
        pname, lam, ry, rC, rl, rhs = extra
    hist: list[float] = []

    def params_for(lam_):
        return P if extra is None else P.replace(**{pname: lam_})

    def full_residual(y_, C_, lam_):
        Pl = params_for(lam_)
        F = disc.residual(y_, C_, Pl)
        parts = [F, [phase @ y_]]
        if extra is not None:
            parts.append([ry @ y_ + rC * C_ + rl * lam_ - rhs])
        return np.concatenate(parts)

    R = full_residual(y, C, lam)
    norm = float(np.max(np.abs(R)))
    hist.append(norm)
    for it in range(max_iter):
        if norm <= tol and it > 0:
            break
        Pl = params_for(lam)
        Jy, colC, colp = disc.jacobian(y, C, Pl, pname if extra is not None else None)
        n = disc.n_y
        if extra is None:
            J = sp.bmat([[Jy, sp.csc_matrix(colC[:, None])],
                         [sp.csc_matrix(phase[None, :]), None]], format="csc")
        else:
            J = sp.bmat([[Jy, sp.csc_matrix(colC[:, None]), sp.csc_matrix(colp[:, None])],
                         [sp.csc_matrix(phase[None, :]), None, None],
                         [sp.csc_matrix(ry[None, :]), sp.csc_matrix([[rC]]), sp.csc_matrix([[rl]])]],
                        format="csc")
        try:
            delta = spla.splu(J).solve(-R)
        except RuntimeError as exc:  # exactly singular
            raise ConvergenceError(f"singular Jacobian: {exc}", hist) from exc
        if not np.all(np.isfinite(delta)):
            raise ConvergenceError("non-finite Newton update", hist)
        step = 1.0
        while True:
            y_new = y + step * delta[:n]
            C_new = C + step * delta[n]
            lam_new = lam + step * delta[n + 1] if extra is not None else None
            if C_new > 0 and (extra is None or _valid_param(pname, lam_new)):
                R_new = full_residual(y_new, C_new, lam_new)
                norm_new = float(np.max(np.abs(R_new)))
                if np.isfinite(norm_new) and (norm_new < norm or step < 1.0 / 64 or norm <= tol):
                    break
            step *= 0.5
            if step < 1.0 / 256:
                raise ConvergenceError("line search failed", hist)
        y, C, lam, R, norm = y_new, C_new, lam_new, R_new, norm_new
        hist.append(norm)
        if norm <= tol and float(np.max(np.abs(delta))) * step < 1e-6:
            break
    if norm > tol:
        raise ConvergenceError(
            f"Newton did not converge in {max_iter} iterations (|F|={norm:.3e})", hist
        )
    return y, C, lam, hist, float(phase @ y)


def _valid_param(name: str, value: float) -> bool:
    return value > 0 if name != "H" else value >= 0


def solve_pulse(guess: PulseGuess, P: NondimParams, n_intervals: int = 200, degree: int = 4,
                adapt_rounds: int = 2, mesh: np.ndarray | None = None,
                max_iter: int = 40) -> BVPSolution:
    """Newton-converged periodic pulse of period ``guess.L`` with C solved for."""
    L = guess.L
    if mesh is None:
        rho = density_from_samples(guess.xi, guess.Y)
        mesh = mesh_from_density(guess.xi, rho, L, n_intervals)
    disc = Discretisation(mesh, degree)
    y = guess.on(disc)
    if _is_flat(disc, y):
        res = float(np.max(np.abs(disc.residual(y, guess.C, P))))
        raise TrivialSolutionError(
            f"initial guess is flat (max V < {FLAT_LEVEL:g}); residual {res:.2e} "
            "-- the desert state solves the problem for every C"
        )
    _check_antipode(guess, P)
    C = guess.C
    history: list[float] = []
    for rnd in range(adapt_rounds + 1):
        y, C, _, hist, phase_val = newton_pulse(disc, y, C, P, y_ref=y, max_iter=max_iter)
        history += hist
        if _is_flat(disc, y):
            raise TrivialSolutionError("Newton collapsed onto the flat desert state")
        if rnd < adapt_rounds:
            new_disc = Discretisation(adapt_mesh(disc, y, n_intervals), degree)
            y = new_disc.interpolate_from(disc, y)
            disc = new_disc
    sol = BVPSolution(disc, y, C, P, phase_value=phase_val, residual_norm=hist[-1], history=history)
    log.info("pulse converged: C=%.8f, |F|=%.2e, final round iterations=%d", C, hist[-1], len(hist) - 1)
    return sol


def _check_antipode(guess: PulseGuess, P: NondimParams) -> None:
    i_peak = int(np.argmax(guess.Y[:, 1]))
    x_anti = (guess.xi[i_peak] + 0.5 * guess.L) % guess.L
    j = int(np.argmin(np.abs(guess.xi - x_anti)))
    gap = abs(guess.Y[j, 0] - P.A)
    if gap > 1e-3:
        log.warning("U at the pulse antipode differs from A by %.2e; the period may be "
                    "too short to approximate a homoclinic orbit", gap)
