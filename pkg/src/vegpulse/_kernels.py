"""Numba kernels for the periodic 1D simulator.

Every update is elementwise with periodic neighbours, so results do not
depend on evaluation order and are exactly equivariant under cyclic shifts.
Status codes: 0 ok, 1 negative value, 2 non-finite value.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

NONNEG_TOL = 1e-12


@njit(cache=True)
def _vs_rhs(u, v, s, dv, ds, B, H, D, inv_dx2):
    n = v.size
    inv_D = 1.0 / D
    for i in range(1, n - 1):
        vi = v[i]
        dv[i] = vi * vi * u[i] - B * vi - H * s[i] * vi + (v[i + 1] - 2.0 * vi + v[i - 1]) * inv_dx2
        ds[i] = (B * vi + H * s[i] * vi - s[i]) * inv_D
    for i in (0, n - 1):
        vi = v[i]
        lap = v[(i + 1) % n] - 2.0 * vi + v[i - 1]
        dv[i] = vi * vi * u[i] - B * vi - H * s[i] * vi + lap * inv_dx2
        ds[i] = (B * vi + H * s[i] * vi - s[i]) * inv_D


@njit(cache=True)
def _vs_ssprk3(u, v, s, h, B, H, D, inv_dx2, v1, s1, dv, ds):
    """Three-stage SSP Runge-Kutta step for (V, S) with U frozen, in place."""
    n = v.size
    _vs_rhs(u, v, s, dv, ds, B, H, D, inv_dx2)
    for i in range(n):
        v1[i] = v[i] + h * dv[i]
        s1[i] = s[i] + h * ds[i]
    _vs_rhs(u, v1, s1, dv, ds, B, H, D, inv_dx2)
    for i in range(n):
        v1[i] = 0.75 * v[i] + 0.25 * (v1[i] + h * dv[i])
        s1[i] = 0.75 * s[i] + 0.25 * (s1[i] + h * ds[i])
    _vs_rhs(u, v1, s1, dv, ds, B, H, D, inv_dx2)
    for i in range(n):
        v[i] = v[i] / 3.0 + 2.0 / 3.0 * (v1[i] + h * dv[i])
        s[i] = s[i] / 3.0 + 2.0 / 3.0 * (s1[i] + h * ds[i])


@njit(cache=True)
def _u_char_cell(u_i, u_j, v_i, v_j, dt, courant, A):
    u_dep = (1.0 - courant) * u_i + courant * u_j
    v2_dep = (1.0 - courant) * v_i * v_i + courant * v_j * v_j
    lam = 1.0 + 0.5 * (v_i * v_i + v2_dep)
    decay = math.exp(-lam * dt)
    return u_dep * decay + A * (1.0 - decay) / lam


@njit(cache=True)
def _u_characteristic(u, v, dt, courant, A, out):
    """Donor-cell transport of U towards -x combined with exact integration of
    the linear kinetics dU/dt = A - (1 + V^2) U along the characteristic."""
    n = u.size
    for i in range(n - 1):
        out[i] = _u_char_cell(u[i], u[i + 1], v[i], v[i + 1], dt, courant, A)
    out[n - 1] = _u_char_cell(u[n - 1], u[0], v[n - 1], v[0], dt, courant, A)
    for i in range(n):
        u[i] = out[i]


@njit(cache=True)
def _check(u, v, s):
    bad = 0
    for i in range(u.size):
        # NaN fails both comparisons
        ok = (u[i] >= -NONNEG_TOL) & (u[i] <= 1e300) & (v[i] >= -NONNEG_TOL) & (v[i] <= 1e300)
        ok = ok & (s[i] >= -NONNEG_TOL) & (s[i] <= 1e300)
        bad += not ok
    if bad == 0:
        return 0
    for i in range(u.size):
        if not (math.isfinite(u[i]) and math.isfinite(v[i]) and math.isfinite(s[i])):
            return 2
    return 1


@njit(cache=True)
def advance_characteristic(u, v, s, n_steps, dt, dx, eps, A, B, H, D, check_sign):
    """Strang-split steps: half (V,S) SSP-RK3, full U transport, half (V,S)."""
    n = u.size
    v1 = np.empty(n)
    s1 = np.empty(n)
    dv = np.empty(n)
    ds = np.empty(n)
    tmp = np.empty(n)
    inv_dx2 = 1.0 / (dx * dx)
    courant = dt / (eps * dx)
    for k in range(n_steps):
        _vs_ssprk3(u, v, s, 0.5 * dt, B, H, D, inv_dx2, v1, s1, dv, ds)
        _u_characteristic(u, v, dt, courant, A, tmp)
        _vs_ssprk3(u, v, s, 0.5 * dt, B, H, D, inv_dx2, v1, s1, dv, ds)
        status = _check(u, v, s)
        if status == 2 or (status == 1 and check_sign):
            return status, k + 1
    return 0, n_steps


@njit(cache=True)
def _full_rhs(u, v, s, du, dv, ds, A, B, H, D, inv_dx2, inv_eps_dx):
    n = u.size
    for i in range(n):
        ui, vi, si = u[i], v[i], s[i]
        j = i + 1 if i < n - 1 else 0
        v2u = vi * vi * ui
        du[i] = A - ui - v2u + (u[j] - ui) * inv_eps_dx
        dv[i] = v2u - B * vi - H * si * vi + (v[j] - 2.0 * vi + v[i - 1 if i > 0 else n - 1]) * inv_dx2
        ds[i] = (B * vi + H * si * vi - si) / D


@njit(cache=True)
def advance_mol_upwind(u, v, s, n_steps, dt, dx, eps, A, B, H, D, check_sign):
    """Method of lines: first-order upwind U_x, central V_xx, SSP-RK3 in time."""
    n = u.size
    u1 = np.empty(n)
    v1 = np.empty(n)
    s1 = np.empty(n)
    du = np.empty(n)
    dv = np.empty(n)
    ds = np.empty(n)
    inv_dx2 = 1.0 / (dx * dx)
    inv_eps_dx = 1.0 / (eps * dx)
    for k in range(n_steps):
        _full_rhs(u, v, s, du, dv, ds, A, B, H, D, inv_dx2, inv_eps_dx)
        for i in range(n):
            u1[i] = u[i] + dt * du[i]
            v1[i] = v[i] + dt * dv[i]
            s1[i] = s[i] + dt * ds[i]
        _full_rhs(u1, v1, s1, du, dv, ds, A, B, H, D, inv_dx2, inv_eps_dx)
        for i in range(n):
            u1[i] = 0.75 * u[i] + 0.25 * (u1[i] + dt * du[i])
            v1[i] = 0.75 * v[i] + 0.25 * (v1[i] + dt * dv[i])
            s1[i] = 0.75 * s[i] + 0.25 * (s1[i] + dt * ds[i])
        _full_rhs(u1, v1, s1, du, dv, ds, A, B, H, D, inv_dx2, inv_eps_dx)
        for i in range(n):
            u[i] = u[i] / 3.0 + 2.0 / 3.0 * (u1[i] + dt * du[i])
            v[i] = v[i] / 3.0 + 2.0 / 3.0 * (v1[i] + dt * dv[i])
            s[i] = s[i] / 3.0 + 2.0 / 3.0 * (s1[i] + dt * ds[i])
        status = _check(u, v, s)
        if status == 2 or (status == 1 and check_sign):
            return status, k + 1
    return 0, n_steps
