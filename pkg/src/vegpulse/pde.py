"""Direct simulation of the nondimensional model on a periodic 1D grid."""
from __future__ import annotations

import json
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .io import fmt_float, write_csv
from .model import NondimParams

__all__ = [
    "Grid1D",
    "FieldState",
    "GaussianPulse",
    "InitialCondition",
    "SimConfig",
    "Trajectory",
    "SpeedEstimate",
    "SimulationError",
    "PulseExtinctError",
    "step",
    "simulate",
    "track_peak",
    "estimate_wave_speed",
    "write_trajectory",
    "fig4_setup",
]

log = logging.getLogger(__name__)

SCHEMES = ("characteristic", "mol-upwind")
EXTINCTION_LEVEL = 1e-6
R2_WARN = 0.999


class SimulationError(RuntimeError):
    """Raised when a step cannot be taken or produces an invalid state."""


class PulseExtinctError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid of cell centres; the length is dx * n_cells."""

    n_cells: int
    dx: float

    def __post_init__(self) -> None:
        if self.n_cells < 16:
            raise ValueError(f"need at least 16 cells, got {self.n_cells}")
        if not self.dx > 0:
            raise ValueError("dx must be positive")

    @classmethod
    def from_length(cls, length: float, n_cells: int) -> "Grid1D":
        return cls(n_cells=n_cells, dx=length / n_cells)

    @property
    def length(self) -> float:
        return self.dx * self.n_cells

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx


@dataclass
class FieldState:
    t: float
    u: np.ndarray
    v: np.ndarray
    s: np.ndarray

    def __post_init__(self) -> None:
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.s = np.asarray(self.s, dtype=float)
        if not (self.u.shape == self.v.shape == self.s.shape) or self.u.ndim != 1:
            raise ValueError("u, v, s must be 1D arrays of equal length")

    def copy(self) -> "FieldState":
        return FieldState(self.t, self.u.copy(), self.v.copy(), self.s.copy())


@dataclass(frozen=True)
class GaussianPulse:
    center: float
    sigma: float
    amplitude: float

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.amplitude < 0:
            raise ValueError("amplitude must be nonnegative")

    def __call__(self, x: np.ndarray, length: float) -> np.ndarray:
        # periodic distance to the centre
        d = (x - self.center + 0.5 * length) % length - 0.5 * length
        return self.amplitude * np.exp(-0.5 * (d / self.sigma) ** 2)


@dataclass(frozen=True)
class InitialCondition:
    u0: float
    s0: float
    v0: GaussianPulse | float

    def build(self, grid: Grid1D) -> FieldState:
        x = grid.x
        if isinstance(self.v0, GaussianPulse):
            v = self.v0(x, grid.length)
        else:
            v = np.full(grid.n_cells, float(self.v0))
        return FieldState(
            t=0.0,
            u=np.full(grid.n_cells, float(self.u0)),
            v=v,
            s=np.full(grid.n_cells, float(self.s0)),
        )


@dataclass(frozen=True)
class SimConfig:
    """Time stepping controls.

    ``dt=None`` picks the largest stable step, cfl_safety * min(eps dx, dx^2/2).
    With cfl_safety = 1 the U transport then runs at unit Courant number, where
    donor-cell upwinding is exact translation by one cell.
    """

    t_end: float
    output_every: float
    dt: float | None = None
    cfl_safety: float = 1.0
    scheme: str = "characteristic"
    check_nonnegative: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.t_end < 0 or self.output_every <= 0:
            raise ValueError("need t_end >= 0 and output_every > 0")

    def dt_max(self, P: NondimParams, grid: Grid1D) -> float:
        return self.cfl_safety * min(P.eps * grid.dx, 0.5 * grid.dx**2)

    def resolve_dt(self, P: NondimParams, grid: Grid1D) -> float:
        bound = self.dt_max(P, grid)
        if self.dt is None:
            return bound
        if self.dt > bound * (1 + 1e-12):
            raise SimulationError(
                f"dt={self.dt:g} violates the CFL bound {bound:g} "
                f"(cfl_safety={self.cfl_safety}, dx={grid.dx:g}, eps={P.eps:g})"
            )
        return self.dt


def _advance(state: FieldState, P: NondimParams, grid: Grid1D, cfg: SimConfig,
             dt: float, n_steps: int) -> FieldState:
    if state.u.size != grid.n_cells:
        raise ValueError("state does not match grid")
    out = state.copy()
    kernel = (
        _kernels.advance_characteristic
        if cfg.scheme == "characteristic"
        else _kernels.advance_mol_upwind
    )
    status, done = kernel(
        out.u, out.v, out.s, int(n_steps), float(dt), float(grid.dx), float(P.eps),
        float(P.A), float(P.B), float(P.H), float(P.D), bool(cfg.check_nonnegative),
    )
    out.t = state.t + done * dt
    if status == 2:
        raise SimulationError(f"non-finite value at t={out.t:.6g} (step {done})")
    if status == 1:
        lo = min(out.u.min(), out.v.min(), out.s.min())
        raise SimulationError(f"negative value {lo:.3e} at t={out.t:.6g} (step {done})")
    return out


def step(state: FieldState, P: NondimParams, grid: Grid1D, cfg: SimConfig) -> FieldState:
    """Advance ``state`` by one time step."""
    dt = cfg.resolve_dt(P, grid)
    return _advance(state, P, grid, cfg, dt, 1)


@dataclass
class Trajectory:
    grid: Grid1D
    params: NondimParams
    config: SimConfig
    dt: float
    snapshots: list[FieldState] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def final(self) -> FieldState:
        return self.snapshots[-1]


def simulate(ic: InitialCondition | FieldState, P: NondimParams, grid: Grid1D,
             cfg: SimConfig) -> Trajectory:
    """Integrate to ``cfg.t_end`` storing a snapshot every ``cfg.output_every``."""
    dt = cfg.resolve_dt(P, grid)
    state = ic.build(grid) if isinstance(ic, InitialCondition) else ic.copy()
    steps_per_output = max(1, int(round(cfg.output_every / dt)))
    n_total = int(math.ceil(cfg.t_end / dt - 1e-9))
    traj = Trajectory(grid=grid, params=P, config=cfg, dt=dt, snapshots=[state.copy()])
    t0 = time.perf_counter()
    done = 0
    while done < n_total:
        n = min(steps_per_output, n_total - done)
        state = _advance(state, P, grid, cfg, dt, n)
        done += n
        traj.snapshots.append(state.copy())
    traj.metadata = {
        "steps": done,
        "dt": dt,
        "wall_time_s": time.perf_counter() - t0,
        "scheme": cfg.scheme,
    }
    log.info("simulated %d steps (dt=%.3g) in %.1fs", done, dt, traj.metadata["wall_time_s"])
    return traj


def track_peak(v: np.ndarray, dx: float) -> float:
    """Sub-cell location of max V from a parabola through log V at the argmax."""
    n = v.size
    i = int(np.argmax(v))
    vm, v0, vp = v[i - 1], v[i], v[(i + 1) % n]
    offset = 0.0
    if min(vm, v0, vp) > 0:
        lm, l0, lp = math.log(vm), math.log(v0), math.log(vp)
        curv = lm - 2.0 * l0 + lp
        if curv < 0:
            offset = 0.5 * (lm - lp) / curv
    return (i + 0.5 + offset) * dx


@dataclass(frozen=True)
class SpeedEstimate:
    speed: float
    r2: float
    window: tuple[float, float]
    n_points: int


def estimate_wave_speed(trajectory: Trajectory | Sequence[FieldState],
                        window: tuple[float, float] | None = None,
                        transient_fraction: float = 0.2,
                        dx: float | None = None) -> SpeedEstimate:
    """Least-squares slope of the unwrapped peak position of V against time."""
    if isinstance(trajectory, Trajectory):
        snaps = trajectory.snapshots
        dx = trajectory.grid.dx
    else:
        snaps = list(trajectory)
        if dx is None:
            raise ValueError("dx is required for a bare snapshot sequence")
    times = np.array([s.t for s in snaps])
    if window is None:
        start = int(math.floor(transient_fraction * len(snaps)))
        sel = np.arange(start, len(snaps))
    else:
        sel = np.flatnonzero((times >= window[0]) & (times <= window[1]))
    if sel.size < 10:
        raise ValueError(f"need at least 10 snapshots in the fit window, got {sel.size}")
    length = snaps[0].v.size * dx
    pos = []
    for i in sel:
        v = snaps[i].v
        if v.max() < EXTINCTION_LEVEL:
            raise PulseExtinctError(f"max V = {v.max():.2e} at t={snaps[i].t:.4g}")
        pos.append(track_peak(v, dx))
    pos = np.unwrap(np.array(pos) * (2 * np.pi / length)) * (length / (2 * np.pi))
    t = times[sel]
    slope, intercept = np.polyfit(t, pos, 1)
    resid = pos - (slope * t + intercept)
    ss_tot = float(np.sum((pos - pos.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    if r2 < R2_WARN:
        warnings.warn(f"peak motion is not uniform (r2={r2:.5f})", RuntimeWarning, stacklevel=2)
    return SpeedEstimate(speed=float(slope), r2=r2, window=(float(t[0]), float(t[-1])),
                         n_points=int(sel.size))


def write_trajectory(traj: Trajectory, out_dir: Path | str, tag: str,
                     speed: SpeedEstimate | None = None,
                     every: int = 1) -> list[Path]:
    """Write snapshots as run-<tag>-t<time>.csv plus run-<tag>.json metadata."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    x = traj.grid.x
    paths = []
    for snap in traj.snapshots[::every]:
        path = out_dir / f"run-{tag}-t{snap.t:.4f}.csv"
        write_csv(path, ["x", "u", "v", "s"], [x, snap.u, snap.v, snap.s])
        paths.append(path)
    meta = {
        "params": traj.params.as_dict(),
        "grid": {"length": traj.grid.length, "n_cells": traj.grid.n_cells, "dx": traj.grid.dx},
        "dt": traj.dt,
        "config": {
            "t_end": traj.config.t_end,
            "output_every": traj.config.output_every,
            "cfl_safety": traj.config.cfl_safety,
            "scheme": traj.config.scheme,
        },
        "steps": traj.metadata.get("steps"),
        "speed_estimate": None
        if speed is None
        else {"speed": speed.speed, "r2": speed.r2, "window": list(speed.window)},
    }
    meta_path = out_dir / f"run-{tag}.json"
    meta_path.write_text(json.dumps(meta, indent=2, default=fmt_float))
    paths.append(meta_path)
    return paths


def fig4_setup(n_cells: int = 16384, t_end: float = 60.0, output_every: float = 0.5,
               P: NondimParams | None = None):
    """Parameters, grid, initial data and config of the reference travelling-pulse run."""
    from .model import FIG4_PARAMS

    P = P or FIG4_PARAMS
    grid = Grid1D.from_length(1000.0, n_cells)
    ic = InitialCondition(u0=0.5, s0=0.0, v0=GaussianPulse(center=300.0, sigma=0.4, amplitude=10.0))
    cfg = SimConfig(t_end=t_end, output_every=output_every)
    return P, grid, ic, cfg
