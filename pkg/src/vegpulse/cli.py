"""Command-line front end: ``vegpulse <experiment> --config run.yaml``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import __version__
from .collocation import (
    BVPSolution,
    ConvergenceError,
    TrivialSolutionError,
    guess_from_skeleton,
    guess_from_snapshot,
    solve_pulse,
)
from .continuation import (
    Branch,
    ContinuationConfig,
    branch_to_orbit,
    continue_branch,
    pulse_at,
    write_branch_csv,
    write_orbit_csv,
    write_profile_csv,
)
from .gspt import (
    ConsistencyError,
    ShootingError,
    assemble_skeleton,
    shoot_theta0,
    write_skeleton_csv,
)
from .io import fmt_float, read_csv, write_csv, write_rows
from .model import DimensionalParams, NondimParams, equilibria, nondimensionalise
from .pde import (
    GaussianPulse,
    Grid1D,
    InitialCondition,
    PulseExtinctError,
    SimConfig,
    SimulationError,
    estimate_wave_speed,
    simulate,
    write_trajectory,
)
from .travelling import ScalingMap

log = logging.getLogger("vegpulse")

EXPERIMENTS = ("simulate", "equilibria", "shoot", "skeleton", "solve-pulse", "continue",
               "reproduce-figure")
NUMERICAL_ERRORS = (SimulationError, PulseExtinctError, ConvergenceError, TrivialSolutionError,
                    ShootingError, ConsistencyError, FloatingPointError, np.linalg.LinAlgError)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# schema


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class NondimBlock(_Strict):
    A: float
    B: float
    D: float
    H: float
    eps: float


class DimBlock(_Strict):
    c_growth: float
    d_death: float
    k_decay: float
    l_loss: float
    p_precip: float
    q_toxfrac: float
    r_uptake: float
    s_sens: float
    w_washout: float
    diff_B: float
    nu_adv: float


class ModelBlock(_Strict):
    nondimensional: Optional[NondimBlock] = None
    dimensional: Optional[DimBlock] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.nondimensional is None) == (self.dimensional is None):
            raise ValueError("give exactly one of 'nondimensional' or 'dimensional'")
        return self


class GridBlock(_Strict):
    length: float = 1000.0
    n_cells: int = 16384


class PulseSpec(_Strict):
    center: float = 300.0
    sigma: float = 0.4
    amplitude: float = 10.0


class ICBlock(_Strict):
    u0: float = 0.5
    s0: float = 0.0
    v0: Union[PulseSpec, float] = Field(default_factory=PulseSpec)


class SimBlock(_Strict):
    t_end: float = 60.0
    output_every: float = 0.5
    dt: Optional[float] = None
    cfl_safety: float = 1.0
    scheme: Literal["characteristic", "mol-upwind"] = "characteristic"
    check_nonnegative: bool = True
    transient_fraction: float = 0.2
    window: Optional[tuple[float, float]] = None
    snapshot_stride: int = 20


class ShootBlock(_Strict):
    w_level: float = 1.0
    c_bracket: Optional[tuple[float, float]] = None
    h: float = 1e-6
    tol: float = 1e-8
    tau_max: float = 2000.0


class SkeletonBlock(_Strict):
    # rescaled speed used for delta and a; None takes c* of the shot at w = A
    c: Optional[float] = None


class PulseBlock(_Strict):
    guess: Literal["skeleton", "snapshot"] = "skeleton"
    period: float = 1000.0
    n_intervals: int = 200
    degree: int = 4
    adapt_rounds: int = 2


class ContinuationBlock(_Strict):
    parameter: Literal["A", "H", "D", "eps"] = "A"
    range: tuple[float, float] = (0.3, 1.3)
    direction: Literal[-1, 1] = -1
    step: float = 0.05
    min_step: float = 1e-6
    max_step: float = 0.5
    max_points: int = 400
    adapt_every: int = 5
    stop_after_fold: Optional[int] = 10
    profiles_at: list[float] = Field(default_factory=list)


class FigureBlock(_Strict):
    name: Literal["fig4", "fig5", "fig7", "fig8"] = "fig4"
    H_values: list[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    D_values: list[float] = Field(default_factory=lambda: [2.25, 4.5, 9.0])


class RunConfig(_Strict):
    model: ModelBlock
    experiment: Optional[Literal[EXPERIMENTS]] = None
    grid: GridBlock = Field(default_factory=GridBlock)
    initial_condition: ICBlock = Field(default_factory=ICBlock)
    simulation: SimBlock = Field(default_factory=SimBlock)
    shoot: ShootBlock = Field(default_factory=ShootBlock)
    skeleton: SkeletonBlock = Field(default_factory=SkeletonBlock)
    pulse: PulseBlock = Field(default_factory=PulseBlock)
    continuation: ContinuationBlock = Field(default_factory=ContinuationBlock)
    figure: FigureBlock = Field(default_factory=FigureBlock)
    output_dir: str = "vegpulse-out"
    tag: str = "run"


def load_config(path: Path | str, experiment: str | None = None,
                output_dir: str | None = None, tag: str | None = None) -> RunConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    if experiment is not None:
        if cfg.experiment not in (None, experiment):
            raise ConfigError(f"config names experiment {cfg.experiment!r}, command line {experiment!r}")
        cfg.experiment = experiment
    if cfg.experiment is None:
        raise ConfigError("no experiment given")
    if output_dir is not None:
        cfg.output_dir = output_dir
    if tag is not None:
        cfg.tag = tag
    try:
        resolve_params(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def resolve_params(cfg: RunConfig) -> tuple[NondimParams, dict | None]:
    m = cfg.model
    if m.nondimensional is not None:
        return NondimParams(**m.nondimensional.model_dump()), None
    P, scales = nondimensionalise(DimensionalParams(**m.dimensional.model_dump()))
    info = {"nondimensional": P.as_dict(), "scale_factors": {
        k: getattr(scales, k) for k in ("x_scale", "t_scale", "U_scale", "V_scale", "S_scale")}}
    return P, info


# ---------------------------------------------------------------------------
# experiments


class Run:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.P, self.nondim_info = resolve_params(cfg)
        self.headline: dict = {}
        self.artifacts: list[Path] = []

    def path(self, name: str) -> Path:
        return self.out / name

    def keep(self, *paths) -> None:
        for p in paths:
            if isinstance(p, (list, tuple)):
                self.artifacts.extend(p)
            else:
                self.artifacts.append(p)

    # -- individual experiments --------------------------------------------

    def simulate(self, P: NondimParams | None = None, tag: str | None = None):
        c = self.cfg
        P = P or self.P
        tag = tag or c.tag
        grid = Grid1D.from_length(c.grid.length, c.grid.n_cells)
        v0 = c.initial_condition.v0
        ic = InitialCondition(
            u0=c.initial_condition.u0, s0=c.initial_condition.s0,
            v0=GaussianPulse(**v0.model_dump()) if isinstance(v0, PulseSpec) else float(v0),
        )
        s = c.simulation
        scfg = SimConfig(t_end=s.t_end, output_every=s.output_every, dt=s.dt,
                         cfl_safety=s.cfl_safety, scheme=s.scheme,
                         check_nonnegative=s.check_nonnegative)
        traj = simulate(ic, P, grid, scfg)
        speed = None
        try:
            speed = estimate_wave_speed(traj, window=s.window, transient_fraction=s.transient_fraction)
        except PulseExtinctError as exc:
            self.headline["pulse"] = f"extinct: {exc}"
        except ValueError as exc:
            self.headline["speed_error"] = str(exc)
        self.keep(write_trajectory(traj, self.out, tag, speed, every=s.snapshot_stride))
        fin = traj.final
        self.headline.update({
            "steps": traj.metadata["steps"], "dt": traj.dt, "t_final": fin.t,
            "U_max": float(fin.u.max()), "V_max": float(fin.v.max()), "S_max": float(fin.s.max()),
        })
        if speed is not None:
            self.headline.update({"speed": speed.speed, "r2": speed.r2, "fit_window": list(speed.window)})
        return traj, speed

    def equilibria(self):
        eq = equilibria(self.P)
        rows = [["desert", *eq.desert]]
        if eq.vegetated_plus is not None:
            rows += [["vegetated_plus", *eq.vegetated_plus], ["vegetated_minus", *eq.vegetated_minus]]
        self.keep(write_rows(self.path(f"equilibria-{self.cfg.tag}.csv"), ["kind", "U", "V", "S"], rows))
        self.headline.update({
            "threshold": eq.threshold, "has_vegetated": eq.has_vegetated,
            "states": {r[0]: r[1:] for r in rows}, "boundary": eq.boundary,
            "degenerate": list(eq.degenerate),
        })

    def shoot(self):
        s = self.cfg.shoot
        res = shoot_theta0(s.w_level, s.c_bracket, h=s.h, tol=s.tol, tau_max=s.tau_max)
        v, q = res.orbit.T
        n = v.size
        self.keep(write_csv(self.path(f"shoot-{self.cfg.tag}.csv"), ("tag", "tau", "w", "v", "q", "s"),
                            [["planar"] * n, res.tau, np.full(n, res.w_level), v, q, np.zeros(n)]))
        self.headline.update({"theta0": res.theta0, "c_star": res.c_star, "w_level": res.w_level,
                              "bisection_steps": len(res.scan)})
        return res

    def scaling_map(self) -> ScalingMap:
        c = self.cfg.skeleton.c
        if c is None:
            c = shoot_theta0(self.P.A).c_star
        return ScalingMap(c, self.P.eps, self.P.A)

    def skeleton(self, write: bool = True):
        m = self.scaling_map()
        sk = assemble_skeleton(self.P, m)
        if write:
            self.keep(write_skeleton_csv(sk, self.path(f"skeleton-{self.cfg.tag}.csv")))
        self.headline.update({"s_star": sk.s_star, "c_star": sk.c_star, "theta0": sk.theta0,
                              "a": sk.a, "delta": m.delta, "junction_gaps": sk.junction_gaps()})
        return sk

    def pulse(self, write: bool = True) -> BVPSolution:
        pb = self.cfg.pulse
        if pb.guess == "skeleton":
            sk = assemble_skeleton(self.P, self.scaling_map())
            guess = guess_from_skeleton(sk, self.P, pb.period)
        else:
            traj, speed = self.simulate(tag=f"{self.cfg.tag}-guess")
            if speed is None:
                raise PulseExtinctError("the simulation gave no speed estimate for the guess")
            fin = traj.final
            guess = guess_from_snapshot(traj.grid.x, fin.u, fin.v, fin.s, speed.speed, pb.period)
        sol = solve_pulse(guess, self.P, n_intervals=pb.n_intervals, degree=pb.degree,
                          adapt_rounds=pb.adapt_rounds)
        umax, vmax, smax = sol.maxima()
        self.headline.update({"C": sol.C, "residual_norm": sol.residual_norm,
                              "phase_value": sol.phase_value, "U_max": umax, "V_max": vmax,
                              "S_max": smax, "closure_mismatch": sol.closure_mismatch(),
                              "guess": pb.guess})
        if write:
            tag = self.cfg.tag
            self.keep(write_profile_csv(sol, self.path(f"profile-{tag}.csv")))
            xi, f = branch_to_orbit(sol)
            self.keep(write_orbit_csv(self.path(f"orbit-{tag}.csv"), tag, xi, f))
        return sol

    def _continue(self, sol: BVPSolution, parameter: str, bounds, direction) -> Branch:
        cb = self.cfg.continuation
        ccfg = ContinuationConfig(step=cb.step, min_step=cb.min_step, max_step=cb.max_step,
                                  max_points=cb.max_points, adapt_every=cb.adapt_every,
                                  stop_after_fold=cb.stop_after_fold)
        br = continue_branch(sol, parameter, tuple(bounds), direction, ccfg)
        self.keep(write_branch_csv(br, self.path(f"branch-{self.cfg.tag}-{parameter}.csv")))
        self.headline.setdefault("branches", {})[parameter] = {
            "points": len(br.points), "termination": br.termination,
            "folds": [{parameter: f.value(parameter), "C": f.C} for f in br.folds],
            "C_range": [float(br.speeds.min()), float(br.speeds.max())],
        }
        return br

    def continuation(self):
        cb = self.cfg.continuation
        sol = self.pulse(write=False)
        br = self._continue(sol, cb.parameter, cb.range, cb.direction)
        for value in cb.profiles_at:
            p = pulse_at(br, value)
            self.keep(write_profile_csv(p, self.path(f"profile-{self.cfg.tag}-{cb.parameter}-{value:g}.csv")))
        return br

    # -- figure presets -----------------------------------------------------

    def figure(self):
        name = self.cfg.figure.name
        getattr(self, f"_{name}")()

    def _fig4(self):
        self.simulate()

    def _sweeps(self, sol):
        """Two-sided continuations in H and D around the starting pulse."""
        out = {}
        for name, bounds in (("H", (0.2, 2.1)), ("D", (0.9, 10.5))):
            parts = [continue_branch(sol, name, bounds, d, ContinuationConfig(step=0.1, max_step=0.25))
                     for d in (-1, 1)]
            out[name] = parts
        return out

    def _fig5(self):
        sol = self.pulse(write=False)
        self._continue(sol, "A", (0.3, 1.3), -1)
        for name, parts in self._sweeps(sol).items():
            pts = list(reversed(parts[0].points[1:])) + parts[1].points
            br = Branch(pts, name, [], f"{parts[0].termination}; {parts[1].termination}")
            self.keep(write_branch_csv(br, self.path(f"branch-{self.cfg.tag}-{name}.csv")))
            self.headline.setdefault("branches", {})[name] = {
                "points": len(pts), "C_range": [float(br.speeds.min()), float(br.speeds.max())]}

    def _swept_solutions(self):
        sol = self.pulse(write=False)
        fig = self.cfg.figure
        sweeps = self._sweeps(sol)
        found = []
        for name, values in (("H", fig.H_values), ("D", fig.D_values)):
            for value in values:
                part = sweeps[name][0] if value <= getattr(sol.params, name) else sweeps[name][1]
                found.append((name, value, pulse_at(part, value)))
        return found

    def _fig7(self):
        C = {}
        for name, value, s in self._swept_solutions():
            self.keep(write_profile_csv(s, self.path(f"profile-{self.cfg.tag}-{name}-{value:g}.csv")))
            C[f"{name}={value:g}"] = s.C
        self.headline["C"] = C

    def _fig8(self):
        sk = self.skeleton()
        C = {}
        for name, value, s in self._swept_solutions():
            xi, f = branch_to_orbit(s)
            label = f"{name}-{value:g}"
            self.keep(write_orbit_csv(self.path(f"orbit-{self.cfg.tag}-{label}.csv"), label, xi, f))
            C[f"{name}={value:g}"] = s.C
        self.headline["C"] = C
        return sk

    def execute(self) -> None:
        exp = self.cfg.experiment
        dispatch = {
            "simulate": self.simulate,
            "equilibria": self.equilibria,
            "shoot": self.shoot,
            "skeleton": self.skeleton,
            "solve-pulse": self.pulse,
            "continue": self.continuation,
            "reproduce-figure": self.figure,
        }
        dispatch[exp]()


# ---------------------------------------------------------------------------
# plot data


def _sub_branches(rows: dict) -> list[tuple[int, int]]:
    """(row index, sub-branch id) pairs, fold rows listed on both sides."""
    out = []
    side = 0
    for i, flag in enumerate(rows["fold_flag"]):
        if flag == "true":
            out.append((i, side))
            side += 1
        out.append((i, side))
    return out


def emit_plot_data(out_dir: Path | str, period: float = 1000.0) -> dict:
    """Long-format plot tables from the CSV artifacts found in ``out_dir``."""
    out_dir = Path(out_dir)
    written, missing = [], []

    branches = sorted(out_dir.glob("branch-*.csv"))
    if branches:
        rows = []
        for path in branches:
            data = read_csv(path)
            param = data["continued_param"][0]
            for i, side in _sub_branches(data):
                for q in ("C", "U_max", "V_max", "S_max"):
                    rows.append([path.stem, side, param, data[param][i], q, data[q][i],
                                 data["fold_flag"][i]])
        written.append(write_rows(out_dir / "plot-bifurcation.csv",
                                  ["series", "sub_branch", "parameter", "parameter_value",
                                   "quantity", "value", "fold"], rows))
    else:
        missing.append("branch-*.csv")

    profiles = sorted(out_dir.glob("profile-*.csv"))
    if profiles:
        rows = []
        for path in profiles:
            data = read_csv(path)
            for var in ("U", "V", "Q", "S"):
                rows += [[path.stem, x / period, var, y] for x, y in zip(data["xi"], data[var])]
        written.append(write_rows(out_dir / "plot-profiles.csv",
                                  ["series", "xi_over_L", "variable", "value"], rows))
    else:
        missing.append("profile-*.csv")

    orbits = sorted(out_dir.glob("orbit-*.csv")) + sorted(out_dir.glob("skeleton-*.csv"))
    if orbits:
        rows = []
        for path in orbits:
            data = read_csv(path)
            for k in range(len(data["v"])):
                rows.append([path.stem, data["tag"][k], data["v"][k], data["s"][k], data["w"][k]])
        written.append(write_rows(out_dir / "plot-orbits.csv", ["series", "segment", "v", "s", "w"], rows))
    else:
        missing.append("orbit-*.csv / skeleton-*.csv")

    if written:
        readme = out_dir / "PLOT_DATA.md"
        readme.write_text(_PLOT_README)
        written.append(readme)
    return {"written": [str(p) for p in written], "missing": missing}


_PLOT_README = """\
# Plot data

All files are long format: one row per sample, grouped by `series` (the source file stem).

`plot-bifurcation.csv`
: series, sub_branch, parameter, parameter_value, quantity, value, fold.
  `quantity` is one of C, U_max, V_max, S_max. `sub_branch` counts folds passed;
  fold rows appear once on each side so both sub-branches end at the fold.

`plot-profiles.csv`
: series, xi_over_L, variable, value. `variable` is one of U, V, Q, S and the
  comoving coordinate is divided by the period L.

`plot-orbits.csv`
: series, segment, v, s, w. Pulse orbits and skeleton segments in fast
  coordinates; `segment` is the orbit tag or the skeleton scale tag
  (superslow, slow, fast1, fast2).
"""


# ---------------------------------------------------------------------------
# entry point


def _versions() -> dict:
    import numba
    import pydantic
    import scipy

    return {"vegpulse": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "pydantic": pydantic.VERSION}


def _apply_threads() -> int | None:
    raw = os.environ.get("VEGPULSE_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"VEGPULSE_THREADS must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"VEGPULSE_THREADS must be a positive integer, got {raw!r}")
    import numba

    n = min(n, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n


def run(config_path, experiment: str | None = None, output_dir: str | None = None,
        tag: str | None = None) -> int:
    try:
        cfg = load_config(config_path, experiment, output_dir, tag)
        threads = _apply_threads()
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 1
    runner = Run(cfg)
    if runner.nondim_info is not None:
        log.info("dimensional parameters nondimensionalised to %s", runner.nondim_info["nondimensional"])
    runner.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    status, error, code = "ok", None, 0
    try:
        runner.execute()
    except NUMERICAL_ERRORS as exc:
        status, error, code = "numerical-failure", f"{type(exc).__name__}: {exc}", 2
        history = getattr(exc, "history", None) or getattr(exc, "scan", None)
        if history:
            error += f" | trace: {history}"
        log.error("%s", error)
    plot = emit_plot_data(runner.out, cfg.pulse.period)
    manifest = {
        "experiment": cfg.experiment,
        "status": status,
        "error": error,
        "config": cfg.model_dump(mode="json"),
        "resolved_params": runner.P.as_dict(),
        "nondimensionalisation": runner.nondim_info,
        "threads": threads,
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - t0,
        "headline": runner.headline,
        "artifacts": sorted(str(p) for p in runner.artifacts),
        "plot_data": plot,
    }
    path = runner.out / f"manifest-{cfg.tag}.json"
    text = json.dumps(_json_safe(manifest), indent=2, default=_json_default, allow_nan=False)
    path.write_text(text + "\n")
    log.info("manifest written to %s", path)
    return code


def _json_safe(obj):
    """Non-finite floats become the strings "inf", "-inf" or "nan" (strict JSON)."""
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not np.isfinite(obj):
        return str(float(obj))
    return obj


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return fmt_float(obj)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="vegpulse", description=__doc__.splitlines()[0])
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="YAML run configuration")
    parser.add_argument("--output-dir", help="overrides output_dir of the config")
    parser.add_argument("--tag", help="overrides tag of the config")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    return run(args.config, args.experiment, args.output_dir, args.tag)


if __name__ == "__main__":
    sys.exit(main())
