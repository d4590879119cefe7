"""Model parameters, nondimensionalisation, pointwise kinetics and equilibria.

The nondimensional water/biomass/toxicity system reads

    U_t = A - U - V^2 U + U_x / eps
    V_t = V^2 U - B V - H S V + V_xx
    D S_t = B V + H S V - S
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "DimensionalParams",
    "NondimParams",
    "ScaleFactors",
    "EquilibriumSet",
    "nondimensionalise",
    "kinetics",
    "equilibria",
    "FIG4_PARAMS",
]

# relative tolerance used to classify the tangency case of the vegetated states
DISC_RTOL = 1e-12
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class DimensionalParams:
    """Dimensional parameters of the water-biomass-toxicity model (SI-ish units, days)."""

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

    def __post_init__(self) -> None:
        may_vanish = {"q_toxfrac", "s_sens", "w_washout"}
        for name, value in self.__dict__.items():
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            if name in may_vanish:
                if value < 0:
                    raise ValueError(f"{name} must be nonnegative, got {value}")
            elif value <= 0:
                raise ValueError(f"{name} must be strictly positive, got {value}")


@dataclass(frozen=True)
class NondimParams:
    """The five nondimensional parameters (A, B, D, H, eps)."""

    A: float
    B: float
    D: float
    H: float
    eps: float

    def __post_init__(self) -> None:
        for name in ("A", "B", "D", "eps"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value}")
        if not (math.isfinite(self.H) and self.H >= 0):
            raise ValueError(f"H must be finite and >= 0, got {self.H}")

    @property
    def asymptotic_regime(self) -> bool:
        """True when eps < 0.1, i.e. inside the regime covered by the asymptotics."""
        return self.eps < 0.1

    def replace(self, **changes: float) -> "NondimParams":
        return replace(self, **{k: float(v) for k, v in changes.items()})

    def as_dict(self) -> dict[str, float]:
        return {"A": self.A, "B": self.B, "D": self.D, "H": self.H, "eps": self.eps}


#: Parameter set of the direct simulations and of the continuation starting point.
FIG4_PARAMS = NondimParams(A=1.2, B=0.45, D=4.5, H=1.0, eps=0.005)


@dataclass(frozen=True)
class ScaleFactors:
    """Multiplicative factors taking dimensional (x, t, W, B, T) to (x~, t~, U, V, S).

    ``S_scale`` is ``inf`` when the toxin fraction q vanishes: T is then
    identically slaved to zero and carries no information about S.
    """

    x_scale: float
    t_scale: float
    U_scale: float
    V_scale: float
    S_scale: float

    def to_nondim(self, W, B, T):
        return W * self.U_scale, B * self.V_scale, T * self.S_scale


def nondimensionalise(p: DimensionalParams) -> tuple[NondimParams, ScaleFactors]:
    l, r, c = p.l_loss, p.r_uptake, p.c_growth
    toxin_loss = p.k_decay + p.p_precip * p.w_washout
    A = c * p.p_precip / (l * math.sqrt(l * r))
    B = p.d_death / l
    D = l / toxin_loss
    H = p.s_sens * p.q_toxfrac * math.sqrt(l) / (toxin_loss * math.sqrt(r))
    eps = math.sqrt(p.diff_B * l) / p.nu_adv
    if p.q_toxfrac > 0:
        S_scale = toxin_loss * math.sqrt(r) / (p.q_toxfrac * l * math.sqrt(l))
    else:
        S_scale = math.inf
    scales = ScaleFactors(
        x_scale=math.sqrt(l / p.diff_B),
        t_scale=l,
        U_scale=c / math.sqrt(l * r),
        V_scale=math.sqrt(r / l),
        S_scale=S_scale,
    )
    return NondimParams(A=A, B=B, D=D, H=H, eps=eps), scales


def kinetics(u, v, s, P: NondimParams):
    """Reaction terms (du, dv, ds) of the nondimensional model; ds is already divided by D."""
    v2u = v * v * u
    du = P.A - u - v2u
    dv = v2u - P.B * v - P.H * s * v
    ds = (P.B * v + P.H * s * v - s) / P.D
    return du, dv, ds


@dataclass(frozen=True)
class EquilibriumSet:
    """Spatially homogeneous steady states.

    ``boundary`` holds the double root at the tangency A = threshold; it is
    reported but not counted as an existing vegetated state. ``degenerate``
    lists labels ("+" / "-") of states dropped because 1 - H V vanishes.
    """

    desert: tuple[float, float, float]
    vegetated_plus: tuple[float, float, float] | None
    vegetated_minus: tuple[float, float, float] | None
    threshold: float
    boundary: tuple[float, float, float] | None = None
    degenerate: tuple[str, ...] = field(default_factory=tuple)

    @property
    def has_vegetated(self) -> bool:
        return self.vegetated_plus is not None or self.vegetated_minus is not None


def _vegetated_state(V: float, P: NondimParams) -> tuple[float, float, float] | None:
    denom = 1.0 - P.H * V
    if abs(denom) <= DEGENERATE_TOL:
        return None
    return (P.A / (1.0 + V * V), V, P.B * V / denom)


def equilibria(P: NondimParams) -> EquilibriumSet:
    threshold = 2.0 * P.B * (P.H + math.sqrt(1.0 + P.H * P.H))
    desert = (P.A, 0.0, 0.0)
    k = P.B + P.A * P.H
    disc = P.A * P.A - 4.0 * P.B * k
    scale = max(P.A * P.A, 4.0 * P.B * k)
    if abs(disc) <= DISC_RTOL * scale:
        V = P.A / (2.0 * k)
        return EquilibriumSet(desert, None, None, threshold, boundary=_vegetated_state(V, P))
    if disc < 0:
        return EquilibriumSet(desert, None, None, threshold)
    root = math.sqrt(disc)
    states = {}
    degenerate = []
    for label, V in (("+", (P.A + root) / (2.0 * k)), ("-", (P.A - root) / (2.0 * k))):
        state = _vegetated_state(V, P)
        if state is None:
            degenerate.append(label)
        states[label] = state
    return EquilibriumSet(
        desert, states["+"], states["-"], threshold, degenerate=tuple(degenerate)
    )


def max_kinetics_residual(state, P: NondimParams) -> float:
    return float(np.max(np.abs(kinetics(*state, P))))
