"""Closed-form steady states of the three model variants and their existence conditions."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .model import Params, State, Variant


class EquilibriumLabel(str, enum.Enum):
    E01 = "E01"
    E02 = "E02"
    E03 = "E03"
    E04 = "E04"
    E05 = "E05"
    E01_TILDE = "E01_tilde"
    E03_TILDE = "E03_tilde"


@dataclass(frozen=True)
class Equilibrium:
    label: EquilibriumLabel
    state: State
    exists: bool
    existence_reason: str
    # on a closed endpoint of the existence condition (coincides with another steady state)
    boundary: bool = False
    # r_c == r_d in a constant-payoff model: every w solves the w-equation
    degenerate: bool = False


_NAN_STATE = State(float("nan"), float("nan"), float("nan"))


def _mosquito_positive(params: Params, w: float) -> State:
    """Populations at carrying capacity K_v(w) scaled by (1 - 1/N)."""
    K = params.K_max - w * (params.K_max - params.K_min)
    L = K * (1.0 - 1.0 / params.N)
    return State(L, params.nu_L / params.mu_A * L, w)


def e05_existence_interval(params: Params) -> tuple[float, float]:
    """Bounds on r_c/r_d for which the partial-control equilibrium exists."""
    N = params.N
    if not N > 1:
        raise ValueError(f"existence interval undefined for N={N} <= 1")
    s = params.alpha * (1.0 - 1.0 / N)
    return s * params.K_min, s * params.K_max


def e05(params: Params) -> Equilibrium:
    if params.variant is not Variant.PREVALENCE_DEPENDENT:
        raise ValueError("E05 only exists for the prevalence-dependent variant")
    N = params.N
    L = params.mu_A * params.r_c / (params.r_d * params.m * params.nu_L)
    A = params.r_c / (params.r_d * params.m)
    if not N > 1:
        return Equilibrium(EquilibriumLabel.E05, _NAN_STATE, False, "N <= 1")
    w = (params.K_max - L / (1.0 - 1.0 / N)) / (params.K_max - params.K_min)
    lo, hi = e05_existence_interval(params)
    x = params.ratio
    if not lo <= x <= hi:
        return Equilibrium(
            EquilibriumLabel.E05,
            State(L, A, w),
            False,
            f"r_c/r_d={x:.6g} outside existence interval [{lo:.6g}, {hi:.6g}]",
        )
    # the ratio tests decide existence; pin w to its endpoint so rounding cannot leave [0, 1]
    if x == lo:
        w = 1.0
    elif x == hi:
        w = 0.0
    w = min(1.0, max(0.0, w))
    return Equilibrium(
        EquilibriumLabel.E05,
        State(L, A, w),
        True,
        f"N > 1 and r_c/r_d in [{lo:.6g}, {hi:.6g}]",
        boundary=(x == lo or x == hi),
    )


def intervention_control_level(params: Params) -> float | None:
    """w* = gamma / (k (r_c - r_d)), or None when r_c == r_d."""
    diff = params.r_c - params.r_d
    if diff == 0:
        return None
    return params.gamma / (params.k * diff)


def enumerate_equilibria(params: Params) -> list[Equilibrium]:
    """All labelled steady states of ``params.variant``; absent ones carry ``exists=False``."""
    N = params.N
    persists = N > 1
    no_mosq = "N <= 1"
    v = params.variant
    out: list[Equilibrium] = []

    def positive(label, w, extra_ok=True, extra_reason="", **flags):
        if not persists:
            return Equilibrium(label, _NAN_STATE, False, no_mosq, **flags)
        state = _mosquito_positive(params, w)
        if not extra_ok:
            return Equilibrium(label, state, False, extra_reason, **flags)
        return Equilibrium(label, state, True, "N > 1", **flags)

    if v is Variant.CONSTANT_PAYOFF_WITH_INTERVENTION:
        ws = intervention_control_level(params)
        if ws is None:
            ok, why = False, "r_c = r_d: gamma/(k(r_c-r_d)) undefined"
        elif not (params.r_c > params.r_d and 0.0 <= ws <= 1.0):
            ok, why = False, f"gamma/(k(r_c-r_d))={ws:.6g} outside [0, 1]"
        else:
            ok, why = True, f"gamma/(k(r_c-r_d))={ws:.6g} in [0, 1]"
        on_edge = ok and ws == 1.0
        w_star = float("nan") if ws is None else ws
        out.append(Equilibrium(EquilibriumLabel.E01_TILDE, State(0.0, 0.0, w_star), ok, why, boundary=on_edge))
        out.append(Equilibrium(EquilibriumLabel.E02, State(0.0, 0.0, 1.0), True, "always"))
        if not persists:
            out.append(Equilibrium(EquilibriumLabel.E03_TILDE, _NAN_STATE, False, no_mosq))
        elif not ok:
            out.append(Equilibrium(EquilibriumLabel.E03_TILDE, _NAN_STATE, False, why))
        else:
            state = _mosquito_positive(params, ws)
            out.append(Equilibrium(EquilibriumLabel.E03_TILDE, state, True, f"N > 1 and {why}", boundary=on_edge))
        out.append(positive(EquilibriumLabel.E04, 1.0))
        return out

    degenerate = v is Variant.CONSTANT_PAYOFF and params.r_c == params.r_d
    out.append(Equilibrium(EquilibriumLabel.E01, State(0.0, 0.0, 0.0), True, "always", degenerate=degenerate))
    out.append(Equilibrium(EquilibriumLabel.E02, State(0.0, 0.0, 1.0), True, "always", degenerate=degenerate))
    out.append(positive(EquilibriumLabel.E03, 0.0, degenerate=degenerate))
    out.append(positive(EquilibriumLabel.E04, 1.0, degenerate=degenerate))
    if v is Variant.PREVALENCE_DEPENDENT:
        out.append(e05(params))
    return out


def find(equilibria: list[Equilibrium], label: EquilibriumLabel | str) -> Equilibrium:
    label = EquilibriumLabel(label)
    for eq in equilibria:
        if eq.label is label:
            return eq
    raise KeyError(label)
