"""Parameters, derived quantities and right-hand sides of the mosquito/household model.

State is ``(L_v, A_v, w)``: aquatic mosquitoes, adult mosquitoes and the fraction of
households doing breeding-site control.  All rates are per day and populations are
absolute mosquito counts.

    dL_v/dt = r b A_v (1 - L_v / K_v(w)) - (nu_L + mu_L) L_v
    dA_v/dt = nu_L L_v - mu_A A_v
    dw/dt   = k w (1 - w) (f_c - f_d)            (+ gamma (1 - w) with intervention)

with ``K_v(w) = K_max - w (K_max - K_min)`` and ``f_c = -r_c``.  ``f_d`` is ``-r_d`` for
the constant-payoff variants and ``-r_d m A_v`` for the prevalence-dependent one.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

# states may sit this far outside the invariant box (relative) before rhs rejects them
STATE_TOLERANCE = 1e-9


class Variant(str, enum.Enum):
    CONSTANT_PAYOFF = "constant-payoff"
    CONSTANT_PAYOFF_WITH_INTERVENTION = "intervention"
    PREVALENCE_DEPENDENT = "prevalence-dependent"

    @classmethod
    def parse(cls, value: "str | Variant") -> "Variant":
        if isinstance(value, cls):
            return value
        aliases = {
            "constant": cls.CONSTANT_PAYOFF,
            "constant-payoff": cls.CONSTANT_PAYOFF,
            "intervention": cls.CONSTANT_PAYOFF_WITH_INTERVENTION,
            "constant-payoff-intervention": cls.CONSTANT_PAYOFF_WITH_INTERVENTION,
            "prevalence": cls.PREVALENCE_DEPENDENT,
            "prevalence-dependent": cls.PREVALENCE_DEPENDENT,
            "full": cls.PREVALENCE_DEPENDENT,
        }
        try:
            return aliases[str(value).strip().lower()]
        except KeyError:
            raise ValueError(f"unknown model variant {value!r}") from None


def _require_positive(**values: float) -> None:
    for name, v in values.items():
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be a finite positive number, got {v!r}")


@dataclass(frozen=True)
class EntomologicalParams:
    r: float = 0.5
    b: float = 10.0
    nu_L: float = 0.067
    mu_L: float = 0.62
    mu_A: float = 0.04

    def __post_init__(self):
        _require_positive(r=self.r, b=self.b, nu_L=self.nu_L, mu_L=self.mu_L, mu_A=self.mu_A)
        if self.r > 1:
            raise ValueError(f"sex ratio r must be <= 1, got {self.r}")


@dataclass(frozen=True)
class BehaviorParams:
    k: float = 0.8
    r_c: float = 1.5
    r_d: float = 1.0
    m: float = 0.3
    gamma: float = 0.0

    def __post_init__(self):
        _require_positive(k=self.k, r_c=self.r_c, r_d=self.r_d, m=self.m)
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError(f"gamma must be >= 0, got {self.gamma!r}")


@dataclass(frozen=True)
class HabitatParams:
    K_max: float = 2e6
    K_min: float = 1e6

    def __post_init__(self):
        _require_positive(K_max=self.K_max, K_min=self.K_min)
        if not self.K_min < self.K_max:
            raise ValueError(f"need 0 < K_min < K_max, got K_min={self.K_min}, K_max={self.K_max}")


_GROUPS = {
    "entomology": [f.name for f in dataclasses.fields(EntomologicalParams)],
    "behavior": [f.name for f in dataclasses.fields(BehaviorParams)],
    "habitat": [f.name for f in dataclasses.fields(HabitatParams)],
}
PARAM_NAMES = tuple(name for names in _GROUPS.values() for name in names)


@dataclass(frozen=True)
class Params:
    """Full parameter bundle for one model variant, validated on construction."""

    variant: Variant = Variant.PREVALENCE_DEPENDENT
    entomology: EntomologicalParams = EntomologicalParams()
    behavior: BehaviorParams = BehaviorParams()
    habitat: HabitatParams = HabitatParams()

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if self.variant is Variant.CONSTANT_PAYOFF_WITH_INTERVENTION and not self.behavior.gamma > 0:
            raise ValueError("the intervention variant needs gamma > 0")

    @classmethod
    def from_flat(cls, variant: "Variant | str" = Variant.PREVALENCE_DEPENDENT, **values: float) -> "Params":
        unknown = set(values) - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown parameter(s): {sorted(unknown)}")
        groups = {
            "entomology": EntomologicalParams,
            "behavior": BehaviorParams,
            "habitat": HabitatParams,
        }
        parts = {
            group: kind(**{n: float(values[n]) for n in _GROUPS[group] if n in values})
            for group, kind in groups.items()
        }
        return cls(variant=Variant.parse(variant), **parts)

    def flat(self) -> dict:
        out = {}
        out.update(dataclasses.asdict(self.entomology))
        out.update(dataclasses.asdict(self.behavior))
        out.update(dataclasses.asdict(self.habitat))
        return out

    def replace(self, variant: "Variant | str | None" = None, **values: float) -> "Params":
        flat = self.flat()
        flat.update(values)
        return Params.from_flat(self.variant if variant is None else variant, **flat)

    def __getattr__(self, name):
        # flat read access, e.g. params.b or params.K_max
        for group, names in _GROUPS.items():
            if name in names:
                return getattr(object.__getattribute__(self, group), name)
        raise AttributeError(name)

    @property
    def N(self) -> float:
        return basic_offspring_number(self.entomology)

    @property
    def alpha(self) -> float:
        return self.m * self.nu_L / self.mu_A

    @property
    def ratio(self) -> float:
        """Perceived-risk ratio r_c / r_d."""
        return self.r_c / self.r_d


class State(NamedTuple):
    L_v: float
    A_v: float
    w: float


@dataclass(frozen=True)
class DerivedQuantities:
    N: float
    alpha: float


def derived(params: Params) -> DerivedQuantities:
    return DerivedQuantities(N=params.N, alpha=params.alpha)


def basic_offspring_number(p: EntomologicalParams) -> float:
    """Adults produced per adult over its lifetime, nu_L r b / ((nu_L + mu_L) mu_A)."""
    return p.nu_L * p.r * p.b / ((p.nu_L + p.mu_L) * p.mu_A)


def b_for_offspring_number(N: float, p: EntomologicalParams) -> float:
    """Egg-laying rate that yields basic offspring number ``N`` with the other rates of ``p``."""
    _require_positive(N=N)
    return N * (p.nu_L + p.mu_L) * p.mu_A / (p.nu_L * p.r)


def carrying_capacity(w: float, h: HabitatParams) -> float:
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"w must lie in [0, 1], got {w}")
    return h.K_max - w * (h.K_max - h.K_min)


def payoff_control(bp: BehaviorParams) -> float:
    return -bp.r_c


def payoff_not_control(variant: Variant, A_v: float, bp: BehaviorParams) -> float:
    if A_v < 0:
        raise ValueError(f"A_v must be >= 0, got {A_v}")
    if Variant.parse(variant) is Variant.PREVALENCE_DEPENDENT:
        return -bp.r_d * bp.m * A_v
    return -bp.r_d


def check_state(params: Params, s: State, tol: float = STATE_TOLERANCE) -> None:
    L, A, w = s
    k_max = params.K_max
    a_max = params.nu_L / params.mu_A * k_max
    bad = (
        not all(math.isfinite(x) for x in s)
        or L < -tol * k_max
        or A < -tol * a_max
        or w < -tol
        or w > 1 + tol
    )
    if bad:
        raise ValueError(f"state {tuple(s)} lies outside the admissible box")


def rhs(params: Params, s: State, check: bool = True) -> tuple[float, float, float]:
    """Time derivatives ``(dL_v, dA_v, dw)`` of the selected variant at ``s``."""
    if check:
        check_state(params, s)
    L, A, w = s
    e, bh, h = params.entomology, params.behavior, params.habitat
    K = h.K_max - w * (h.K_max - h.K_min)
    if not K > 0:
        raise ValueError(f"non-positive carrying capacity K_v(w)={K}")
    dL = e.r * e.b * A * (1.0 - L / K) - (e.nu_L + e.mu_L) * L
    dA = e.nu_L * L - e.mu_A * A
    v = params.variant
    if v is Variant.PREVALENCE_DEPENDENT:
        dw = bh.k * w * (1.0 - w) * (-bh.r_c + bh.r_d * bh.m * A)
    elif v is Variant.CONSTANT_PAYOFF:
        dw = bh.k * w * (1.0 - w) * (-bh.r_c + bh.r_d)
    else:
        dw = bh.k * w * (1.0 - w) * (-bh.r_c + bh.r_d) + bh.gamma * (1.0 - w)
    return dL, dA, dw


def box_bounds(params: Params) -> tuple[float, float]:
    """Upper bounds (L_v, A_v) of the positively invariant box."""
    return params.K_max, params.nu_L / params.mu_A * params.K_max
