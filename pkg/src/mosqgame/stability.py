"""Linear stability of the steady states and the Hopf boundary of E05.

Every verdict is computed twice: from closed-form sign conditions
(``analytic_verdict``) and from the eigenvalues of the analytic Jacobian
(``eigenvalues3``).  ``classify_equilibrium`` insists that the two agree.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import matrix_balance

from .equilibria import Equilibrium, EquilibriumLabel, e05_existence_interval
from .model import Params, State, Variant, check_state

# relative tolerance on the max real part, scaled by the balanced Jacobian norm
EIGEN_TOL = 1e-9


class Stability(str, enum.Enum):
    LAS = "LAS"
    UNSTABLE = "Unstable"
    MARGINAL = "Marginal"


class Method(str, enum.Enum):
    ANALYTIC = "Analytic"
    EIGENVALUE = "Eigenvalue"
    BOTH = "Both"


class AnalyticNumericMismatch(RuntimeError):
    def __init__(self, label, analytic, numeric, max_real_part, eigenvalues):
        self.label = label
        self.analytic = analytic
        self.numeric = numeric
        self.max_real_part = max_real_part
        self.eigenvalues = eigenvalues
        super().__init__(
            f"{label}: analytic conditions say {analytic.value}, eigenvalues say {numeric.value} "
            f"(max Re = {max_real_part:.3e})"
        )


@dataclass(frozen=True)
class StabilityVerdict:
    label: Stability
    method: Method
    eigenvalues: tuple[complex, complex, complex]
    max_real_part: float
    analytic: Stability
    numeric: Stability
    reason: str = ""


@dataclass(frozen=True)
class CharPolyCoeffs:
    """Coefficients of lambda^3 + a2 lambda^2 + a1 lambda + a0 at E05."""

    a2: float
    a1: float
    a0: float
    P: float
    Q: float

    @property
    def hurwitz_gap(self) -> float:
        """a2 a1 - a0; positive means the Routh-Hurwitz product condition holds."""
        return self.a2 * self.a1 - self.a0


@dataclass(frozen=True)
class HopfAnalysis:
    B: float
    C: float
    discriminant: float
    lo: float
    hi: float
    ratio: float
    x1: float | None = None
    x2: float | None = None
    k_c: float | None = None
    # discriminant exactly zero: x1 == x2 and the instability window is empty
    degenerate: bool = False

    @property
    def window(self) -> tuple[float, float] | None:
        if self.x1 is None:
            return None
        return self.x1, self.x2

    def in_window(self, x: float) -> bool:
        return self.x1 is not None and self.x1 < x < self.x2


# ---------------------------------------------------------------------------
# Jacobian


def jacobian(params: Params, state: State) -> np.ndarray:
    """Analytic Jacobian of ``rhs`` at ``state``, rows/columns ordered (L_v, A_v, w)."""
    check_state(params, state)
    L, A, w = state
    rb = params.r * params.b
    dK = params.K_max - params.K_min
    K = params.K_max - w * dK
    if not K > 0:
        raise ValueError(f"non-positive carrying capacity K_v(w)={K}")
    k, r_c, r_d = params.k, params.r_c, params.r_d

    J = np.zeros((3, 3))
    J[0, 0] = -rb * A / K - (params.nu_L + params.mu_L)
    J[0, 1] = rb * (1.0 - L / K)
    J[0, 2] = -rb * A * L * dK / K**2
    J[1, 0] = params.nu_L
    J[1, 1] = -params.mu_A

    v = params.variant
    if v is Variant.PREVALENCE_DEPENDENT:
        J[2, 1] = k * w * (1.0 - w) * r_d * params.m
        J[2, 2] = k * (1.0 - 2.0 * w) * (-r_c + r_d * params.m * A)
    elif v is Variant.CONSTANT_PAYOFF:
        J[2, 2] = k * (1.0 - 2.0 * w) * (r_d - r_c)
    else:
        J[2, 2] = k * (r_d - r_c) * (1.0 - 2.0 * w) - params.gamma
    return J


def char_poly_from_matrix(J: np.ndarray) -> tuple[float, float, float]:
    """(c2, c1, c0) with det(lambda I - J) = lambda^3 + c2 lambda^2 + c1 lambda + c0."""
    (a, b, c), (d, e, f), (g, h, i) = J.tolist()
    c2 = -(a + e + i)
    c1 = (a * e - b * d) + (a * i - c * g) + (e * i - f * h)
    det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
    return c2, c1, -det


# ---------------------------------------------------------------------------
# cubic roots


def _cbrt(x: float) -> float:
    return math.copysign(abs(x) ** (1.0 / 3.0), x)


def _polish(z: complex, c2: float, c1: float, c0: float) -> complex:
    p = ((z + c2) * z + c1) * z + c0
    dp = (3.0 * z + 2.0 * c2) * z + c1
    if dp == 0:
        return z
    z_new = z - p / dp
    # near a multiple root dp is noise; keep the step only if it actually helps
    p_new = ((z_new + c2) * z_new + c1) * z_new + c0
    return z_new if abs(p_new) < abs(p) else z


def solve_cubic(c2: float, c1: float, c0: float) -> tuple[complex, complex, complex]:
    """Roots of lambda^3 + c2 lambda^2 + c1 lambda + c0, closed form plus one Newton step each."""
    shift = c2 / 3.0
    p = c1 - c2 * c2 / 3.0
    q = 2.0 * c2**3 / 27.0 - c2 * c1 / 3.0 + c0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3

    if disc < 0:
        # three distinct real roots (p < 0 here)
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * m)
        theta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        roots = [m * math.cos(theta - 2.0 * math.pi * j / 3.0) - shift for j in range(3)]
        out = [complex(_polish(complex(r), c2, c1, c0).real, 0.0) for r in roots]
    else:
        sq = math.sqrt(disc)
        # pick the sign that avoids cancellation
        u = _cbrt(-q / 2.0 - math.copysign(sq, q))
        v = -p / (3.0 * u) if u != 0 else 0.0
        real = _polish(complex(u + v - shift), c2, c1, c0).real
        # deflate: (lambda - real)(lambda^2 + beta lambda + gamma)
        beta = c2 + real
        gamma = -c0 / real if abs(real) > 1e-8 * (abs(c2) + abs(beta) + 1.0) else c1 + real * beta
        d = beta * beta / 4.0 - gamma
        if d >= 0:
            s = math.sqrt(d)
            # larger-magnitude root first, the other from the product gamma
            r1 = -beta / 2.0 - math.copysign(s, beta) if beta != 0 else s
            r2 = gamma / r1 if r1 != 0 else -beta - r1
            pair = [complex(r1), complex(r2)]
        else:
            s = math.sqrt(-d)
            pair = [complex(-beta / 2.0, s), complex(-beta / 2.0, -s)]
        pair = [_polish(z, c2, c1, c0) for z in pair]
        if pair[0].imag != 0.0:
            # keep an exact conjugate pair
            z = pair[0] if pair[0].imag > 0 else pair[1]
            pair = [z, z.conjugate()]
        out = [complex(real, 0.0)] + pair
    return tuple(sorted(out, key=lambda z: (-z.real, -z.imag)))


def eigenvalues3(J: np.ndarray) -> tuple[complex, complex, complex]:
    """Eigenvalues of a real 3x3 matrix, sorted by descending real then imaginary part."""
    J = np.asarray(J, dtype=float)
    if J.shape != (3, 3) or not np.all(np.isfinite(J)):
        raise ValueError("eigenvalues3 needs a finite 3x3 matrix")
    return solve_cubic(*char_poly_from_matrix(J))


def spectral_scale(J: np.ndarray) -> float:
    """Infinity norm of the diagonally balanced matrix (similarity invariant scale)."""
    balanced, _ = matrix_balance(np.asarray(J, dtype=float), permute=False)
    return float(np.max(np.sum(np.abs(balanced), axis=1)))


def eigen_tolerance(J: np.ndarray) -> float:
    return EIGEN_TOL * max(1.0, spectral_scale(J))


# ---------------------------------------------------------------------------
# E05: Routh-Hurwitz and Hopf


def char_poly_coeffs_e05(params: Params) -> CharPolyCoeffs:
    N = params.N
    if not N > 1:
        raise ValueError(f"characteristic polynomial at E05 needs N > 1, got N={N}")
    s = 1.0 - 1.0 / N
    rb_nu = params.r * params.b * params.nu_L
    a1 = rb_nu * s
    a2 = a1 / params.mu_A + (params.nu_L + params.mu_L + params.mu_A)
    dK = params.K_max - params.K_min
    P = params.k * params.r * params.b * params.r_d * params.mu_A / (params.m * dK)
    Q = (params.mu_A**2 + rb_nu) / (params.k * params.mu_A * params.r_d)
    lo, hi = params.alpha * s * params.K_min, params.alpha * s * params.K_max
    x = params.ratio
    a0 = P * (hi - x) * (x - lo)
    return CharPolyCoeffs(a2=a2, a1=a1, a0=a0, P=P, Q=Q)


def _hopf_constants(params: Params) -> tuple[float, float, float]:
    """(B, C0, D) with C(k) = C0 + D / k."""
    s = 1.0 - 1.0 / params.N
    al = params.alpha
    B = al * s * (params.K_max + params.K_min)
    C0 = al**2 * s**2 * params.K_max * params.K_min
    D = (
        (params.mu_A**2 + params.r * params.b * params.nu_L)
        / (params.mu_A * params.r_d)
        * al
        * (params.K_max - params.K_min)
        * s
    )
    return B, C0, D


def critical_imitation_rate(params: Params, ratio: float | None = None) -> float | None:
    """Imitation rate k_c at which E05 crosses a2 a1 = a0 for the given r_c/r_d.

    None when no positive k puts ``ratio`` on the Hopf boundary.
    """
    if not params.N > 1:
        raise ValueError(f"k_c needs N > 1, got N={params.N}")
    x = params.ratio if ratio is None else ratio
    B, C0, D = _hopf_constants(params)
    denom = B * x - x * x - C0
    if not denom > 0:
        return None
    return D / denom


def hopf_analysis(params: Params) -> HopfAnalysis:
    N = params.N
    if not N > 1:
        raise ValueError(f"Hopf analysis needs N > 1, got N={N}")
    B, C0, D = _hopf_constants(params)
    C = C0 + D / params.k
    disc = B * B - 4.0 * C
    lo, hi = e05_existence_interval(params)
    x1 = x2 = None
    if disc > 0:
        sq = math.sqrt(disc)
        x2 = (B + sq) / 2.0
        # product form for the small root avoids cancellation
        x1 = C / x2
    return HopfAnalysis(
        B=B,
        C=C,
        discriminant=disc,
        lo=lo,
        hi=hi,
        ratio=params.ratio,
        x1=x1,
        x2=x2,
        k_c=critical_imitation_rate(params),
        degenerate=(disc == 0),
    )


def hopf_frequency(params: Params) -> float:
    """Angular frequency sqrt(a1) of the imaginary pair at the Hopf boundary (rad/day)."""
    N = params.N
    if not N > 1:
        raise ValueError(f"Hopf frequency needs N > 1, got N={N}")
    return math.sqrt(params.r * params.b * params.nu_L * (1.0 - 1.0 / N))


def onset_period(params: Params) -> float:
    return 2.0 * math.pi / hopf_frequency(params)


def transversality_rate(params: Params) -> float:
    """d Re(lambda)/dk of the critical pair, a0'(k) / (2 (a1 + a2^2)), with a0 linear in k."""
    c = char_poly_coeffs_e05(params)
    return (c.a0 / params.k) / (2.0 * (c.a1 + c.a2**2))


# ---------------------------------------------------------------------------
# verdicts


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


def _combine(signs: list[int]) -> Stability:
    if any(s > 0 for s in signs):
        return Stability.UNSTABLE
    if all(s < 0 for s in signs):
        return Stability.LAS
    return Stability.MARGINAL


def analytic_verdict(params: Params, eq: Equilibrium) -> tuple[Stability, str]:
    """Stability from the closed-form conditions alone (no eigenvalues)."""
    label = eq.label
    v = params.variant
    sN = _sign(params.N - 1.0)
    L = EquilibriumLabel

    if v is Variant.CONSTANT_PAYOFF:
        sd = _sign(params.r_c - params.r_d)
        modes = {
            L.E01: ([sN, -sd], "N vs 1, r_c - r_d vs 0"),
            L.E02: ([sN, sd], "N vs 1, r_c - r_d vs 0"),
            L.E03: ([-1, -sd], "r_c - r_d vs 0"),
            L.E04: ([-1, sd], "r_c - r_d vs 0"),
        }
    elif v is Variant.CONSTANT_PAYOFF_WITH_INTERVENTION:
        # compare r_c - r_d with gamma / k through the exact (3,3) Jacobian entry
        sg = _sign(params.k * (params.r_c - params.r_d) - params.gamma)
        modes = {
            L.E01_TILDE: ([sN, -sg], "N vs 1, r_c - r_d vs gamma/k"),
            L.E02: ([sN, sg], "N vs 1, r_c - r_d vs gamma/k"),
            L.E03_TILDE: ([-1, -sg], "r_c - r_d vs gamma/k"),
            L.E04: ([-1, sg], "r_c - r_d vs gamma/k"),
        }
    else:
        if label is L.E05:
            c = char_poly_coeffs_e05(params)
            # a2 > 0 and a1 > 0 hold for N > 1
            if c.a0 == 0:
                return Stability.MARGINAL, "a0 = 0: r_c/r_d on an endpoint of the existence interval"
            if c.a0 < 0:
                return Stability.UNSTABLE, "a0 < 0"
            gap = c.hurwitz_gap
            if gap > 0:
                return Stability.LAS, "Routh-Hurwitz: a2, a1, a0 > 0 and a2 a1 > a0"
            if gap < 0:
                return Stability.UNSTABLE, "a2 a1 < a0: r_c/r_d inside (x1, x2)"
            return Stability.MARGINAL, "a2 a1 = a0: Hopf boundary"
        x = params.ratio
        if sN > 0:
            lo, hi = e05_existence_interval(params)
        else:
            lo = hi = 0.0
        modes = {
            L.E01: ([sN, -1], "N vs 1"),
            L.E02: ([sN, 1], "w = 1 repels when mosquitoes are absent"),
            L.E03: ([-1, _sign(hi - x)], "r_c/r_d vs alpha K_max (1 - 1/N)"),
            L.E04: ([-1, _sign(x - lo)], "r_c/r_d vs alpha K_min (1 - 1/N)"),
        }
    try:
        signs, why = modes[label]
    except KeyError:
        raise ValueError(f"{label.value} is not a steady state of the {v.value} variant") from None
    return _combine(signs), why


def numeric_verdict(J: np.ndarray) -> tuple[Stability, tuple[complex, complex, complex], float]:
    eigs = eigenvalues3(J)
    max_re = max(z.real for z in eigs)
    tol = eigen_tolerance(J)
    if max_re < -tol:
        label = Stability.LAS
    elif max_re > tol:
        label = Stability.UNSTABLE
    else:
        label = Stability.MARGINAL
    return label, eigs, max_re


def classify_equilibrium(params: Params, eq: Equilibrium) -> StabilityVerdict:
    if not eq.exists:
        raise ValueError(f"{eq.label.value} does not exist: {eq.existence_reason}")
    analytic, why = analytic_verdict(params, eq)
    numeric, eigs, max_re = numeric_verdict(jacobian(params, eq.state))
    if analytic is numeric:
        return StabilityVerdict(analytic, Method.BOTH, eigs, max_re, analytic, numeric, why)
    if numeric is Stability.MARGINAL:
        # eigenvalues cannot resolve the sign; do not pretend the closed form settles it
        return StabilityVerdict(Stability.MARGINAL, Method.EIGENVALUE, eigs, max_re, analytic, numeric, why)
    raise AnalyticNumericMismatch(eq.label, analytic, numeric, max_re, eigs)
