"""Adaptive Dormand-Prince 5(4) integration of the model.

The system is three-dimensional, so the stepper works on plain floats; that is several
times faster than numpy for vectors this short and keeps runs bitwise reproducible.

For the variants whose w-equation carries the factor w (1 - w), w is integrated as its
log-odds u = log(w / (1 - w)).  With strong imitation (k r_c of order 1e3 per day)
w is driven to within exp(-1e4) of 0 or 1 and back again every cycle; in plain
coordinates it underflows, sticks to the invariant plane w = 0 and the oscillation
is lost.  In log-odds coordinates that excursion is an ordinary number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import Params, State, Variant, check_state

# Dormand-Prince 5(4) tableau
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# error weights: 5th-order minus embedded 4th-order solution (last entry multiplies f(y_new))
E1, E3, E4, E5, E6, E7 = -71 / 57600, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40

# continuous extension: y(t + th h) = y + h sum_i k_i (P_i . [th, th^2, th^3, th^4])
DENSE = (
    (1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432),
    (0.0, 0.0, 0.0, 0.0),
    (0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799),
    (0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072),
    (0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632),
    (0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844),
    (0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423),
)

DENSE_ARRAY = np.array(DENSE)

SAFETY, FAC_MIN, FAC_MAX = 0.9, 0.2, 10.0
PI_ALPHA, PI_BETA = 0.17, 0.04


class IntegrationError(RuntimeError):
    pass


class StepSizeUnderflow(IntegrationError):
    pass


class MaxStepsExceeded(IntegrationError):
    pass


class InvalidInitialState(IntegrationError, ValueError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-8
    # (L_v, A_v, w); None means (1e-6 K_max, 1e-6 K_max, 1e-10)
    abs_tol: tuple[float, float, float] | None = None
    # absolute tolerance on log-odds of w when that coordinate is used
    abs_tol_log_odds: float = 1e-8
    max_step: float = math.inf
    initial_step: float | None = None
    max_steps: int = 2_000_000
    # uniform resampling stride (days) through the dense output; None keeps step points
    sample_stride: float | None = None
    # "auto" uses log-odds when the w-equation allows it
    w_coordinates: str = "auto"

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")
        if self.abs_tol is not None and (len(self.abs_tol) != 3 or min(self.abs_tol) <= 0):
            raise ValueError("abs_tol must be three positive numbers")
        if not self.abs_tol_log_odds > 0:
            raise ValueError("abs_tol_log_odds must be > 0")
        if not self.max_step > 0:
            raise ValueError("max_step must be > 0")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ValueError("initial_step must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.sample_stride is not None and not self.sample_stride > 0:
            raise ValueError("sample_stride must be > 0")
        if self.w_coordinates not in ("auto", "linear", "log-odds"):
            raise ValueError(f"w_coordinates must be auto, linear or log-odds, got {self.w_coordinates!r}")

    def resolved_abs_tol(self, params: Params) -> tuple[float, float, float]:
        if self.abs_tol is not None:
            return tuple(float(x) for x in self.abs_tol)
        return (1e-6 * params.K_max, 1e-6 * params.K_max, 1e-10)


@dataclass
class Trajectory:
    times: np.ndarray
    # shape (n, 3): columns L_v, A_v, w
    y: np.ndarray
    # log-odds of w when integrated in those coordinates (keeps w resolvable near 0 and 1)
    log_odds: np.ndarray | None = None
    n_accepted: int = 0
    n_rejected: int = 0
    uniform: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def L_v(self) -> np.ndarray:
        return self.y[:, 0]

    @property
    def A_v(self) -> np.ndarray:
        return self.y[:, 1]

    @property
    def w(self) -> np.ndarray:
        return self.y[:, 2]

    @property
    def states(self) -> list[State]:
        return [State(*row) for row in self.y.tolist()]

    @property
    def final(self) -> State:
        return State(*self.y[-1].tolist())

    @property
    def step_stats(self) -> dict:
        return {"accepted": self.n_accepted, "rejected": self.n_rejected}

    def __len__(self) -> int:
        return len(self.times)


def _expit(u: float) -> float:
    if u >= 0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


def _make_rhs(params: Params, log_odds: bool):
    rb = params.r * params.b
    nu, mu_l, mu_a = params.nu_L, params.mu_L, params.mu_A
    kmax = params.K_max
    dk = params.K_max - params.K_min
    k, r_c, r_d, m, gamma = params.k, params.r_c, params.r_d, params.m, params.gamma
    loss = nu + mu_l
    v = params.variant

    if log_odds:
        if v is Variant.PREVALENCE_DEPENDENT:
            krdm = k * r_d * m
            kr_c = k * r_c

            def f(L, A, u):
                w = _expit(u)
                return rb * A * (1.0 - L / (kmax - w * dk)) - loss * L, nu * L - mu_a * A, krdm * A - kr_c

        else:
            drift = k * (r_d - r_c)

            def f(L, A, u):
                w = _expit(u)
                return rb * A * (1.0 - L / (kmax - w * dk)) - loss * L, nu * L - mu_a * A, drift

        return f

    if v is Variant.PREVALENCE_DEPENDENT:

        def f(L, A, w):
            return (
                rb * A * (1.0 - L / (kmax - w * dk)) - loss * L,
                nu * L - mu_a * A,
                k * w * (1.0 - w) * (-r_c + r_d * m * A),
            )

    elif v is Variant.CONSTANT_PAYOFF:
        c = k * (r_d - r_c)

        def f(L, A, w):
            return rb * A * (1.0 - L / (kmax - w * dk)) - loss * L, nu * L - mu_a * A, c * w * (1.0 - w)

    else:
        c = k * (r_d - r_c)

        def f(L, A, w):
            return (
                rb * A * (1.0 - L / (kmax - w * dk)) - loss * L,
                nu * L - mu_a * A,
                (1.0 - w) * (c * w + gamma),
            )

    return f


def _use_log_odds(params: Params, w0: float, mode: str) -> bool:
    if mode == "linear":
        return False
    possible = params.variant is not Variant.CONSTANT_PAYOFF_WITH_INTERVENTION and 0.0 < w0 < 1.0
    if mode == "log-odds" and not possible:
        raise ValueError("log-odds coordinates need 0 < w0 < 1 and a variant without gamma")
    return possible


def integrate(
    params: Params,
    s0: State,
    t_span: tuple[float, float],
    cfg: IntegratorConfig | None = None,
) -> Trajectory:
    """Integrate ``params.variant`` from ``s0`` over ``t_span`` (days)."""
    cfg = cfg or IntegratorConfig()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not (math.isfinite(t0) and math.isfinite(t1) and t1 > t0):
        raise ValueError(f"need finite t0 < t1, got {t_span}")
    s0 = State(*(float(x) for x in s0))
    try:
        check_state(params, s0, tol=0.0)
    except ValueError as exc:
        raise InvalidInitialState(str(exc)) from None
    if s0.L_v > params.K_max * (1 + 1e-12) or s0.A_v > params.nu_L / params.mu_A * params.K_max * (1 + 1e-12):
        raise InvalidInitialState(f"initial state {tuple(s0)} lies outside the invariant box")

    log_odds = _use_log_odds(params, s0.w, cfg.w_coordinates)
    f = _make_rhs(params, log_odds)
    rtol = cfg.rel_tol
    atol_l, atol_a, atol_w = cfg.resolved_abs_tol(params)
    if log_odds:
        atol_w = cfg.abs_tol_log_odds
    # a population may dip below zero by this much before the step is rejected
    slack_l = 10.0 * rtol * params.K_max
    slack_a = 10.0 * rtol * params.nu_L / params.mu_A * params.K_max
    slack_w = 10.0 * rtol

    y1, y2 = s0.L_v, s0.A_v
    y3 = math.log(s0.w / (1.0 - s0.w)) if log_odds else s0.w
    y_init = (y1, y2, y3)
    t = t0
    k1 = f(y1, y2, y3)

    span = t1 - t0
    max_step = min(cfg.max_step, span)
    if cfg.initial_step is not None:
        h = min(cfg.initial_step, max_step)
    else:
        h = _initial_step(f, t0, (y1, y2, y3), k1, (atol_l, atol_a, atol_w), rtol, max_step)

    stride = cfg.sample_stride
    if stride is not None:
        n_samples = int(math.floor(span / stride + 1e-9)) + 1
        sample_t = [t0 + i * stride for i in range(n_samples)]
        if sample_t[-1] < t1 - 1e-9 * max(1.0, abs(t1)):
            sample_t.append(t1)
        else:
            sample_t[-1] = t1
        next_idx = 1
        # steps that own samples; interpolated in one vectorized pass afterwards
        dense_steps = []
        owner = [-1]
        exact_end = None
    else:
        out_t = [t0]
        out_y = [(y1, y2, y3)]

    n_acc = n_rej = 0
    err_prev = 1e-4
    min_h_factor = 16 * 2.220446049250313e-16
    while t < t1:
        if n_acc + n_rej >= cfg.max_steps:
            raise MaxStepsExceeded(f"exceeded {cfg.max_steps} steps at t={t:.6g}")
        if h < min_h_factor * max(1.0, abs(t)):
            raise StepSizeUnderflow(f"step size {h:.3e} underflows at t={t:.6g}")
        last = t + h >= t1
        if last:
            h = t1 - t

        a1, a2, a3 = k1
        s1 = f(y1 + h * A21 * a1, y2 + h * A21 * a2, y3 + h * A21 * a3)
        b1, b2, b3 = s1
        s2 = f(
            y1 + h * (A31 * a1 + A32 * b1),
            y2 + h * (A31 * a2 + A32 * b2),
            y3 + h * (A31 * a3 + A32 * b3),
        )
        c1, c2, c3 = s2
        s3 = f(
            y1 + h * (A41 * a1 + A42 * b1 + A43 * c1),
            y2 + h * (A41 * a2 + A42 * b2 + A43 * c2),
            y3 + h * (A41 * a3 + A42 * b3 + A43 * c3),
        )
        d1, d2, d3 = s3
        s4 = f(
            y1 + h * (A51 * a1 + A52 * b1 + A53 * c1 + A54 * d1),
            y2 + h * (A51 * a2 + A52 * b2 + A53 * c2 + A54 * d2),
            y3 + h * (A51 * a3 + A52 * b3 + A53 * c3 + A54 * d3),
        )
        e1, e2, e3 = s4
        s5 = f(
            y1 + h * (A61 * a1 + A62 * b1 + A63 * c1 + A64 * d1 + A65 * e1),
            y2 + h * (A61 * a2 + A62 * b2 + A63 * c2 + A64 * d2 + A65 * e2),
            y3 + h * (A61 * a3 + A62 * b3 + A63 * c3 + A64 * d3 + A65 * e3),
        )
        g1, g2, g3 = s5
        n1 = y1 + h * (B1 * a1 + B3 * c1 + B4 * d1 + B5 * e1 + B6 * g1)
        n2 = y2 + h * (B1 * a2 + B3 * c2 + B4 * d2 + B5 * e2 + B6 * g2)
        n3 = y3 + h * (B1 * a3 + B3 * c3 + B4 * d3 + B5 * e3 + B6 * g3)
        k7 = f(n1, n2, n3)
        p1, p2, p3 = k7

        err1 = h * (E1 * a1 + E3 * c1 + E4 * d1 + E5 * e1 + E6 * g1 + E7 * p1)
        err2 = h * (E1 * a2 + E3 * c2 + E4 * d2 + E5 * e2 + E6 * g2 + E7 * p2)
        err3 = h * (E1 * a3 + E3 * c3 + E4 * d3 + E5 * e3 + E6 * g3 + E7 * p3)
        sc1 = atol_l + rtol * max(abs(y1), abs(n1))
        sc2 = atol_a + rtol * max(abs(y2), abs(n2))
        sc3 = atol_w + rtol * max(abs(y3), abs(n3))
        err = math.sqrt(((err1 / sc1) ** 2 + (err2 / sc2) ** 2 + (err3 / sc3) ** 2) / 3.0)

        if not math.isfinite(err):
            n_rej += 1
            h *= FAC_MIN
            continue

        if err <= 1.0:
            # keep the invariant box: clamp tiny violations, reject real ones
            clamped = False
            if n1 < 0 or n2 < 0 or (not log_odds and (n3 < 0 or n3 > 1)):
                if n1 < -slack_l or n2 < -slack_a or (not log_odds and (n3 < -slack_w or n3 > 1 + slack_w)):
                    n_rej += 1
                    h *= 0.5
                    continue
                n1, n2 = max(n1, 0.0), max(n2, 0.0)
                if not log_odds:
                    n3 = min(1.0, max(0.0, n3))
                clamped = True

            if stride is not None:
                t_end = t1 if last else t + h
                if next_idx < len(sample_t) and sample_t[next_idx] <= t_end:
                    dense_steps.append((t, h, y1, y2, y3, k1, s1, s2, s3, s4, s5, k7))
                    while next_idx < len(sample_t) and sample_t[next_idx] <= t_end:
                        owner.append(len(dense_steps) - 1)
                        next_idx += 1
                    if last:
                        exact_end = (n1, n2, n3)
            t = t1 if last else t + h
            y1, y2, y3 = n1, n2, n3
            k1 = f(y1, y2, y3) if clamped else k7
            n_acc += 1
            if stride is None:
                out_t.append(t)
                out_y.append((y1, y2, y3))
            # PI control damps the accept/reject cycling when stability, not accuracy, limits h
            fac = FAC_MAX if err == 0 else min(FAC_MAX, max(FAC_MIN, SAFETY * err**-PI_ALPHA * err_prev**PI_BETA))
            err_prev = max(err, 1e-4)
            h = min(h * fac, max_step) if not last else h
        else:
            n_rej += 1
            h *= max(FAC_MIN, SAFETY * err**-0.2)

    if stride is not None:
        if len(owner) != len(sample_t):
            raise IntegrationError(f"dense output produced {len(owner)} of {len(sample_t)} samples")
        times = np.asarray(sample_t, dtype=float)
        raw = _dense(times, np.asarray(owner[1:], dtype=int), dense_steps, y_init, log_odds)
        if exact_end is not None:
            raw[-1] = exact_end
    else:
        raw = np.asarray(out_y, dtype=float)
        times = np.asarray(out_t, dtype=float)
    if log_odds:
        u = raw[:, 2].copy()
        w = np.where(u >= 0, 1.0 / (1.0 + np.exp(-np.clip(u, 0, None))), _expit_neg(u))
        y = np.column_stack([raw[:, 0], raw[:, 1], w])
    else:
        u = None
        y = raw
    return Trajectory(
        times=times,
        y=y,
        log_odds=u,
        n_accepted=n_acc,
        n_rejected=n_rej,
        uniform=stride is not None,
        meta={"w_coordinates": "log-odds" if log_odds else "linear", "rel_tol": rtol},
    )


def _expit_neg(u: np.ndarray) -> np.ndarray:
    e = np.exp(np.clip(u, None, 0))
    return e / (1.0 + e)


def _dense(times, owner, steps, y_init, log_odds):
    """Dormand-Prince continuous extension at every sample after the first."""
    out = np.empty((len(times), 3))
    out[0] = y_init
    if len(steps):
        data = np.asarray([(st[0], st[1], st[2], st[3], st[4]) for st in steps])
        ks = np.asarray([st[5:] for st in steps])  # (steps, 7 stages, 3)
        t_s, h_s, y_s = data[owner, 0], data[owner, 1], data[owner, 2:5]
        th = (times[1:] - t_s) / h_s
        powers = np.column_stack([th, th**2, th**3, th**4])
        weights = powers @ DENSE_ARRAY.T  # (samples, 7)
        out[1:] = y_s + h_s[:, None] * np.einsum("ni,nij->nj", weights, ks[owner])
    np.maximum(out[:, :2], 0.0, out=out[:, :2])
    if not log_odds:
        np.clip(out[:, 2], 0.0, 1.0, out=out[:, 2])
    return out


def _initial_step(f, t0, y0, f0, atol, rtol, max_step):
    """Starting step from the local Lipschitz estimate (Hairer, Norsett and Wanner II.4)."""
    scale = [a + rtol * abs(v) for a, v in zip(atol, y0)]
    d0 = math.sqrt(sum((v / s) ** 2 for v, s in zip(y0, scale)) / 3)
    d1 = math.sqrt(sum((v / s) ** 2 for v, s in zip(f0, scale)) / 3)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, max_step)
    y1 = [v + h0 * dv for v, dv in zip(y0, f0)]
    f1 = f(*y1)
    d2 = math.sqrt(sum(((a - b) / s) ** 2 for a, b, s in zip(f1, f0, scale)) / 3) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, max_step)
