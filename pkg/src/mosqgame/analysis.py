"""Trajectory outcomes, oscillation amplitude/period, and two-parameter sweeps."""

from __future__ import annotations

import dataclasses
import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks
from scipy.stats import spearmanr

from .equilibria import Equilibrium, EquilibriumLabel, e05_existence_interval, enumerate_equilibria, find
from .integrator import IntegrationError, IntegratorConfig, Trajectory, integrate
from .model import Params, State, Variant, b_for_offspring_number
from .stability import AnalyticNumericMismatch, Stability, classify_equilibrium, hopf_analysis, onset_period


class TrajectoryTooShort(ValueError):
    pass


class InsufficientPeaks(ValueError):
    pass


@dataclass(frozen=True)
class AnalysisConfig:
    conv_tol: float = 1e-3
    tail_fraction: float = 0.1
    # distance scale floor for near-zero population components, as a fraction of K_max;
    # with conv_tol this keeps the test about ten times above the default abs_tol
    population_floor: float = 1e-2
    # minimum peak prominence: fraction of K_max for populations, absolute for w
    amp_floor_population: float = 1e-6
    amp_floor_w: float = 1e-6
    transient_fraction: float = 0.5
    min_peaks: int = 5
    max_jitter: float = 0.05
    spectral_tol: float = 0.05
    # last-cycle amplitude must keep this fraction of the first (rules out damped ringing)
    min_amplitude_ratio: float = 0.9

    def __post_init__(self):
        if not 0 <= self.transient_fraction <= 0.9:
            raise ValueError("transient_fraction must lie in [0, 0.9]")
        if not 0 < self.tail_fraction < 1:
            raise ValueError("tail_fraction must lie in (0, 1)")
        if self.min_peaks < 2:
            raise ValueError("min_peaks must be >= 2")


class OutcomeKind(str, enum.Enum):
    CONVERGED = "converged"
    OSCILLATION = "oscillation"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class ComponentOscillation:
    amplitude: float
    period: float | None
    peak_count: int
    jitter: float | None


@dataclass(frozen=True)
class OscillationMetrics:
    L_v: ComponentOscillation
    A_v: ComponentOscillation
    w: ComponentOscillation
    # dominant period of L_v from the periodogram
    spectral_period: float | None
    amplitude_ratio: float

    @property
    def period(self) -> float | None:
        return self.L_v.period

    @property
    def spectral_agreement(self) -> float | None:
        if self.period is None or self.spectral_period is None:
            return None
        return abs(self.spectral_period - self.period) / self.period


@dataclass(frozen=True)
class AttractorOutcome:
    kind: OutcomeKind
    label: EquilibriumLabel | None
    final_state: State
    convergence_error: float
    metrics: OscillationMetrics | None = None

    @property
    def name(self) -> str:
        if self.kind is OutcomeKind.CONVERGED:
            return self.label.value
        return self.kind.value


# ---------------------------------------------------------------------------
# single trajectories


def _distance_scales(params: Params, eq: Equilibrium, cfg: AnalysisConfig) -> np.ndarray:
    floor_l = cfg.population_floor * params.K_max
    floor_a = floor_l * params.nu_L / params.mu_A
    L, A, _ = eq.state
    return np.array([max(abs(L), floor_l), max(abs(A), floor_a), 1.0])


def distance_to(params: Params, y: np.ndarray, eq: Equilibrium, cfg: AnalysisConfig | None = None) -> np.ndarray:
    """Componentwise scaled max-distance of each row of ``y`` from ``eq``."""
    cfg = cfg or AnalysisConfig()
    scales = _distance_scales(params, eq, cfg)
    return np.max(np.abs(np.atleast_2d(y) - np.asarray(eq.state)) / scales, axis=1)


def _peaks(x: np.ndarray, prominence: float) -> np.ndarray:
    idx, _ = find_peaks(x, prominence=prominence)
    return idx


def _component(x: np.ndarray, t: np.ndarray, prominence: float) -> tuple[ComponentOscillation, list[float]]:
    peaks = _peaks(x, prominence)
    # the trough after the last peak may be cut off by the window, so only
    # peaks followed by another peak contribute
    halves = [(x[a] - x[a:b].min()) / 2.0 for a, b in zip(peaks[:-1], peaks[1:])]
    if len(peaks) == 1:
        halves = [(x[peaks[0]] - x[peaks[0] :].min()) / 2.0]
    amplitude = float(np.mean(halves)) if halves else 0.0
    if len(peaks) >= 2:
        gaps = np.diff(t[peaks])
        period = float(gaps.mean())
        jitter = float(gaps.std() / gaps.mean())
    else:
        period = jitter = None
    return ComponentOscillation(amplitude, period, int(len(peaks)), jitter), halves


def spectral_period(x: np.ndarray, stride: float) -> float | None:
    """Period of the strongest periodogram line (Hann window, zero padding, parabolic refinement)."""
    n = len(x)
    if n < 8:
        return None
    seg = (x - x.mean()) * np.hanning(n)
    nfft = 8 * (1 << int(math.ceil(math.log2(n))))
    power = np.abs(np.fft.rfft(seg, nfft)) ** 2
    freqs = np.fft.rfftfreq(nfft, stride)
    # ignore everything slower than two cycles per window
    start = int(np.searchsorted(freqs, 2.0 / (n * stride)))
    if start >= len(power) - 1:
        return None
    i = start + int(np.argmax(power[start:]))
    if power[i] <= 0:
        return None
    f = freqs[i]
    if start < i < len(power) - 1 and power[i - 1] > 0 and power[i + 1] > 0:
        lm, l0, lp = np.log(power[i - 1 : i + 2])
        denom = lm - 2 * l0 + lp
        if denom < 0:
            f += 0.5 * (lm - lp) / denom * (freqs[1] - freqs[0])
    return float(1.0 / f) if f > 0 else None


def oscillation_metrics(
    traj: Trajectory,
    transient_fraction: float | None = None,
    cfg: AnalysisConfig | None = None,
    K_max: float | None = None,
) -> OscillationMetrics:
    """Amplitude (half peak-to-trough) and period (mean inter-peak gap) of each component.

    ``K_max`` sets the population prominence floor; without it the floor is taken
    relative to the largest population value in the trajectory.
    """
    cfg = cfg or AnalysisConfig()
    frac = cfg.transient_fraction if transient_fraction is None else transient_fraction
    if not 0 <= frac <= 0.9:
        raise ValueError("transient_fraction must lie in [0, 0.9]")
    if not traj.uniform:
        raise ValueError("oscillation_metrics needs a uniformly resampled trajectory")
    start = int(math.floor(frac * (len(traj) - 1)))
    t = traj.times[start:]
    if len(t) < 8:
        raise InsufficientPeaks("too few samples after the transient")
    stride = float(t[1] - t[0])
    scale = K_max if K_max is not None else float(max(np.max(np.abs(traj.y[:, :2])), 1.0))
    pop_floor = cfg.amp_floor_population * scale

    L = traj.L_v[start:]
    comp_l, halves = _component(L, t, pop_floor)
    if comp_l.peak_count < cfg.min_peaks:
        raise InsufficientPeaks(f"{comp_l.peak_count} L_v peaks after the transient, need {cfg.min_peaks}")
    comp_a, _ = _component(traj.A_v[start:], t, pop_floor)
    comp_w, _ = _component(traj.w[start:], t, cfg.amp_floor_w)
    ratio = halves[-1] / halves[0] if halves and halves[0] > 0 else 0.0
    return OscillationMetrics(
        L_v=comp_l,
        A_v=comp_a,
        w=comp_w,
        spectral_period=spectral_period(L, stride),
        amplitude_ratio=float(ratio),
    )


def is_sustained(metrics: OscillationMetrics, cfg: AnalysisConfig) -> bool:
    c = metrics.L_v
    if c.peak_count < cfg.min_peaks or c.jitter is None or c.jitter >= cfg.max_jitter:
        return False
    agree = metrics.spectral_agreement
    if agree is None or agree > cfg.spectral_tol:
        return False
    return metrics.amplitude_ratio >= cfg.min_amplitude_ratio


def detect_attractor(
    traj: Trajectory,
    equilibria: list[Equilibrium],
    params: Params,
    cfg: AnalysisConfig | None = None,
) -> AttractorOutcome:
    """Name the long-time behaviour: convergence to a listed steady state, a limit cycle, or neither."""
    cfg = cfg or AnalysisConfig()
    n = len(traj)
    if n < 20:
        raise TrajectoryTooShort(f"{n} samples; need at least 20")
    final = traj.final
    tail_start = int(math.floor((1.0 - cfg.tail_fraction) * (n - 1)))
    tail = traj.y[tail_start:]
    half = len(tail) // 2
    u_tail = traj.log_odds[tail_start:] if traj.log_odds is not None else None

    best = None
    best_err = math.inf
    for eq in equilibria:
        if not eq.exists:
            continue
        d = distance_to(params, tail, eq, cfg)
        err = float(d[-1])
        if err < best_err:
            best_err = err
        # either the whole tail already sits inside the tolerance or it is still closing in
        settling = d.max() < cfg.conv_tol or d[half:].max() <= d[: max(half, 1)].max()
        if u_tail is not None and eq.state.w in (0.0, 1.0):
            # w may look pinned while its log-odds already heads back into (0, 1)
            drift = u_tail[-1] - u_tail[half]
            settling = settling and (drift <= 0 if eq.state.w == 0.0 else drift >= 0)
        if err < cfg.conv_tol and settling and (best is None or err < best[1]):
            best = (eq, err)
    if best is not None:
        return AttractorOutcome(OutcomeKind.CONVERGED, best[0].label, final, best[1])

    if traj.uniform:
        try:
            metrics = oscillation_metrics(traj, cfg=cfg, K_max=params.K_max)
        except InsufficientPeaks:
            metrics = None
        if metrics is not None and is_sustained(metrics, cfg):
            return AttractorOutcome(OutcomeKind.OSCILLATION, None, final, best_err, metrics)
    return AttractorOutcome(OutcomeKind.UNDECIDED, None, final, best_err)


def phase_order(traj: Trajectory, transient_fraction: float = 0.5) -> float:
    """Fraction of cycles ordered as: A_v peak, then w peak, then A_v trough.

    Peaks of w are located on its log-odds when available, since w itself saturates.
    """
    start = int(math.floor(transient_fraction * (len(traj) - 1)))
    A = traj.A_v[start:]
    wv = traj.log_odds[start:] if traj.log_odds is not None else traj.w[start:]
    t = traj.times[start:]
    prom = 1e-6 * max(float(A.max()), 1.0)
    a_pk = t[_peaks(A, prom)]
    a_tr = t[_peaks(-A, prom)]
    w_pk = t[_peaks(wv, 1e-9)]
    if len(a_pk) < 2:
        return 0.0
    good = 0
    for t_a, t_next in zip(a_pk[:-1], a_pk[1:]):
        wp = w_pk[(w_pk > t_a) & (w_pk < t_next)]
        tr = a_tr[(a_tr > t_a) & (a_tr < t_next)]
        if len(wp) == 1 and len(tr) == 1 and wp[0] < tr[0]:
            good += 1
    return good / (len(a_pk) - 1)


# ---------------------------------------------------------------------------
# pointwise pipeline


def analytic_region(params: Params) -> tuple[str, dict]:
    """Which steady state the analytic conditions make LAS, or ``E05_unstable`` inside the Hopf window."""
    verdicts = {}
    for eq in enumerate_equilibria(params):
        if eq.exists:
            verdicts[eq.label.value] = classify_equilibrium(params, eq).label
    stable = [lab for lab, v in verdicts.items() if v is Stability.LAS]
    if len(stable) == 1:
        return stable[0], verdicts
    if stable:
        return "+".join(stable), verdicts
    if verdicts.get("E05") is Stability.UNSTABLE:
        return "E05_unstable", verdicts
    return "marginal", verdicts


def labels_agree(analytic: str, simulated: str) -> bool:
    if analytic == "E05_unstable":
        return simulated == "oscillation"
    return analytic == simulated


def default_stride(params: Params, t_span: tuple[float, float], samples: int = 2000) -> float:
    stride = (t_span[1] - t_span[0]) / samples
    if params.variant is Variant.PREVALENCE_DEPENDENT and params.N > 1:
        stride = min(stride, onset_period(params) / 40.0)
    return stride


def simulate_outcome(
    params: Params,
    s0: State,
    t_span: tuple[float, float],
    icfg: IntegratorConfig | None = None,
    acfg: AnalysisConfig | None = None,
    max_extensions: int = 0,
) -> tuple[AttractorOutcome, Trajectory]:
    """Integrate and classify; an undecided run is repeated with a doubled horizon up to ``max_extensions`` times."""
    icfg = icfg or IntegratorConfig()
    eqs = enumerate_equilibria(params)
    span = tuple(float(x) for x in t_span)
    for attempt in range(max_extensions + 1):
        cfg = icfg
        if icfg.sample_stride is None:
            cfg = dataclasses.replace(icfg, sample_stride=default_stride(params, span))
        traj = integrate(params, s0, span, cfg)
        outcome = detect_attractor(traj, eqs, params, acfg)
        if outcome.kind is not OutcomeKind.UNDECIDED or attempt == max_extensions:
            return outcome, traj
        span = (span[0], span[0] + 2.0 * (span[1] - span[0]))
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# sweeps

DERIVED_AXES = ("N", "rc_minus_rd", "rc_over_rd")


@dataclass(frozen=True)
class SweepAxis:
    name: str
    min: float
    max: float
    count: int
    scale: str = "linear"

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("axis count must be >= 1")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"axis scale must be linear or log, got {self.scale!r}")
        if self.scale == "log" and not (self.min > 0 and self.max > 0):
            raise ValueError("log axis needs positive bounds")
        if self.count > 1 and not self.max > self.min:
            raise ValueError("axis max must exceed min")

    def values(self) -> np.ndarray:
        if self.count == 1:
            return np.array([float(self.min)])
        if self.scale == "log":
            return np.geomspace(self.min, self.max, self.count)
        return np.linspace(self.min, self.max, self.count)


def apply_axis(params: Params, name: str, value: float) -> Params:
    """Set one swept quantity; ``N`` moves b, ``rc_minus_rd``/``rc_over_rd`` move r_c at fixed r_d."""
    value = float(value)
    if name == "N":
        return params.replace(b=b_for_offspring_number(value, params.entomology))
    if name == "rc_minus_rd":
        return params.replace(r_c=params.r_d + value)
    if name == "rc_over_rd":
        return params.replace(r_c=value * params.r_d)
    return params.replace(**{name: value})


@dataclass(frozen=True)
class SweepSpec:
    params: Params
    axis1: SweepAxis
    axis2: SweepAxis
    s0: State = State(2e4, 2e4, 0.5)
    t_span: tuple[float, float] = (0.0, 100.0)
    mode: str = "regions"
    integrator: IntegratorConfig = IntegratorConfig(rel_tol=1e-6)
    analysis: AnalysisConfig = AnalysisConfig()
    max_extensions: int = 0

    def __post_init__(self):
        if self.mode not in ("regions", "oscillations"):
            raise ValueError(f"sweep mode must be regions or oscillations, got {self.mode!r}")
        if self.max_extensions < 0:
            raise ValueError("max_extensions must be >= 0")

    def cell_params(self, i: int, j: int) -> Params:
        p = apply_axis(self.params, self.axis1.name, self.axis1.values()[i])
        return apply_axis(p, self.axis2.name, self.axis2.values()[j])


@dataclass
class CellResult:
    i: int
    j: int
    x1: float
    x2: float
    params: dict = field(default_factory=dict)
    N: float = math.nan
    ratio: float = math.nan
    analytic_label: str = ""
    simulated_label: str = ""
    convergence_error: float = math.nan
    metrics: OscillationMetrics | None = None
    error: str | None = None


@dataclass
class SweepResult:
    spec: SweepSpec
    axis1_values: np.ndarray
    axis2_values: np.ndarray
    cells: list[list[CellResult]]
    overlays: dict

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.axis1_values), len(self.axis2_values)

    def flat(self) -> list[CellResult]:
        return [c for row in self.cells for c in row]

    def grid(self, attr: str) -> np.ndarray:
        return np.array([[getattr(c, attr) for c in row] for row in self.cells], dtype=object)


def _evaluate_cell(spec: SweepSpec, i: int, j: int) -> CellResult:
    x1 = float(spec.axis1.values()[i])
    x2 = float(spec.axis2.values()[j])
    cell = CellResult(i=i, j=j, x1=x1, x2=x2)
    try:
        p = spec.cell_params(i, j)
    except ValueError as exc:
        cell.error = f"invalid parameters: {exc}"
        return cell
    cell.params = p.flat()
    cell.N = p.N
    cell.ratio = p.ratio
    try:
        cell.analytic_label, verdicts = analytic_region(p)
        if spec.mode == "regions":
            outcome, _ = simulate_outcome(p, spec.s0, spec.t_span, spec.integrator, spec.analysis, spec.max_extensions)
            cell.simulated_label = outcome.name
            cell.convergence_error = outcome.convergence_error
            cell.metrics = outcome.metrics
        else:
            if verdicts.get("E05") is not Stability.UNSTABLE:
                cell.simulated_label = "skipped"
                return cell
            span = tuple(float(x) for x in spec.t_span)
            for attempt in range(spec.max_extensions + 1):
                icfg = spec.integrator
                if icfg.sample_stride is None:
                    icfg = dataclasses.replace(icfg, sample_stride=default_stride(p, span, samples=4000))
                traj = integrate(p, spec.s0, span, icfg)
                try:
                    cell.metrics = oscillation_metrics(traj, cfg=spec.analysis, K_max=p.K_max)
                    cell.error = None
                    if is_sustained(cell.metrics, spec.analysis):
                        break
                except InsufficientPeaks as exc:
                    cell.metrics, cell.error = None, str(exc)
                span = (span[0], span[0] + 2.0 * (span[1] - span[0]))
            if cell.metrics is None:
                cell.simulated_label = "insufficient-peaks"
            else:
                cell.simulated_label = "oscillation" if is_sustained(cell.metrics, spec.analysis) else "irregular"
    except (IntegrationError, AnalyticNumericMismatch, ValueError) as exc:
        cell.error = f"{type(exc).__name__}: {exc}"
        cell.simulated_label = cell.simulated_label or "error"
    return cell


def _evaluate_star(args):
    return _evaluate_cell(*args)


def overlay_curves(spec: SweepSpec, samples: int = 200) -> dict:
    """Stability boundaries over the N range spanned by the sweep (empty when no axis sets N)."""
    names = (spec.axis1.name, spec.axis2.name)
    base = spec.params
    n_axis = next((a for a in (spec.axis1, spec.axis2) if a.name in ("N", "b")), None)
    out: dict = {"N_equals_one": 1.0}
    if n_axis is None:
        return out
    if n_axis.name == "b":
        b_vals = np.linspace(n_axis.min, n_axis.max, samples)
    else:
        b_vals = np.array([b_for_offspring_number(N, base.entomology) for N in np.linspace(n_axis.min, n_axis.max, samples)])
    Ns = [base.replace(b=b).N for b in b_vals]
    out["N"] = Ns
    v = base.variant
    if v is Variant.CONSTANT_PAYOFF:
        out["rc_minus_rd"] = 0.0
    elif v is Variant.CONSTANT_PAYOFF_WITH_INTERVENTION:
        out["rc_minus_rd"] = base.gamma / base.k
    else:
        lo, hi, x1, x2 = [], [], [], []
        for b in b_vals:
            p = base.replace(b=b)
            if p.N > 1:
                a, c = e05_existence_interval(p)
                h = hopf_analysis(p)
                lo.append(a)
                hi.append(c)
                x1.append(h.x1)
                x2.append(h.x2)
            else:
                lo.append(None)
                hi.append(None)
                x1.append(None)
                x2.append(None)
        out.update({"existence_lo": lo, "existence_hi": hi, "hopf_x1": x1, "hopf_x2": x2})
        out["ratio_axis"] = "rc_over_rd" in names
    return out


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    """Evaluate every cell; results land in pre-assigned slots so output is order independent."""
    a1, a2 = spec.axis1.values(), spec.axis2.values()
    jobs = [(spec, i, j) for i in range(len(a1)) for j in range(len(a2))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate_star, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_evaluate_cell(*job) for job in jobs]
    cells = [[None] * len(a2) for _ in range(len(a1))]
    for r in results:
        cells[r.i][r.j] = r
    return SweepResult(spec, a1, a2, cells, overlay_curves(spec))


def sweep_regions(spec: SweepSpec, workers: int = 1) -> SweepResult:
    return run_sweep(dataclasses.replace(spec, mode="regions"), workers)


def sweep_oscillations(spec: SweepSpec, workers: int = 1) -> SweepResult:
    return run_sweep(dataclasses.replace(spec, mode="oscillations"), workers)


def trend_summary(result: SweepResult) -> list[dict]:
    """Spearman correlations of N against L_v amplitude and period along each fixed axis-2 value."""
    rows = []
    for j, x2 in enumerate(result.axis2_values):
        pts = [
            (c.N, c.metrics.L_v.amplitude, c.metrics.L_v.period)
            for c in (result.cells[i][j] for i in range(len(result.axis1_values)))
            if c.metrics is not None and c.metrics.L_v.period is not None
        ]
        if len(pts) < 3:
            continue
        N, amp, per = map(np.asarray, zip(*pts))
        rows.append(
            {
                "axis2": float(x2),
                "cells": len(pts),
                "spearman_N_amplitude": float(spearmanr(N, amp).statistic),
                "spearman_N_period": float(spearmanr(N, per).statistic),
            }
        )
    return rows
