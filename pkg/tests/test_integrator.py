import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from strategies import params, states

from mosqgame.equilibria import enumerate_equilibria, find
from mosqgame.integrator import (
    IntegratorConfig,
    InvalidInitialState,
    MaxStepsExceeded,
    integrate,
)
from mosqgame.model import Params, State, rhs
from mosqgame.stability import eigenvalues3, jacobian

from conftest import FIG2

S0 = State(2e4, 2e4, 0.5)


def rel_err(a, b, floor):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


def tight(p, tol, mode="auto"):
    # absolute tolerances well below tol * value, so the relative tolerance sets the error
    return IntegratorConfig(
        rel_tol=tol,
        abs_tol=(1e-3 * tol * p.K_max, 1e-3 * tol * p.K_max, 1e-3 * tol),
        abs_tol_log_odds=1e-3 * tol,
        w_coordinates=mode,
    )


class TestExamples:
    def test_fig2_reaches_e03_within_500_days(self, fig2):
        traj = integrate(fig2, S0, (0.0, 500.0))
        e03 = find(enumerate_equilibria(fig2), "E03").state
        assert rel_err(traj.final[:2], e03[:2], 1.0) < 0.01
        assert abs(traj.final.w - e03.w) < 0.01

    @pytest.mark.xfail(strict=True, reason="slowest mode at E03 decays no faster than mu_A = 0.04/day; adults are ~4% off at t=100")
    def test_fig2_reaches_e03_within_100_days(self, fig2):
        traj = integrate(fig2, S0, (0.0, 100.0))
        e03 = find(enumerate_equilibria(fig2), "E03").state
        assert rel_err(traj.final[:2], e03[:2], 1.0) < 0.01

    def test_fig2_approach_rate_matches_slowest_eigenvalue(self, fig2):
        e03 = np.array(find(enumerate_equilibria(fig2), "E03").state)
        traj = integrate(fig2, S0, (0.0, 400.0), IntegratorConfig(sample_stride=50.0))
        gap = np.abs(traj.A_v - e03[1])
        rate = np.log(gap[-1] / gap[-3]) / 100.0
        slow = max(z.real for z in eigenvalues3(jacobian(fig2, State(*e03))))
        assert rate == pytest.approx(slow, rel=0.02)

    @pytest.mark.parametrize("span", [(0.0, 10.0), (0.0, 500.0), (-50.0, 3000.0)])
    def test_e04_start_is_constant(self, fig2, span):
        e04 = np.array(find(enumerate_equilibria(fig2), "E04").state)
        cfg = IntegratorConfig()
        traj = integrate(fig2, State(*e04), span, cfg)
        # the same weighted RMS norm the step controller enforces
        scale = np.array(cfg.resolved_abs_tol(fig2)) + cfg.rel_tol * np.abs(e04)
        assert np.max(np.sqrt(np.mean(((traj.y - e04) / scale) ** 2, axis=1))) <= 1.0

    def test_samples_cover_span(self, fig4):
        traj = integrate(fig4, State(151500.0, 30000.0, 17 / 19), (5.0, 105.0), IntegratorConfig(sample_stride=0.5))
        assert traj.times[0] == 5.0 and traj.times[-1] == 105.0
        assert len(traj) == 201 and traj.uniform
        assert np.all(np.diff(traj.times) > 0)

    def test_step_points_strictly_increasing(self, fig2):
        traj = integrate(fig2, S0, (0.0, 100.0))
        assert traj.times[0] == 0.0 and traj.times[-1] == 100.0
        assert np.all(np.diff(traj.times) > 0)
        assert traj.n_accepted == len(traj) - 1


class TestAccuracy:
    def test_matches_independent_solver(self, fig2):
        ref = solve_ivp(
            lambda t, y: rhs(fig2, State(*y), check=False),
            (0.0, 30.0),
            list(S0),
            method="DOP853",
            rtol=1e-13,
            atol=[1e-9, 1e-9, 1e-16],
        ).y[:, -1]
        for mode in ("linear", "auto"):
            assert rel_err(integrate(fig2, S0, (0.0, 30.0), tight(fig2, 1e-12, mode)).final, ref, 0.0) < 1e-10

    @pytest.mark.parametrize("mode", ["linear", "auto"])
    def test_error_tracks_tolerance(self, fig2, mode):
        ref = integrate(fig2, S0, (0.0, 30.0), tight(fig2, 1e-12, mode)).final
        errs = [rel_err(integrate(fig2, S0, (0.0, 30.0), tight(fig2, tol, mode)).final, ref, 0.0) for tol in (1e-4, 1e-6, 1e-8)]
        for tol, e in zip((1e-4, 1e-6, 1e-8), errs):
            assert e < 10 * tol
        # each hundredfold tightening buys between one and three decades
        for coarse, fine in zip(errs, errs[1:]):
            assert 10.0 <= coarse / fine <= 1000.0

    @pytest.mark.parametrize("variant", ["constant", "prevalence", "intervention"])
    def test_self_convergence(self, variant):
        p = Params.from_flat(variant, b=10.0, r_c=2.0, r_d=1.5, gamma=0.2, m=0.3, **FIG2)
        coarse = IntegratorConfig(rel_tol=1e-6)
        fine = IntegratorConfig(rel_tol=5e-7, abs_tol=tuple(0.5 * a for a in coarse.resolved_abs_tol(p)), abs_tol_log_odds=5e-9)
        a = integrate(p, S0, (0.0, 100.0), coarse).final
        b = integrate(p, S0, (0.0, 100.0), fine).final
        assert rel_err(a, b, np.array([p.K_max, p.K_max, 1.0]) * 1e-3) < 1e-5


class TestInvariants:
    @given(st.sampled_from(["constant", "prevalence", "intervention"]), st.data())
    def test_box_containment(self, variant, data):
        p = data.draw(params(variant))
        s0 = data.draw(states(p))
        cfg = IntegratorConfig(rel_tol=1e-6, max_steps=20_000)
        try:
            traj = integrate(p, s0, (0.0, 50.0), cfg)
        except MaxStepsExceeded:
            assume(False)
        eps = 10 * cfg.rel_tol
        assert np.all(traj.L_v >= -eps * p.K_max)
        assert np.all(traj.A_v >= -eps * p.nu_L / p.mu_A * p.K_max)
        assert np.all(traj.w >= -eps) and np.all(traj.w <= 1 + eps)
        assert np.all(traj.L_v <= p.K_max * (1 + eps))

    @given(st.sampled_from(["constant", "prevalence"]), st.data())
    def test_w_faces_are_invariant(self, variant, data):
        p = data.draw(params(variant))
        s0 = data.draw(states(p))
        face = data.draw(st.sampled_from([0.0, 1.0]))
        traj = integrate(p, State(s0.L_v, s0.A_v, face), (0.0, 20.0), IntegratorConfig(rel_tol=1e-6, max_steps=20_000))
        assert np.all(traj.w == face)

    def test_bitwise_determinism(self, fig4):
        cfg = IntegratorConfig(rel_tol=1e-7, sample_stride=0.25)
        s0 = State(151500.0, 30000.0, 17 / 19)
        a = integrate(fig4, s0, (0.0, 400.0), cfg)
        b = integrate(fig4, s0, (0.0, 400.0), cfg)
        assert a.times.tobytes() == b.times.tobytes()
        assert a.y.tobytes() == b.y.tobytes()
        assert (a.n_accepted, a.n_rejected) == (b.n_accepted, b.n_rejected)

    def test_log_odds_keeps_tiny_w(self, fig4):
        # strong imitation drives w far below double precision in plain coordinates
        traj = integrate(fig4, State(151500.0, 30000.0, 17 / 19), (0.0, 400.0))
        assert traj.meta["w_coordinates"] == "log-odds"
        assert np.all(np.isfinite(traj.log_odds))
        assert traj.log_odds.min() < -30.0


class TestErrors:
    def test_rejects_bad_span(self, fig2):
        for span in [(10.0, 10.0), (10.0, 0.0), (0.0, math.inf), (math.nan, 1.0)]:
            with pytest.raises(ValueError):
                integrate(fig2, S0, span)

    @pytest.mark.parametrize(
        "s0", [State(-1.0, 0.0, 0.5), State(0.0, 0.0, 1.5), State(3e6, 0.0, 0.5), State(0.0, 1e9, 0.5), State(0.0, math.nan, 0.5)]
    )
    def test_invalid_initial_state(self, fig2, s0):
        with pytest.raises(InvalidInitialState):
            integrate(fig2, s0, (0.0, 1.0))

    def test_max_steps(self, fig2):
        with pytest.raises(MaxStepsExceeded):
            integrate(fig2, S0, (0.0, 100.0), IntegratorConfig(max_steps=5))

    @pytest.mark.parametrize(
        "kwargs",
        [dict(rel_tol=0.0), dict(abs_tol=(1.0, 1.0)), dict(abs_tol=(1.0, -1.0, 1.0)), dict(max_step=0.0), dict(max_steps=0), dict(sample_stride=-1.0), dict(w_coordinates="polar")],
    )
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            IntegratorConfig(**kwargs)

    def test_log_odds_refused_on_face(self, fig2):
        with pytest.raises(ValueError):
            integrate(fig2, State(2e4, 2e4, 0.0), (0.0, 1.0), IntegratorConfig(w_coordinates="log-odds"))
