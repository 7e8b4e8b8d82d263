import itertools

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from strategies import params, states

from mosqgame.equilibria import e05, enumerate_equilibria, find
from mosqgame.model import Params, State, rhs
from mosqgame.stability import (
    AnalyticNumericMismatch,
    Method,
    Stability,
    char_poly_coeffs_e05,
    char_poly_from_matrix,
    classify_equilibrium,
    critical_imitation_rate,
    eigenvalues3,
    hopf_analysis,
    hopf_frequency,
    jacobian,
    onset_period,
    solve_cubic,
    transversality_rate,
)

from conftest import FIG2, FIG4


def fd_jacobian(p, s):
    scale = np.array([p.K_max, p.nu_L / p.mu_A * p.K_max, 1.0])
    J = np.zeros((3, 3))
    for j in range(3):
        h = 1e-6 * scale[j]
        up, dn = np.array(s, float), np.array(s, float)
        up[j] += h
        dn[j] -= h
        J[:, j] = (np.array(rhs(p, State(*up), check=False)) - np.array(rhs(p, State(*dn), check=False))) / (2 * h)
    return J


class TestJacobian:
    def test_e01_decouples(self, fig2):
        J = jacobian(fig2, State(0.0, 0.0, 0.0))
        assert J[2, 2] == pytest.approx(0.8 * (1.0 - 1.5))
        assert J[2, 0] == J[2, 1] == J[0, 2] == J[1, 2] == 0.0

    def test_e05_w_diagonal_vanishes(self, fig4):
        J = jacobian(fig4, e05(fig4).state)
        assert abs(J[2, 2]) < 1e-12

    @pytest.mark.parametrize("variant", ["constant-payoff", "prevalence-dependent", "intervention"])
    @given(data=st.data())
    def test_matches_finite_differences(self, variant, data):
        p = data.draw(params(variant))
        s = data.draw(states(p))
        # keep clear of the box faces so central differences stay inside
        s = State(0.05 * p.K_max + 0.9 * s.L_v, 0.05 * p.K_max + 0.9 * s.A_v, 0.05 + 0.9 * s.w)
        assume(s.A_v <= p.nu_L / p.mu_A * p.K_max)
        J, F = jacobian(p, s), fd_jacobian(p, s)
        col_scale = np.array([p.K_max, p.nu_L / p.mu_A * p.K_max, 1.0])
        # compare entries weighted by the size of the perturbation they respond to
        row_size = np.max(np.abs(F) * col_scale, axis=1, keepdims=True)
        # rows that vanish exactly (w row at a payoff tie) leave only differencing noise
        floor = 1e-8 * np.array([[p.K_max], [p.nu_L / p.mu_A * p.K_max], [1.0]])
        assert np.all(np.abs(J - F) * col_scale < 1e-6 * row_size + floor), (J, F)

    def test_intervention_entry_matches_supplementary_polynomial(self, fig_s):
        # at w*, the w-equation slope is k (r_d - r_c)(1 - 2 w*) - gamma = -(k (r_c - r_d) - gamma)
        eq = find(enumerate_equilibria(fig_s), "E01_tilde")
        J = jacobian(fig_s, eq.state)
        assert J[2, 2] == pytest.approx(-(0.8 * 1.5 - 0.4))


class TestCubic:
    def test_diagonal(self):
        ev = eigenvalues3(np.diag([-1.0, -2.0, -3.0]))
        assert [z.real for z in ev] == pytest.approx([-1.0, -2.0, -3.0])
        assert all(z.imag == 0 for z in ev)

    def test_sorting_and_conjugates(self):
        J = np.array([[0.0, -2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
        ev = eigenvalues3(J)
        assert ev[0] == pytest.approx(2j, abs=1e-12) and ev[1] == pytest.approx(-2j, abs=1e-12)
        assert ev[0] == ev[1].conjugate()
        assert ev[2] == pytest.approx(-1.0)

    @given(st.lists(st.floats(-10, 10, allow_subnormal=False), min_size=9, max_size=9))
    def test_random_matrix_residual(self, entries):
        J = np.array(entries).reshape(3, 3)
        norm = max(np.abs(J).sum(axis=1).max(), 1e-3)
        ev = eigenvalues3(J)
        for lam in ev:
            assert abs(np.linalg.det(J - lam * np.eye(3))) < 1e-8 * norm**3
        ref = np.linalg.eigvals(J)
        # pair roots by the best matching, sort order is fragile when real parts tie
        gap = min(max(abs(ev[i] - r) for i, r in zip(perm, ref)) for perm in itertools.permutations(range(3)))
        assert gap < 1e-5 * norm

    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
    def test_roots_of_monic(self, r1, r2, r3):
        c2 = -(r1 + r2 + r3)
        c1 = r1 * r2 + r1 * r3 + r2 * r3
        c0 = -r1 * r2 * r3
        roots = solve_cubic(c2, c1, c0)
        for z in roots:
            assert abs(((z + c2) * z + c1) * z + c0) < 1e-8 * (1 + abs(c2) + abs(c1) + abs(c0)) ** 1.5


class TestRouthHurwitz:
    def test_fig4_coefficients(self, fig4):
        c = char_poly_coeffs_e05(fig4)
        assert c.a1 == pytest.approx(0.014, rel=1e-13)
        assert c.a2 == pytest.approx(0.34, rel=1e-13)
        assert c.Q == pytest.approx(0.425, rel=1e-13)

    def test_endpoints_zero_a0(self, fig4):
        hopf = hopf_analysis(fig4)
        for x in (hopf.lo, hopf.hi):
            assert char_poly_coeffs_e05(fig4.replace(r_c=x)).a0 == 0.0

    @given(params(), st.floats(0.01, 0.99))
    def test_matrix_coefficients_match(self, p, pos):
        assume(p.N > 1.01)
        lo, hi = hopf_analysis(p).lo, hopf_analysis(p).hi
        q = p.replace(r_c=p.r_d * (lo + pos * (hi - lo)))
        c = char_poly_coeffs_e05(q)
        state = e05(q).state
        J = jacobian(q, state)
        c2, c1, c0 = char_poly_from_matrix(J)
        # J[2, 2] is exactly zero at E05 but is computed as a difference of terms of size k |1 - 2w| r_c
        d33 = 4 * np.finfo(float).eps * q.k * abs(1 - 2 * state.w) * q.r_c
        A = np.abs(J)
        s1 = sum(A[i, i] * A[j, j] + A[i, j] * A[j, i] for i in range(3) for j in range(i + 1, 3))
        s0 = sum(A[0, i] * A[1, j] * A[2, k] for i, j, k in itertools.permutations(range(3)))
        assert abs(c2 - c.a2) <= d33 + 1e-8 * abs(c.a2)
        assert abs(c1 - c.a1) <= 1e-12 * s1 + d33 * (A[0, 0] + A[1, 1]) + 1e-8 * abs(c.a1)
        assert abs(c0 - c.a0) <= 1e-12 * s0 + d33 * abs(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]) + 1e-8 * abs(c.a0)

    @given(params())
    def test_positive_lower_coefficients(self, p):
        assume(p.N > 1)
        c = char_poly_coeffs_e05(p)
        assert c.a2 > 0 and c.a1 > 0

    def test_rejects_no_persistence(self):
        with pytest.raises(ValueError):
            char_poly_coeffs_e05(Params.from_flat("prevalence", b=0.5, **FIG4))


class TestHopf:
    def test_fig4_window_against_extended_precision(self, fig4):
        mpmath.mp.dps = 50
        B, C = mpmath.mpf(63000), mpmath.mpf(180024225)
        x1 = (B - mpmath.sqrt(B * B - 4 * C)) / 2
        x2 = (B + mpmath.sqrt(B * B - 4 * C)) / 2
        h = hopf_analysis(fig4)
        assert h.B == pytest.approx(63000.0, rel=1e-13)
        assert h.C == pytest.approx(180024225.0, rel=1e-13)
        assert h.discriminant > 0
        assert h.x1 == pytest.approx(float(x1), rel=1e-12)
        assert h.x2 == pytest.approx(float(x2), rel=1e-12)
        assert h.lo < h.x1 < h.x2 < h.hi

    def test_critical_rate(self, fig4):
        kc = critical_imitation_rate(fig4)
        assert kc == pytest.approx(19380.0 / (63000.0 * 9000 - 9000.0**2 - 0.06**2 * 0.25 * 2e6 * 1e5), rel=1e-12)
        assert kc == pytest.approx(6.333333333333333e-05, rel=1e-12)
        c = char_poly_coeffs_e05(fig4.replace(k=kc))
        assert abs(c.hurwitz_gap) <= 1e-8 * c.a2 * c.a1

    def test_no_critical_rate_outside_window(self, fig4):
        assert critical_imitation_rate(fig4, ratio=2000.0) is None

    def test_negative_discriminant(self, fig4):
        # small k inflates C past B^2 / 4
        p = fig4.replace(k=1e-6)
        h = hopf_analysis(p)
        assert h.discriminant < 0 and h.window is None
        for x in np.linspace(h.lo, h.hi, 9)[1:-1]:
            q = p.replace(r_c=x)
            assert classify_equilibrium(q, e05(q)).label is Stability.LAS

    def test_frequency(self, fig4):
        assert hopf_frequency(fig4) == pytest.approx(0.11832159566199232, rel=1e-13)
        assert hopf_frequency(fig4) ** 2 == pytest.approx(char_poly_coeffs_e05(fig4).a1, rel=1e-14)
        assert onset_period(fig4) == pytest.approx(53.10260795610529, rel=1e-12)

    def test_frequency_vanishes_at_threshold(self):
        p = Params.from_flat("prevalence", b=1.4 / 1.99999, **FIG4)
        assert hopf_frequency(p) < 1e-2

    def test_eigenvalues_at_boundary(self, fig4):
        p = fig4.replace(k=critical_imitation_rate(fig4))
        c = char_poly_coeffs_e05(p)
        ev = eigenvalues3(jacobian(p, e05(p).state))
        pair = [z for z in ev if z.imag != 0]
        assert len(pair) == 2
        assert all(abs(z.real) < 1e-8 * c.a2 for z in pair)
        assert max(abs(z.imag) for z in pair) == pytest.approx(np.sqrt(c.a1), rel=1e-6)
        real = [z for z in ev if z.imag == 0][0]
        assert real.real == pytest.approx(-c.a2, rel=1e-8)

    @given(params(), st.floats(0.05, 0.95))
    def test_roots_inside_existence_interval(self, p, _):
        assume(p.N > 1)
        h = hopf_analysis(p)
        if h.discriminant > 0:
            assert h.lo < h.x1 < h.x2 < h.hi

    @pytest.mark.parametrize("ratio", [6000.0, 9000.0, 20000.0, 50000.0])
    def test_crossing_and_transversality(self, fig4, ratio):
        p = fig4.replace(r_c=ratio)
        kc = critical_imitation_rate(p)

        def pair_real(k):
            q = p.replace(k=k)
            return max(z.real for z in eigenvalues3(jacobian(q, e05(q).state)))

        assert pair_real(0.9 * kc) < 0 < pair_real(1.1 * kc)
        dk = 1e-4 * kc
        slope = (pair_real(kc + dk) - pair_real(kc - dk)) / (2 * dk)
        assert slope > 0
        assert slope == pytest.approx(transversality_rate(p.replace(k=kc)), rel=0.2)


class TestClassify:
    def test_constant_payoff_fig2(self, fig2):
        got = {e.label.value: classify_equilibrium(fig2, e) for e in enumerate_equilibria(fig2) if e.exists}
        assert got["E03"].label is Stability.LAS and got["E03"].method is Method.BOTH
        assert all(got[k].label is Stability.UNSTABLE for k in ("E01", "E02", "E04"))

    def test_fig4_e05_unstable(self, fig4):
        v = classify_equilibrium(fig4, e05(fig4))
        assert v.label is Stability.UNSTABLE and v.method is Method.BOTH

    def test_above_interval_e03_las(self, fig4):
        p = fig4.replace(r_c=70000.0)
        assert classify_equilibrium(p, find(enumerate_equilibria(p), "E03")).label is Stability.LAS

    def test_boundary_cases_marginal(self, fig4):
        lo = hopf_analysis(fig4).lo
        p = fig4.replace(r_c=lo)
        v = classify_equilibrium(p, e05(p))
        assert v.label is Stability.MARGINAL
        q = Params.from_flat("constant", b=10.0, r_c=1.0, r_d=1.0, **FIG2)
        v = classify_equilibrium(q, find(enumerate_equilibria(q), "E03"))
        assert v.label is Stability.MARGINAL

    def test_rejects_missing_equilibrium(self):
        p = Params.from_flat("prevalence", b=0.5, **FIG4)
        with pytest.raises(ValueError):
            classify_equilibrium(p, e05(p))

    def test_mismatch_is_reported(self, fig2, monkeypatch):
        import mosqgame.stability as stab

        monkeypatch.setattr(stab, "analytic_verdict", lambda p, e: (Stability.LAS, "forced"))
        with pytest.raises(AnalyticNumericMismatch) as info:
            stab.classify_equilibrium(fig2, find(enumerate_equilibria(fig2), "E01"))
        assert info.value.analytic is Stability.LAS and info.value.numeric is Stability.UNSTABLE

    @given(params(), st.floats(0.3, 3.0))
    def test_prevalence_verdicts_scale_invariant_off_e05(self, p, c):
        q = p.replace(r_c=p.r_c * c, r_d=p.r_d * c)
        for e_p, e_q in zip(enumerate_equilibria(p), enumerate_equilibria(q)):
            if e_p.exists and e_p.label.value != "E05":
                v_p, v_q = classify_equilibrium(p, e_p).label, classify_equilibrium(q, e_q).label
                # the eigenvalue tolerance grows with r_d through the w row, so Marginal may appear on one side only
                if Stability.MARGINAL not in (v_p, v_q):
                    assert v_p is v_q
