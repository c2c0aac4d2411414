import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from mhv import timeint as ti


def linear_system(lam):
    return ti.SemiDiscreteSystem(explicit=lambda c, t: lam * c)


class TestRKAmplification:
    @pytest.mark.parametrize("s", [1, 2, 3, 4])
    def test_amplification_is_taylor_polynomial(self, s):
        """For dc/dt = lam c one step multiplies by the degree-s Taylor
        polynomial of e^z at z = lam dt, exactly."""
        lam = -0.3 + 1.1j
        dt = 0.7
        z = lam * dt
        expect = sum(z**k / math.factorial(k) for k in range(s + 1))
        c = ti.rk_step(lambda c, t: lam * c, np.array([1.0 + 0j]), 0.0, dt, s)
        assert c[0] == pytest.approx(expect, rel=1e-14)

    def test_invalid_stage_count(self):
        with pytest.raises(ValueError):
            ti.rk_step(lambda c, t: c, np.zeros(1), 0.0, 0.1, 5)

    @pytest.mark.parametrize("s,order", [(1, 1), (2, 2), (3, 3), (4, 4)])
    def test_observed_order(self, s, order):
        lam = -1.0
        errs = []
        for n in (32, 64):
            c = np.array([1.0])
            dt = 1.0 / n
            for i in range(n):
                c = ti.rk_step(lambda c, t: lam * c, c, i * dt, dt, s)
            errs.append(abs(c[0] - np.exp(lam)))
        p = np.log2(errs[0] / errs[1])
        assert p == pytest.approx(order, abs=0.15)


class TestAdamsBashforth:
    def test_ab2_textbook_step(self):
        """AB2: c + dt (3/2 f^n - 1/2 f^{n-1}), by hand."""
        c = np.array([2.0])
        hist = [np.array([1.0]), np.array([4.0])]
        out = ti.ab_step(c, hist, 0.1, 2)
        assert out[0] == pytest.approx(2.0 + 0.1 * (1.5 * 1.0 - 0.5 * 4.0))

    def test_ab2_growth_root(self):
        """The AB2 characteristic polynomial r^2 - (1 + 3z/2) r + z/2 = 0
        must annihilate the numerical amplification of a linear problem."""
        lam, dt = -0.8, 0.05
        z = lam * dt
        sys = linear_system(lam)
        n = 40
        c = ti.integrate(sys, np.array([1.0]), dt, n, method="ab2")
        # after priming, iterates follow c_{k+1} = r c_k with r the principal
        # root; check the root equation on three consecutive iterates
        states = []
        ti.integrate(sys, np.array([1.0]), dt, n, method="ab2",
                     callback=lambda i, t, c: states.append(c[0]))
        a, b, cc = states[-3], states[-2], states[-1]
        resid = cc - (1 + 1.5 * z) * b + 0.5 * z * a
        assert abs(resid) < 1e-14 * abs(b)
        assert abs(c[0] - np.exp(lam * dt * n)) < 1e-3

    def test_history_length_guard(self):
        with pytest.raises(ValueError):
            ti.ab_step(np.zeros(1), [np.zeros(1)], 0.1, 2)
        with pytest.raises(ValueError):
            ti.ab_step(np.zeros(1), [np.zeros(1)], 0.1, 7)

    @pytest.mark.parametrize("s,order", [(2, 2), (3, 3), (4, 4)])
    def test_observed_order(self, s, order):
        lam = -1.0
        errs = []
        for n in (64, 128):
            sys = linear_system(lam)
            c = ti.integrate(sys, np.array([1.0]), 1.0 / n, n,
                             method=f"ab{s}")
            errs.append(abs(c[0] - np.exp(lam)))
        p = np.log2(errs[0] / errs[1])
        assert p == pytest.approx(order, abs=0.2)


class TestSBDF:
    def test_sbdf2_closed_form_step(self):
        """Implicit-only SBDF2: c^{n+1} = (4 c^n - c^{n-1}) / (3 - 2 dt lam)."""
        lam, dt = -2.0, 0.1
        A = sp.csr_matrix(np.array([[lam]]))
        sys = ti.SemiDiscreteSystem(explicit=lambda c, t: 0.0 * c, implicit=A)
        solver = ti.SBDFSolver(sys, dt, 2)
        cn, cm = np.array([1.3]), np.array([1.1])
        out = solver.step([cn, cm], [np.zeros(1), np.zeros(1)], 0.0)
        assert out[0] == pytest.approx((4 * 1.3 - 1.1) / (3 - 2 * dt * lam))

    @pytest.mark.parametrize("order,expected", [(1, 1), (2, 2), (3, 3), (4, 4)])
    def test_self_convergence_order(self, order, expected):
        """Mixed stiff/nonstiff linear system against the expm oracle."""
        rng = np.random.default_rng(0)
        n = 12
        Q = sla.qr(rng.normal(size=(n, n)))[0]
        A = sp.csr_matrix(Q @ np.diag(-np.linspace(1, 60, n)) @ Q.T)
        B = 0.5 * rng.normal(size=(n, n))
        B -= np.linalg.eigvals(B).real.max() * np.eye(n)  # keep it tame
        c0 = rng.normal(size=n)
        exact = sla.expm((A.toarray() + B) * 1.0) @ c0
        sys = ti.SemiDiscreteSystem(explicit=lambda c, t: B @ c, implicit=A)
        errs = []
        for steps in (256, 512):
            c = ti.integrate(sys, c0, 1.0 / steps, steps,
                             method=f"sbdf{order}")
            errs.append(np.linalg.norm(c - exact))
        p = np.log2(errs[0] / errs[1])
        assert p > expected - 0.35

    def test_factorization_cached(self):
        A = sp.csr_matrix(np.diag([-1.0, -2.0]))
        sys = ti.SemiDiscreteSystem(explicit=lambda c, t: 0 * c, implicit=A)
        solver = ti.SBDFSolver(sys, 0.1, 2)
        solver.step([np.ones(2), np.ones(2)], [np.zeros(2)] * 2, 0.0)
        assert 2 in solver._factors
        f = solver._factors[2]
        solver.step([np.ones(2), np.ones(2)], [np.zeros(2)] * 2, 0.1)
        assert solver._factors[2] is f

    def test_invalid_order(self):
        sys = linear_system(-1.0)
        with pytest.raises(ValueError):
            ti.SBDFSolver(sys, 0.1, 5)

    def test_priming_substeps_scale_with_stiffness(self):
        A = sp.csr_matrix(np.diag([-1e4]))
        sys = ti.SemiDiscreteSystem(explicit=lambda c, t: 0 * c, implicit=A)
        m = ti._priming_substeps(sys, dt=0.1)
        assert m >= 0.1 * 1e4 / 2.5
        assert ti._priming_substeps(linear_system(-1.0), 0.1) == 4

    def test_stiff_start_is_stable(self):
        """A stiff implicit mode must not blow up during RK4 priming."""
        A = sp.csr_matrix(np.diag([-5e3, -1.0]))
        sys = ti.SemiDiscreteSystem(explicit=lambda c, t: 0 * c, implicit=A)
        c = ti.integrate(sys, np.array([1.0, 1.0]), 0.05, 20, method="sbdf4")
        assert np.all(np.isfinite(c))
        assert abs(c[1] - np.exp(-1.0)) < 1e-5


class TestDriver:
    def test_unknown_method(self):
        with pytest.raises(ValueError, match="unknown method"):
            ti.integrate(linear_system(-1.0), np.zeros(1), 0.1, 1,
                         method="leapfrog")

    def test_blow_up_detection(self):
        sys = linear_system(50.0)  # forward Euler wildly unstable
        with pytest.raises(ti.BlowUpError) as err, \
                np.errstate(over="ignore"):
            ti.integrate(sys, np.array([1.0]), 10.0, 500, method="rk1")
        assert err.value.step >= 0

    def test_callback_sees_every_step(self):
        seen = []
        ti.integrate(linear_system(-1.0), np.ones(3), 0.1, 7, method="rk2",
                     callback=lambda i, t, c: seen.append((i, t)))
        assert [i for i, _ in seen] == list(range(7))
        assert seen[-1][1] == pytest.approx(0.7)

    def test_determinism(self):
        rng = np.random.default_rng(5)
        B = rng.normal(size=(6, 6)) - 3 * np.eye(6)
        A = sp.csr_matrix(np.diag(-np.arange(1.0, 7.0)))
        sys = ti.SemiDiscreteSystem(explicit=lambda c, t: B @ c, implicit=A)
        c0 = rng.normal(size=6)
        a = ti.integrate(sys, c0, 0.01, 50, method="sbdf3")
        b = ti.integrate(sys, c0, 0.01, 50, method="sbdf3")
        assert np.array_equal(a, b)

    def test_methods_registry(self):
        assert set(ti.METHODS) == {f"{p}{k}" for p in ("rk", "ab", "sbdf")
                                   for k in (1, 2, 3, 4)}
