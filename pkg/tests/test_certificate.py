"""Certificate arithmetic: constants, chains, identities, smallness."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsbox.certificate import (
    a_chain,
    abar_chain,
    b_chain,
    certificate_report,
    gamma_star,
    geometric_envelope,
    smallness_check,
    t_star,
)
from nsbox.constants import (
    InterpolationConstants,
    PoincareConstants,
    analytic_primitives,
    certify_poincare_sharpness,
    interpolation_constants,
    lattice_sum,
    poincare_constants,
)
from nsbox.forcing import CompositeForcing, ConstantMeanForcing, DecayingModeForcing, ZeroForcing
from nsbox.spectral import PeriodicGrid, SpectralField, transform_forward

TWO_PI = 2.0 * np.pi


def unit_h1_profile(grid):
    x1, x2 = grid.coords()
    a = TWO_PI / grid.L
    samples = np.stack(
        [np.cos(a * (x1 + x2)) * np.ones(grid.shape), -np.cos(a * (x1 + x2)) * np.ones(grid.shape)]
    )
    f = transform_forward(grid, samples)
    f = SpectralField(grid, f.coeffs, mean_free=True, solenoidal=True)
    return f * (1.0 / f.sobolev_norm(1))


class ConstantBarForcing(DecayingModeForcing):
    """Constant-in-time mean-free forcing for closed-form chain checks."""

    def __init__(self, profile):
        super().__init__(profile, rate=1.0)  # rate unused below

    def bar_field(self, t):
        return self.profile

    def bar_norm_sq(self, t, norm="l2"):
        return self._norm_sq[norm]

    def window_bar_sq_integral(self, k, T, norm="l2"):
        return self._norm_sq[norm] * T

    def sup_window_bar_sq(self, T, k_max=64, norm="l2"):
        return self._norm_sq[norm] * T, True


class TestPoincare:
    def test_reference_value(self):
        pc = poincare_constants(nu=1.0, L=TWO_PI)
        assert pc.kappa == pytest.approx(1.0)
        assert pc.c_s1 == pytest.approx(0.5)
        assert pc.c_1 == pc.c_s1

    def test_single_mode_rayleigh_oracle(self):
        g = PeriodicGrid(L=TWO_PI, dim=2, N=16)
        pc = poincare_constants(1.0, TWO_PI)
        x1 = g.coords()[0]
        low = transform_forward(g, np.sin(x1) * np.ones(g.shape))
        ratio = pc.nu * low.grad_norm_sq() / low.sobolev_norm_sq(1)
        assert ratio == pytest.approx(pc.c_s1, rel=1e-12)

    def test_decreases_with_box_size(self):
        vals = [poincare_constants(1.0, L).c_s1 for L in (TWO_PI, 2 * TWO_PI, 4 * TWO_PI)]
        assert vals[0] > vals[1] > vals[2] > 0

    def test_linear_in_viscosity(self):
        a = poincare_constants(1.0, 3.0).c_s1
        b = poincare_constants(2.0, 3.0).c_s1
        assert b == pytest.approx(2 * a, rel=1e-14)

    def test_sharpness_certificate(self):
        pc = poincare_constants(0.7, TWO_PI)
        g = PeriodicGrid(L=TWO_PI, dim=2, N=16)
        rep = certify_poincare_sharpness(pc, g, np.random.default_rng(1), n=100)
        assert rep["min_ratio"] >= pc.c_s1 * (1 - 1e-12)
        assert rep["lowest_mode_ratio"] == pytest.approx(pc.c_s1, rel=1e-10)

    def test_validation(self):
        with pytest.raises(ValueError):
            poincare_constants(-1.0, 1.0)


class TestTStar:
    def test_values(self):
        pc = PoincareConstants(nu=1.0, L=TWO_PI, kappa=1.0, c_s1=0.5, c_1=0.5)
        assert t_star(pc) == pytest.approx(4 * math.log(2))
        pc2 = PoincareConstants(nu=1.0, L=1.0, kappa=1.0, c_s1=math.log(2), c_1=math.log(2))
        assert t_star(pc2) == pytest.approx(2.0)

    def test_reciprocal_scaling(self):
        pc = PoincareConstants(nu=1.0, L=1.0, kappa=1.0, c_s1=0.3, c_1=0.3)
        pc2 = PoincareConstants(nu=1.0, L=1.0, kappa=1.0, c_s1=0.6, c_1=0.6)
        assert t_star(pc2) == pytest.approx(t_star(pc) / 2)


class TestGammaStar:
    def _consts(self, c3):
        return InterpolationConstants(
            mode="analytic_conservative", c_s2=1, c_s3=1, c_s4=1, c_2=1, c_3=c3, c_4=c3
        )

    def test_reference_value(self):
        pc = PoincareConstants(nu=1.0, L=1.0, kappa=1.0, c_s1=0.5, c_1=0.5)
        gs = gamma_star(self._consts(8.0), pc)
        assert gs == pytest.approx((1 / 32) ** 0.25, rel=1e-12)

    def test_quartic_scaling(self):
        pc = PoincareConstants(nu=1.0, L=1.0, kappa=1.0, c_s1=0.5, c_1=0.5)
        assert gamma_star(self._consts(4 * 3.0), pc) == pytest.approx(
            gamma_star(self._consts(3.0), pc) / math.sqrt(2), rel=1e-12
        )


class TestGeometricEnvelope:
    @given(
        a=st.floats(0, 10),
        r=st.floats(0, 0.999),
        x0=st.floats(0, 10),
        k=st.integers(0, 50),
    )
    @settings(max_examples=200, deadline=None)
    def test_matches_direct_recursion(self, a, r, x0, k):
        x = x0
        for _ in range(k):
            x = a + r * x
        env = geometric_envelope(a, r, x0, k)
        assert x <= env + 1e-12 * max(1.0, env)
        # the envelope is exact up to the closed geometric sum
        direct = a * (1 - r**k) / (1 - r) + r**k * x0
        assert env == pytest.approx(a / (1 - r) + r**k * x0, rel=1e-12)
        assert direct <= env + 1e-12 * max(1.0, env)

    def test_validation(self):
        with pytest.raises(ValueError):
            geometric_envelope(1.0, 1.0, 0.0, 3)
        with pytest.raises(ValueError):
            geometric_envelope(-1.0, 0.5, 0.0, 3)


class TestConstants:
    def test_lattice_sum_bounds(self):
        # against coarse partial sums: value must dominate (it is an upper bound)
        m = np.arange(-30, 31)
        g1, g2 = np.meshgrid(m, m, indexing="ij")
        msq = g1**2 + g2**2
        msq = np.where(msq == 0, np.inf, msq).astype(float)
        partial = np.sum(msq ** (-2.0))
        assert lattice_sum(4, 2) >= partial
        assert lattice_sum(4, 2) < partial * 1.05

    def test_analytic_primitives_positive(self):
        prim = analytic_primitives(TWO_PI)
        assert all(v > 0 for v in prim.values())

    def test_modes(self):
        ic_a = interpolation_constants(1.0, TWO_PI, "analytic_conservative")
        ic_e = interpolation_constants(
            1.0, TWO_PI, "empirical_calibrated", n_fields=60, seed=0
        )
        assert ic_a.mode == "analytic_conservative"
        assert ic_e.mode == "empirical_calibrated"
        assert ic_a.c_s4 * poincare_constants(1.0, TWO_PI).c_s1 == pytest.approx(ic_a.c_s3)
        for name in ("c_s2", "c_s3", "c_2", "c_3", "c_4"):
            assert getattr(ic_e, name) > 0
            # analytic mode is the conservative one
            assert getattr(ic_a, name) >= 0.5 * getattr(ic_e, name)
        with pytest.raises(ValueError):
            interpolation_constants(1.0, TWO_PI, "bogus")

    def test_empirical_primitives_dominate_single_modes(self):
        # headroom means the lowest-mode ratio sits strictly below the constant
        ic = interpolation_constants(1.0, TWO_PI, "empirical_calibrated", n_fields=60, seed=0)
        g = PeriodicGrid(L=TWO_PI, dim=2, N=16)
        x1 = g.coords()[0]
        u = transform_forward(g, np.sin(x1) * np.ones(g.shape)).subtract_mean()
        ratio = u.lp_norm(3) / (np.sqrt(u.grad_norm_sq()) ** (1 / 3) * u.sobolev_norm(0) ** (2 / 3))
        assert ratio <= ic.primitives["c_l3_interp_2d"]


@pytest.fixture(scope="module")
def setup_2pi():
    pc = poincare_constants(1.0, TWO_PI)
    ic = interpolation_constants(1.0, TWO_PI, "empirical_calibrated", n_fields=80, seed=0)
    grid = PeriodicGrid(L=TWO_PI, dim=2, N=16)
    return pc, ic, grid


class TestAbarChain:
    def test_zero_data_collapse(self, setup_2pi):
        pc, ic, grid = setup_2pi
        z = ZeroForcing(grid, 2)
        for T in (1.0, 5.0):
            ch = abar_chain(z, 0.0, T, pc, ic)
            assert ch.abar1_sq == 0.0
            assert ch.abar2_sq == 0.0
            assert ch.abar3_sq == pytest.approx(1.0)
            assert ch.abar4_sq == 0.0
            assert ch.member == (T >= ch.t_star and T > 1.0)

    def test_example_one_membership(self, setup_2pi):
        # constant force plus square-integrable fluctuation: admissible for
        # every window length above max(t_star, threshold)
        pc, ic, grid = setup_2pi
        h = DecayingModeForcing(unit_h1_profile(grid), rate=1.0, amplitude=0.5)
        f = CompositeForcing([ConstantMeanForcing(grid, [1.0, 0.0]), h])
        vbar0_h1_sq = 0.04
        i_inf = h.infinite_bar_sq_integral("h1")
        a0 = pc.c_1 * (i_inf + vbar0_h1_sq) * vbar0_h1_sq + (i_inf + 1.0) * math.exp(
            ic.c_2 * (i_inf + vbar0_h1_sq)
        )
        ts = t_star(pc)
        for T in np.linspace(max(ts, a0) + 1e-6, max(ts, a0) + 10.0, 7):
            ch = abar_chain(f, vbar0_h1_sq, float(T), pc, ic)
            assert ch.member
            assert ch.abar1_sq <= i_inf + 1e-12
        assert math.isinf(abar_chain(f, vbar0_h1_sq, 5.0, pc, ic).abar4_sq)

    def test_non_integrable_schedule_rejected(self, setup_2pi):
        pc, ic, grid = setup_2pi

        class DivergentSchedule(ZeroForcing):
            def sup_window_bar_sq(self, T, k_max=64, norm="l2"):
                return math.inf, True

        with pytest.raises(ValueError, match="integrable"):
            abar_chain(DivergentSchedule(grid, 2), 0.0, 4.0, pc, ic)

    def test_example_two_periodic_extension(self, setup_2pi):
        pc, ic, grid = setup_2pi
        from nsbox.forcing import PeriodicExtensionForcing

        T = 4.0
        f = PeriodicExtensionForcing(DecayingModeForcing(unit_h1_profile(grid), rate=1.0), T)
        w0 = f.window_bar_sq_integral(0, T, "h1")
        w7 = f.window_bar_sq_integral(7, T, "h1")
        assert w0 == pytest.approx(w7, rel=1e-13)
        ch = abar_chain(f, 0.01, T, pc, ic)
        assert ch.abar1_sq == pytest.approx(w0)
        assert ch.certified["abar1_sq"]


class TestAChain:
    def test_zero_collapse(self, setup_2pi):
        pc, ic, grid = setup_2pi
        ch = a_chain(ZeroForcing(grid, 2), {"l2_sq": 0, "grad_sq": 0, "grad2_sq": 0}, 3.0, pc, ic)
        for name in ("a1_sq", "a2_sq", "a3_sq", "a4_sq", "a5_sq", "a6_sq", "a7_sq",
                     "a8_sq", "a10_sq", "a11_sq", "a12_sq", "a13_sq", "a14_sq"):
            assert getattr(ch, name) == 0.0
        assert ch.a9 == 0.0

    def test_constant_forcing_closed_form(self, setup_2pi):
        # constant ||fbar||^2 = phi: a1_sq = phi T / c_s1 and the window-start
        # bound follows the geometric formula
        pc, ic, grid = setup_2pi
        prof = unit_h1_profile(grid) * 0.2
        f = ConstantBarForcing(prof)
        phi = prof.sobolev_norm_sq(0)
        T = 2.0
        v0 = {"l2_sq": 0.3, "grad_sq": 0.4, "grad2_sq": 0.5}
        ch = a_chain(f, v0, T, pc, ic)
        assert ch.a1_sq == pytest.approx(phi * T / pc.c_s1, rel=1e-12)
        assert ch.a2_sq == pytest.approx(ch.a1_sq / (1 - math.exp(-pc.c_s1 * T)) + 0.3, rel=1e-12)

    def test_chain_identities(self, setup_2pi):
        pc, ic, grid = setup_2pi
        f = DecayingModeForcing(unit_h1_profile(grid), rate=1.0, amplitude=0.3)
        ch = a_chain(f, {"l2_sq": 0.1, "grad_sq": 0.2, "grad2_sq": 0.3}, 3.0, pc, ic)
        assert ch.a3_sq == ch.a1_sq + ch.a2_sq
        assert ch.a6_sq == ch.a4_sq + ch.a5_sq
        assert ch.a8_sq == ch.a3_sq + ch.a7_sq
        assert ch.a13_sq == ch.a11_sq + ch.a12_sq * math.exp(ic.c_s4 * ch.a8_sq)
        assert ch.a14_sq == ic.c_s3 * (ch.a13_sq * ch.a8_sq + ch.a10_sq) + ch.a12_sq

    def test_monotone_in_inputs(self, setup_2pi):
        pc, ic, grid = setup_2pi
        f = DecayingModeForcing(unit_h1_profile(grid), rate=1.0, amplitude=0.3)
        base = {"l2_sq": 0.1, "grad_sq": 0.2, "grad2_sq": 0.3}
        ch0 = a_chain(f, base, 3.0, pc, ic)
        for key in base:
            bumped = dict(base)
            bumped[key] = base[key] * 1.3 + 0.01
            ch1 = a_chain(f, bumped, 3.0, pc, ic)
            for name in ("a2_sq", "a3_sq", "a5_sq", "a8_sq", "a12_sq", "a14_sq"):
                assert getattr(ch1, name) >= getattr(ch0, name) - 1e-15
        f_big = DecayingModeForcing(unit_h1_profile(grid), rate=1.0, amplitude=0.4)
        ch2 = a_chain(f_big, base, 3.0, pc, ic)
        assert ch2.a8_sq > ch0.a8_sq

    def test_negative_inputs_rejected(self, setup_2pi):
        pc, ic, grid = setup_2pi
        with pytest.raises(ValueError):
            a_chain(ZeroForcing(grid, 2), {"l2_sq": -1, "grad_sq": 0, "grad2_sq": 0}, 3.0, pc, ic)

    def test_unbounded_drift_reported(self, setup_2pi):
        pc, ic, grid = setup_2pi
        f = CompositeForcing(
            [ConstantMeanForcing(grid, [1.0, 0.0]),
             DecayingModeForcing(unit_h1_profile(grid), rate=1.0, amplitude=0.1)]
        )
        ch = a_chain(f, {"l2_sq": 0.0, "grad_sq": 0.0, "grad2_sq": 0.0}, 3.0, pc, ic)
        assert math.isinf(ch.a9)
        assert not ch.hypotheses["drift_finite"]
        assert math.isinf(ch.h21_reference())


class TestBChain:
    def _achain(self, setup, amplitude=0.1):
        pc, ic, grid = setup
        f = DecayingModeForcing(unit_h1_profile(grid), rate=1.0, amplitude=amplitude)
        return a_chain(f, {"l2_sq": 0.01, "grad_sq": 0.01, "grad2_sq": 0.01}, 4.0, pc, ic)

    def test_zero_perturbation_data(self, setup_2pi):
        pc, ic, grid = setup_2pi
        g3 = PeriodicGrid(L=TWO_PI, dim=3, N=8)
        ach = self._achain(setup_2pi)
        ch = b_chain(ZeroForcing(g3, 3), {"l2_sq": 0.0}, ach, pc, ic, 4.0)
        assert ch.b1_sq == 0.0 and ch.b2_sq == 0.0 and ch.b3_sq == 0.0
        assert ch.b4_sq == 0.0 and ch.b5_sq == 0.0

    def test_b4_carries_initial_energy(self, setup_2pi):
        pc, ic, grid = setup_2pi
        g3 = PeriodicGrid(L=TWO_PI, dim=3, N=8)
        ach = self._achain(setup_2pi)
        u0 = 1e-4
        ch = b_chain(ZeroForcing(g3, 3), {"l2_sq": u0}, ach, pc, ic, 4.0)
        assert ch.b4_sq == pytest.approx(math.exp(ic.c_2 * ach.a8_sq) * u0, rel=1e-12)
        assert ch.b5_sq == pytest.approx(ic.c_2 * ach.a8_sq * ch.b4_sq, rel=1e-12)
        assert ch.b5_sq_carry >= u0

    def test_divergent_mean_drift(self, setup_2pi):
        # constant mean force on the difference system: windowed drift
        # integral grows without bound; reported as inf, not raised
        pc, ic, grid = setup_2pi
        g3 = PeriodicGrid(L=TWO_PI, dim=3, N=8)
        ach = self._achain(setup_2pi)
        gforce = ConstantMeanForcing(g3, [0.5, 0.0, 0.0])
        ch = b_chain(gforce, {"l2_sq": 0.0}, ach, pc, ic, 4.0)
        assert math.isinf(ch.b2_sq)
        assert math.isinf(ch.b5_sq)
        assert math.isinf(ch.b7_sq)
        assert not ch.hypotheses["drift_finite"]

    def test_missing_achain_rejected(self, setup_2pi):
        pc, ic, grid = setup_2pi
        g3 = PeriodicGrid(L=TWO_PI, dim=3, N=8)
        with pytest.raises(ValueError):
            b_chain(ZeroForcing(g3, 3), {"l2_sq": 0.0}, None, pc, ic, 4.0)


class TestSmallness:
    def test_zero_everything(self, setup_2pi):
        pc, ic, grid = setup_2pi
        g3 = PeriodicGrid(L=TWO_PI, dim=3, N=8)
        ach = a_chain(ZeroForcing(grid, 2), {"l2_sq": 0, "grad_sq": 0, "grad2_sq": 0}, 4.0, pc, ic)
        bch = b_chain(ZeroForcing(g3, 3), {"l2_sq": 0.0}, ach, pc, ic, 4.0, gamma=1e-4)
        times = np.linspace(0, 4, 9)
        out = smallness_check(
            1e-4, 0.5, pc, ic, bch,
            gradv_l3_series=np.zeros(9), g_schedule=ZeroForcing(g3, 3),
            u0_norms={"l2_sq": 0.0}, times=times,
        )
        assert out["gamma_hypothesis"] == "ok"
        assert out["g2_max"] == 0.0 and out["g2_ok"]
        assert out["gbar_max"] == 0.0 and out["gbar_ok"]

    def test_gamma_violation_is_verdict(self, setup_2pi):
        pc, ic, grid = setup_2pi
        g3 = PeriodicGrid(L=TWO_PI, dim=3, N=8)
        ach = a_chain(ZeroForcing(grid, 2), {"l2_sq": 0, "grad_sq": 0, "grad2_sq": 0}, 4.0, pc, ic)
        bch = b_chain(ZeroForcing(g3, 3), {"l2_sq": 0.0}, ach, pc, ic, 4.0, gamma=10.0)
        out = smallness_check(10.0, 0.5, pc, ic, bch)
        assert out["gamma_hypothesis"] == "violated"


class TestReport:
    def test_document_shape(self, setup_2pi):
        pc, ic, grid = setup_2pi
        g3 = PeriodicGrid(L=TWO_PI, dim=3, N=8)
        f = DecayingModeForcing(unit_h1_profile(grid), rate=1.0, amplitude=0.1)
        ab = abar_chain(f, 0.02, 4.0, pc, ic)
        ach = a_chain(f, {"l2_sq": 0.01, "grad_sq": 0.01, "grad2_sq": 0.01}, 4.0, pc, ic)
        bch = b_chain(ZeroForcing(g3, 3), {"l2_sq": 1e-5}, ach, pc, ic, 4.0, gamma=1e-4)
        sm = smallness_check(1e-4, 0.5, pc, ic, bch, g_schedule=ZeroForcing(g3, 3),
                             u0_norms={"l2_sq": 1e-5})
        doc = certificate_report(nu=1.0, L=TWO_PI, T=4.0, constants=ic, abar=ab,
                                 achain=ach, bchain=bch, smallness=sm)
        assert doc["schema"] == "nsbox-certificate/1"
        for key in ("poincare", "constants", "t_star", "gamma_star", "abar_chain",
                    "a_chain", "b_chain", "hypotheses", "truncation"):
            assert key in doc
        assert doc["gamma_hypothesis"] == "ok"
        assert isinstance(doc["barrier_hypotheses_ok"], bool)
