import numpy as np
import pytest

from bregmin.kernels import KernelKind, KernelSpec, bregman
from bregmin.subsolve import (
    OracleError,
    Reg,
    StepTooLargeError,
    SubproblemSpec,
    SubsolverError,
    bpg_step_euclidean,
    bpg_step_quartic,
    oracle_minimize,
    poisson_step,
    prox_l1,
    quartic_radial_scale,
    subproblem_value,
)
from helpers import bisect_root, golden_section, random_burg_spec, random_quartic_spec


class TestProxL1:
    def test_shrinks(self):
        np.testing.assert_allclose(prox_l1([3.0], 1.0), [2.0])

    def test_kills_small_entries(self):
        np.testing.assert_allclose(prox_l1([0.5], 1.0), [0.0])

    def test_zero_threshold_is_identity(self):
        v = np.array([1.0, -2.0, 0.3])
        np.testing.assert_array_equal(prox_l1(v, 0.0), v)

    def test_rejects_negative_threshold(self):
        with pytest.raises(ValueError):
            prox_l1([1.0], -0.1)


class TestQuarticRadialScale:
    def test_zero_coefficient(self):
        assert quartic_radial_scale(0.0) == 1.0

    def test_against_bisection_oracle(self):
        for s in (0.5, 2.0, 17.0, 1234.5):
            t_ref = bisect_root(lambda t: s * t ** 3 + t - 1.0, 0.0, 1.0)
            assert quartic_radial_scale(s) == pytest.approx(t_ref, abs=1e-12)

    def test_known_values(self):
        assert quartic_radial_scale(2.0) == pytest.approx(0.58975, abs=1e-5)
        assert quartic_radial_scale(1e6) == pytest.approx(0.00997, abs=1e-5)

    def test_residual_over_sweep(self):
        rng = np.random.default_rng(0)
        ss = np.concatenate([
            np.linspace(0.0, 1e6, 2001),
            10.0 ** rng.uniform(-8, 6, size=500),
        ])
        for s in ss:
            t = quartic_radial_scale(float(s))
            assert 0.0 < t <= 1.0
            assert abs(s * t ** 3 + t - 1.0) <= 1e-11

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            quartic_radial_scale(-1.0)


def quartic_spec_1d(center, tau, g, reg=Reg.NONE, lam=0.0):
    return SubproblemSpec(
        model_center=np.array([center]),
        tau=tau,
        kernel=KernelSpec(KernelKind.QUARTIC_PLUS_QUADRATIC, 1),
        reg=reg,
        lam=lam,
        linear_part=np.array([g]),
    )


class TestQuarticStep:
    def test_fixed_point_with_zero_slope(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            c = rng.normal(size=4)
            spec = SubproblemSpec(
                model_center=c,
                tau=0.1,
                kernel=KernelSpec(KernelKind.QUARTIC_PLUS_QUADRATIC, 4),
                linear_part=np.zeros(4),
            )
            np.testing.assert_allclose(bpg_step_quartic(spec), c, rtol=1e-10, atol=1e-12)

    def test_scalar_example_against_golden_section(self):
        spec = quartic_spec_1d(1.0, 0.1, 4.0)

        def obj(t):
            return subproblem_value(spec, np.array([t]))

        t_ref = golden_section(obj, -3.0, 3.0)
        x = bpg_step_quartic(spec)
        assert x[0] == pytest.approx(t_ref, abs=1e-8)

    @pytest.mark.parametrize("reg,lam", [(Reg.NONE, 0.0), (Reg.L1, 0.3),
                                         (Reg.SQUARED_L2, 0.7)])
    def test_scalar_regularized_against_golden_section(self, reg, lam):
        spec = quartic_spec_1d(-0.8, 0.05, -2.5, reg=reg, lam=lam)
        t_ref = golden_section(lambda t: subproblem_value(spec, np.array([t])),
                               -3.0, 3.0)
        assert bpg_step_quartic(spec)[0] == pytest.approx(t_ref, abs=1e-8)

    def test_matches_oracle_on_random_specs(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            spec = random_quartic_spec(rng, n_max=5)
            x = bpg_step_quartic(spec)
            ref = oracle_minimize(spec)
            assert np.linalg.norm(x - ref) <= 1e-6

    def test_descends_subproblem(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            spec = random_quartic_spec(rng)
            x = bpg_step_quartic(spec)
            assert subproblem_value(spec, x) <= subproblem_value(
                spec, spec.model_center
            ) + 1e-12

    def test_requires_quartic_kernel(self):
        spec = SubproblemSpec(
            model_center=np.zeros(2),
            tau=0.1,
            kernel=KernelSpec(KernelKind.EUCLIDEAN, 2),
            linear_part=np.ones(2),
        )
        with pytest.raises(SubsolverError):
            bpg_step_quartic(spec)


class TestEuclideanStep:
    def test_plain_gradient_step(self):
        spec = SubproblemSpec(
            model_center=np.array([1.0, -2.0]),
            tau=0.25,
            kernel=KernelSpec(KernelKind.EUCLIDEAN, 2),
            linear_part=np.array([4.0, 0.0]),
        )
        np.testing.assert_allclose(bpg_step_euclidean(spec), [0.0, -2.0])

    @pytest.mark.parametrize("reg,lam", [(Reg.L1, 0.5), (Reg.SQUARED_L2, 0.5)])
    def test_regularized_matches_oracle(self, reg, lam):
        rng = np.random.default_rng(4)
        for _ in range(10):
            spec = SubproblemSpec(
                model_center=rng.normal(size=3),
                tau=float(rng.uniform(0.05, 0.5)),
                kernel=KernelSpec(KernelKind.EUCLIDEAN, 3),
                reg=reg,
                lam=lam,
                linear_part=rng.normal(size=3),
            )
            assert np.linalg.norm(bpg_step_euclidean(spec) - oracle_minimize(spec)) <= 1e-7


def burg_spec_1d(center, tau, reg=Reg.NONE, lam=0.0, eps=1e-8):
    return SubproblemSpec(
        model_center=np.array([center]),
        tau=tau,
        kernel=KernelSpec(KernelKind.BURG, 1),
        reg=reg,
        lam=lam,
        box_floor=eps,
    )


class TestPoissonStep:
    def test_no_reg_example(self):
        spec = burg_spec_1d(1.0, 0.5)
        x = poisson_step(spec, np.array([1.0]))
        assert x[0] == pytest.approx(1.0 / 1.5, rel=1e-12)

    def test_l1_example(self):
        spec = burg_spec_1d(1.0, 0.5, reg=Reg.L1, lam=0.1)
        x = poisson_step(spec, np.array([1.0]))
        assert x[0] == pytest.approx(1.0 / 1.55, rel=1e-12)

    def test_zero_gradient_is_fixed_point(self):
        spec = burg_spec_1d(0.7, 0.3)
        assert poisson_step(spec, np.array([0.0]))[0] == 0.7

    def test_scalar_against_golden_section(self):
        for reg, lam in ((Reg.NONE, 0.0), (Reg.L1, 0.1), (Reg.SQUARED_L2, 0.1)):
            spec = burg_spec_1d(1.0, 0.5, reg=reg, lam=lam)
            grad = np.array([1.0])
            spec_with_lin = SubproblemSpec(
                model_center=spec.model_center, tau=spec.tau, kernel=spec.kernel,
                reg=reg, lam=lam, linear_part=grad, box_floor=spec.box_floor,
            )
            t_ref = golden_section(
                lambda t: subproblem_value(spec_with_lin, np.array([t])), 1e-8, 5.0
            )
            x = poisson_step(spec, grad)
            assert x[0] == pytest.approx(t_ref, abs=1e-8)

    def test_matches_oracle_on_random_specs(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            spec = random_burg_spec(rng, n_max=5)
            x = poisson_step(spec, spec.linear_part)
            ref = oracle_minimize(spec)
            assert np.linalg.norm(x - ref) <= 1e-6

    def test_never_below_floor(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            spec = random_burg_spec(rng)
            x = poisson_step(spec, spec.linear_part)
            assert np.all(x >= spec.box_floor)

    def test_inadmissible_step_signals(self):
        spec = burg_spec_1d(1.0, 1.0)
        with pytest.raises(StepTooLargeError, match="coordinate 0"):
            poisson_step(spec, np.array([-2.0]))

    def test_requires_burg_kernel_and_floor(self):
        bad = SubproblemSpec(
            model_center=np.ones(1),
            tau=0.1,
            kernel=KernelSpec(KernelKind.EUCLIDEAN, 1),
            box_floor=1e-8,
        )
        with pytest.raises(SubsolverError):
            poisson_step(bad, np.zeros(1))
        no_floor = SubproblemSpec(
            model_center=np.ones(1),
            tau=0.1,
            kernel=KernelSpec(KernelKind.BURG, 1),
        )
        with pytest.raises(SubsolverError):
            poisson_step(no_floor, np.zeros(1))


class TestOracle:
    def test_zero_slope_returns_center(self):
        c = np.array([0.4, -1.1])
        spec = SubproblemSpec(
            model_center=c,
            tau=0.2,
            kernel=KernelSpec(KernelKind.QUARTIC_PLUS_QUADRATIC, 2),
            linear_part=np.zeros(2),
        )
        np.testing.assert_allclose(oracle_minimize(spec), c, atol=1e-7)

    def test_dimension_cap(self):
        spec = SubproblemSpec(
            model_center=np.ones(25),
            tau=0.1,
            kernel=KernelSpec(KernelKind.EUCLIDEAN, 25),
            linear_part=np.zeros(25),
        )
        with pytest.raises(OracleError, match="dimension"):
            oracle_minimize(spec)

    def test_optimality_certificate(self):
        # oracle value never exceeds the subproblem value at the center
        rng = np.random.default_rng(7)
        for maker in (random_quartic_spec, random_burg_spec):
            spec = maker(rng, n_max=4)
            ref = oracle_minimize(spec)
            assert subproblem_value(spec, ref) <= subproblem_value(
                spec, spec.model_center
            ) + 1e-9


class TestBregmanStepConsistency:
    def test_quartic_update_satisfies_stationarity(self):
        # grad h(x+) + tau*g must equal grad h(center) for the no-reg case
        from bregmin.kernels import kernel_grad

        rng = np.random.default_rng(8)
        for _ in range(20):
            n = 3
            spec = SubproblemSpec(
                model_center=rng.normal(size=n),
                tau=0.05,
                kernel=KernelSpec(KernelKind.QUARTIC_PLUS_QUADRATIC, n),
                linear_part=rng.normal(size=n),
            )
            x = bpg_step_quartic(spec)
            lhs = kernel_grad(spec.kernel, x) + spec.tau * spec.linear_part
            rhs = kernel_grad(spec.kernel, spec.model_center)
            np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-11)

    def test_bregman_value_drops(self):
        rng = np.random.default_rng(9)
        spec = random_quartic_spec(rng)
        x = bpg_step_quartic(spec)
        assert bregman(spec.kernel, x, spec.model_center) >= 0.0
