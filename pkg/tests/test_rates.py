import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signedsanov.errors import SingularCovariance, TooLarge, ZeroProbability
from signedsanov.measures import ProbDist, kl_divergence
from signedsanov.rates import (
    BallSpec,
    chi_square_form,
    compare_rates,
    empirical_rate,
    exact_ball_probability,
    ising_baseline,
    mc_ball_probability,
    min_ball_kl,
    sanov_probability,
    small_deviation_form,
)
from signedsanov.scenario import bell_fixture
from signedsanov.simulation import double

KL_SEVEN_THREE = 0.08228287850505185
# -log P / n from exact rational binomial sums over the ball |k/n - 0.7| <= 0.01
EXACT_RATES = {50: 0.12430078127504435, 100: 0.093695467067341279,
               200: 0.085219713210857051, 400: 0.080442768502713448}
LATTICE_MIN_KL = {50: KL_SEVEN_THREE, 100: 0.074046516134358251,
                  200: 0.074046516134358251, 400: 0.074046516134358251}


def brute_force_ball(p, center, delta, n):
    """Enumerate every length-n outcome sequence (tiny cases only)."""
    k = len(p)
    total = 0.0
    for seq in itertools.product(range(k), repeat=n):
        counts = np.bincount(seq, minlength=k)
        if np.abs(counts / n - center).sum() <= delta + 1e-12:
            total += math.prod(p[i] for i in seq)
    return total


def oracle_agrees(est, exact):
    """Within 3 binomial standard errors evaluated at the exact probability."""
    return abs(est.estimate - exact) <= 3 * math.sqrt(exact * (1 - exact) / est.trials)


class TestSanovProbability:
    def test_value(self):
        # mpmath: exp(-5.66) = 0.0034825168982...
        assert sanov_probability(0.0566, 100) == pytest.approx(0.00348, abs=1e-5)
        assert sanov_probability(0.0566, 100) == pytest.approx(0.0034825168982116638, rel=1e-14)

    @pytest.mark.parametrize("n", [1, 10, 1000])
    def test_zero_rate(self, n):
        assert sanov_probability(0.0, n) == 1.0

    def test_infinite_rate(self):
        assert sanov_probability(math.inf, 5) == 0.0


class TestExactBall:
    def test_binomial(self):
        ball = BallSpec(ProbDist([0.7, 0.3]), 0.05)
        assert exact_ball_probability([0.5, 0.5], ball, 10) == pytest.approx(
            float(Fraction(math.comb(10, 7), 2**10)), rel=1e-13)
        assert float(Fraction(math.comb(10, 7), 2**10)) == 0.1171875

    def test_covering_ball(self):
        assert exact_ball_probability([0.2, 0.3, 0.5], BallSpec(ProbDist([1, 0, 0]), 2.0), 20) == pytest.approx(1.0)

    def test_point_ball(self):
        assert exact_ball_probability([0.5, 0.5], BallSpec(ProbDist([1, 0]), 0.0), 2) == pytest.approx(0.25)

    @pytest.mark.parametrize("p, center, delta, n", [
        ([0.2, 0.3, 0.5], [0.4, 0.2, 0.4], 0.3, 6),
        ([0.1, 0.6, 0.3], [0.1, 0.6, 0.3], 0.5, 7),
        ([0.25, 0.25, 0.25, 0.25], [0.5, 0.5, 0, 0], 0.6, 5),
        ([0.5, 0.0, 0.5], [0.5, 0.1, 0.4], 0.35, 6),
    ])
    def test_against_sequence_enumeration(self, p, center, delta, n):
        ball = BallSpec(ProbDist(center), delta)
        assert exact_ball_probability(p, ball, n) == pytest.approx(
            brute_force_ball(p, np.array(center), delta, n), rel=1e-12, abs=1e-15)

    def test_too_large(self):
        with pytest.raises(TooLarge):
            exact_ball_probability([0.1] * 10, BallSpec(ProbDist([0.1] * 10), 0.1), 1000)

    def test_log_domain_large_n(self):
        ball = BallSpec(ProbDist([0.7, 0.3]), 0.02)
        p = exact_ball_probability([0.5, 0.5], ball, 400)
        assert 0 < p < 1e-13


class TestEmpiricalRate:
    @pytest.mark.parametrize("n", sorted(EXACT_RATES))
    def test_exact_values(self, n):
        ball = BallSpec(ProbDist([0.7, 0.3]), 0.02)
        assert empirical_rate([0.5, 0.5], ball, n) == pytest.approx(EXACT_RATES[n], rel=1e-10)
        assert min_ball_kl([0.5, 0.5], ball, n) == pytest.approx(LATTICE_MIN_KL[n], rel=1e-12)

    def test_gap_to_limit_shrinks(self):
        ball = BallSpec(ProbDist([0.7, 0.3]), 0.02)
        gaps = [abs(empirical_rate([0.5, 0.5], ball, n) - KL_SEVEN_THREE) for n in (50, 100, 200, 400)]
        assert all(a > b for a, b in zip(gaps, gaps[1:]))

    def test_wide_ball_at_center(self):
        assert empirical_rate([0.3, 0.7], BallSpec(ProbDist([0.3, 0.7]), 2.0), 50) == pytest.approx(0.0, abs=1e-14)

    def test_unreachable(self):
        ball = BallSpec(ProbDist([0.0, 0.0, 1.0]), 0.1)
        with pytest.raises(ZeroProbability):
            empirical_rate([0.5, 0.5, 0.0], ball, 30)


class TestMonteCarlo:
    def test_repeatable(self):
        ball = BallSpec(ProbDist([0.6, 0.4]), 0.1)
        a = mc_ball_probability([0.5, 0.5], ball, 40, 25_000, seed=11)
        b = mc_ball_probability([0.5, 0.5], ball, 40, 25_000, seed=11)
        c = mc_ball_probability([0.5, 0.5], ball, 40, 25_000, seed=11, workers=3)
        assert a == b == c

    def test_certain(self):
        est = mc_ball_probability([1.0, 0.0], BallSpec(ProbDist([1.0, 0.0]), 0.0), 10, 1000, seed=1)
        assert est.estimate == 1.0 and est.stderr == 0.0

    def test_bell_row_against_oracle(self):
        mu = ProbDist([0.5, 0, 0, 0.5])
        ball = BallSpec(ProbDist([2 / 3, 0, 0, 1 / 3]), 0.02)
        exact = exact_ball_probability(mu, ball, 300)
        est = mc_ball_probability(mu, ball, 300, 100_000, seed=300)
        # about 3e-8: zero hits is the expected outcome, so the plug-in
        # standard error degenerates and the oracle's one is used
        assert 0 < exact < 1e-7
        assert oracle_agrees(est, exact)

    @pytest.mark.parametrize("p, center, delta, n", [
        ([0.5, 0.5], [0.6, 0.4], 0.1, 40),
        ([0.3, 0.2, 0.5], [0.3, 0.3, 0.4], 0.2, 25),
    ])
    def test_against_oracle(self, p, center, delta, n):
        ball = BallSpec(ProbDist(center), delta)
        est = mc_ball_probability(p, ball, n, 100_000, seed=n)
        exact = exact_ball_probability(p, ball, n)
        assert oracle_agrees(est, exact)
        assert abs(est.estimate - exact) <= 3 * est.stderr


class TestCompareRates:
    def test_bell(self):
        model, lam = bell_fixture()
        sim = double(lam)
        g = np.zeros(32)
        for j, v in [(0, 0.284), (1, 0.078), (4, 0.078), (11, 0.156), (14, 0.156), (15, 0.078)]:
            g[j] = v
        g[26] = 0.170
        cmp = compare_rates(g, sim.nu, [2 / 3, 0, 0, 1 / 3], [0.5, 0, 0, 0.5], 100)
        assert cmp.d_fine == pytest.approx(0.0541, abs=5e-4)
        assert cmp.d_coarse == pytest.approx(0.0566, abs=1e-4)
        assert cmp.reversal
        assert cmp.p_fine > cmp.p_coarse

    def test_no_deviation(self):
        sim = double(bell_fixture()[1])
        cmp = compare_rates(sim.nu, sim.nu, [0.5, 0, 0, 0.5], [0.5, 0, 0, 0.5], 10)
        assert cmp.d_fine == cmp.d_coarse == 0.0
        assert not cmp.reversal

    @settings(max_examples=200)
    @given(st.lists(st.floats(0.01, 1), min_size=4, max_size=4))
    def test_ising_never_reverses(self, xs):
        base = ising_baseline()
        g = np.array(xs) / np.sum(xs)
        cmp = compare_rates(g, base.fine, base.coarse_grain(g), base.coarse, 100)
        assert not cmp.reversal


class TestSmallDeviation:
    def test_zero(self):
        assert small_deviation_form([0.2, 0.8], [0.2, 0.8]) == pytest.approx(0.0, abs=1e-15)

    def test_binary(self):
        assert small_deviation_form([0.6, 0.4], [0.5, 0.5]) == pytest.approx(0.04, abs=1e-12)
        assert chi_square_form([0.6, 0.4], [0.5, 0.5]) == pytest.approx(0.04, abs=1e-15)

    @settings(max_examples=200)
    @given(st.integers(2, 8), st.integers(0, 2**32 - 1))
    def test_pinv_equals_chi_square(self, k, seed):
        rng = np.random.default_rng(seed)
        p = rng.dirichlet(np.ones(k)) * 0.9 + 0.1 / k
        q = rng.dirichlet(np.ones(k))
        assert small_deviation_form(q, p) == pytest.approx(chi_square_form(q, p), abs=1e-10)

    def test_partial_support(self):
        assert small_deviation_form([0.3, 0.7, 0.0], [0.5, 0.5, 0.0]) == pytest.approx(0.16)

    def test_singular(self):
        with pytest.raises(SingularCovariance):
            small_deviation_form([0.4, 0.5, 0.1], [0.5, 0.5, 0.0])

    def test_ising_contracts(self):
        base = ising_baseline()
        rng = np.random.default_rng(8)
        for _ in range(200):
            d = rng.normal(size=4)
            d -= d.mean()
            g = base.fine.probs + 1e-3 * d
            fine = small_deviation_form(g, base.fine)
            coarse = small_deviation_form(base.coarse_grain(g), base.coarse)
            assert fine >= coarse


class TestIsing:
    def test_unit_coupling(self):
        base = ising_baseline(1.0, 1.0)
        assert tuple(base.coarse.probs) == (0.5, 0.5)
        # mpmath: e / (2e + 2/e)
        assert base.fine.probs[0] == pytest.approx(0.44039853898894122, abs=1e-15)
        assert base.Z == pytest.approx(2 * math.e + 2 / math.e)

    def test_no_coupling(self):
        np.testing.assert_allclose(ising_baseline(0.0, 3.0).fine.probs, [0.25] * 4)

    @pytest.mark.parametrize("J, T", [(0.5, 2.0), (-1.0, 1.0), (2.0, 0.3)])
    def test_coarse_is_even(self, J, T):
        np.testing.assert_allclose(ising_baseline(J, T).coarse.probs, [0.5, 0.5], atol=1e-15)

    def test_kernel_rows(self):
        np.testing.assert_array_equal(ising_baseline().kernel.sum(axis=1), np.ones(4))

    def test_bad_temperature(self):
        with pytest.raises(ValueError):
            ising_baseline(1.0, 0.0)

    @settings(max_examples=300)
    @given(st.lists(st.floats(0.001, 1), min_size=4, max_size=4),
           st.floats(-2, 2), st.floats(0.2, 5))
    def test_strict_dpi(self, xs, J, T):
        base = ising_baseline(J, T)
        g = np.array(xs) / np.sum(xs)
        if np.abs(g - base.fine.probs).max() < 1e-3:
            return
        fine = kl_divergence(g, base.fine)
        coarse = kl_divergence(base.coarse_grain(g), base.coarse)
        assert fine > coarse


@st.composite
def channel_and_pair(draw):
    from signedsanov.measures import SignedMeasure
    from signedsanov.simulation import OutcomeMap, build_channel
    m = draw(st.integers(2, 6))
    targets = draw(st.lists(st.integers(0, m - 1), min_size=m, max_size=m))
    signs = draw(st.lists(st.sampled_from([-1.0, 1.0]), min_size=m, max_size=m))
    w = np.array(signs) * 0.1
    w[-1] = 1 - w[:-1].sum()
    plus = build_channel(SignedMeasure(w), OutcomeMap(targets, m)).plus
    seeds = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seeds)
    return plus, rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(m))


@settings(max_examples=200)
@given(channel_and_pair())
def test_positive_part_contracts_kl(case):
    plus, q, p = case
    assert kl_divergence(q, p) >= kl_divergence(plus @ q, plus @ p) - 1e-12
