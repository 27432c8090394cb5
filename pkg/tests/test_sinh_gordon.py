import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmctorus.bessel import (
    bessel_k0,
    bessel_k0_log,
    bessel_k0_scaled,
    k0_reference_log,
)
from gmctorus.errors import InvalidArgument
from gmctorus.gmc import GmcConfig, gmc_mass
from gmctorus.harness.seeds import SeedPlan
from gmctorus.sinh_gordon import (
    PairedMassSample,
    ShgParams,
    free_energy,
    log_mean_exp,
    paired_mass_arrays,
    paired_masses,
    partition_estimate,
    zero_mode_quadrature,
    zero_mode_quadrature_log,
)
from gmctorus.torus_field import GridField, make_gff_spec, sample_values

import oracles

# independent mpmath quadrature at 40 digits (tests/oracles.py)
K0_AT_ONE = 0.42102443824070834
TWO_K0_AT_TWO = 0.22778774549906688


def test_k0_against_quadrature_oracle():
    xs = np.geomspace(1e-3, 500, 50)
    ours = bessel_k0(xs)
    for x, v in zip(xs, ours):
        ref = float(oracles.k0_quad(x))
        assert v == pytest.approx(ref, rel=1e-10)


def test_k0_frozen_value():
    assert bessel_k0(1.0) == pytest.approx(K0_AT_ONE, rel=1e-13)


def test_k0_reference_split_agrees():
    for x in np.concatenate([np.geomspace(1e-6, 2, 40), np.geomspace(20, 700, 40)]):
        ref = k0_reference_log(float(x))
        assert bessel_k0_log(x) == pytest.approx(ref, rel=1e-12, abs=1e-12)
    assert k0_reference_log(5.0) is None


def test_k0_log_stays_finite_past_underflow():
    v = bessel_k0_log(5000.0)
    assert math.isfinite(v)
    assert v == pytest.approx(k0_reference_log(5000.0), rel=1e-14)
    assert bessel_k0(5000.0) == 0.0


def test_k0_rejects_nonpositive():
    for bad in (0.0, -1.0, float("nan")):
        with pytest.raises(InvalidArgument):
            bessel_k0(bad)
    with pytest.raises(InvalidArgument):
        bessel_k0_log(np.array([1.0, 0.0]))


@settings(max_examples=40, deadline=None)
@given(x=st.floats(1e-6, 700.0))
def test_k0_scaled_is_decreasing(x):
    assert bessel_k0_scaled(x * 1.01) < bessel_k0_scaled(x)


def test_zero_mode_quadrature_frozen():
    p = ShgParams(1.0)
    assert zero_mode_quadrature(p, 1.0) == pytest.approx(TWO_K0_AT_TWO, rel=1e-12)


@pytest.mark.parametrize("a", [1e-3, 0.1, 1.0, 7.0, 50.0])
def test_zero_mode_quadrature_matches_bessel(a):
    p = ShgParams(1.0, mu=a)
    v = zero_mode_quadrature(p, 1.0)
    assert v == pytest.approx(2.0 * bessel_k0(2.0 * a), rel=1e-8)
    assert v == pytest.approx(float(oracles.zero_mode_quad(a)), rel=1e-8)


def test_zero_mode_log_far_regime():
    p = ShgParams(1.0, mu=1.0, R=16.0)
    g = 1.3
    a = math.exp(p.log_coupling()) * g
    assert zero_mode_quadrature_log(p, g) == pytest.approx(math.log(2) + bessel_k0_log(2 * a), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(gamma=st.floats(1e-3, 1.999))
def test_gamma_q_identity(gamma):
    p = ShgParams(gamma)
    assert abs(p.gamma * p.Q - p.exponent) <= 1e-14 * p.exponent


def test_params_validation():
    for g in (0.0, 2.0, -1.0):
        with pytest.raises(InvalidArgument):
            ShgParams(g)
    with pytest.raises(InvalidArgument):
        ShgParams(1.0, mu=0.0)
    with pytest.raises(InvalidArgument):
        ShgParams(1.0, R=-1.0)


def test_paired_masses_are_antithetic():
    plan = SeedPlan(11)
    spec = make_gff_spec(2)
    plus, minus = paired_mass_arrays(1.2, 32, plan, range(3))
    values = sample_values(spec, 32, [plan.rng(i) for i in range(3)])
    for j in range(3):
        neg = GridField(2, 1.0, 32, -values[j])
        assert minus[j] == gmc_mass(neg, spec, GmcConfig(1.2)).mass
        assert plus[j] == gmc_mass(GridField(2, 1.0, 32, values[j]), spec, GmcConfig(1.2)).mass


def test_paired_sample_geometric_mean():
    for s in paired_masses(1.0, 32, 20, seed=3, batch=7):
        assert s.geometric_mean ** 2 == pytest.approx(s.m_plus * s.m_minus, rel=1e-12)
        assert s.seed is not None


def test_paired_masses_independent_of_batch():
    a = paired_masses(1.0, 16, 9, seed=4, batch=2)
    b = paired_masses(1.0, 16, 9, seed=4, batch=9)
    assert [s.geometric_mean for s in a] == [s.geometric_mean for s in b]


def test_partition_constant_samples_is_closed_form():
    p = ShgParams(1.0, mu=0.7, R=2.0)
    g = 0.9
    log_z, se = partition_estimate(p, np.full(5, g))
    x = 2 * math.exp(p.log_coupling()) * g
    assert log_z == pytest.approx(-math.log(1.0) + bessel_k0_log(x), rel=1e-14)
    assert se == 0.0


def test_partition_needs_two_samples():
    with pytest.raises(InvalidArgument):
        partition_estimate(ShgParams(1.0), np.array([1.0]))
    with pytest.raises(InvalidArgument):
        partition_estimate(ShgParams(1.0), np.array([1.0, -1.0]))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_partition_invariant_under_sample_order(seed):
    rng = np.random.default_rng(seed)
    g = np.exp(rng.normal(0, 1.0, 200))
    p = ShgParams(1.0, R=8.0)
    a = partition_estimate(p, g)
    b = partition_estimate(p, rng.permutation(g))
    assert a[0] == b[0]


@settings(max_examples=30, deadline=None)
@given(mu=st.floats(0.01, 100.0), R=st.floats(0.5, 16.0), gamma=st.floats(0.1, 1.9))
def test_mu_collapse(mu, R, gamma):
    g = np.exp(np.random.default_rng(0).normal(0, 0.5, 64))
    p = ShgParams(gamma, mu, R)
    a = partition_estimate(p, g)[0]
    b = partition_estimate(p.collapsed(), g)[0]
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


def test_large_volume_stays_finite():
    g = np.exp(np.random.default_rng(1).normal(0, 0.3, 50))
    f, se = free_energy(ShgParams(1.0, R=16.0), g)
    assert math.isfinite(f) and math.isfinite(se) and f > 0


def test_free_energy_normalization():
    g = np.exp(np.random.default_rng(2).normal(0, 0.3, 50))
    p = ShgParams(1.0, mu=2.0, R=4.0)
    log_z, se = partition_estimate(p, g)
    f, fse = free_energy(p, g)
    norm = 2.0 ** (2 / p.exponent) * 16.0
    assert f == pytest.approx(-log_z / norm, rel=1e-15)
    assert fse == pytest.approx(se / norm, rel=1e-15)


def test_log_mean_exp_matches_direct_sum():
    t = np.random.default_rng(3).normal(0, 2.0, 100)
    v, se = log_mean_exp(t)
    assert v == pytest.approx(math.log(np.mean(np.exp(t))), rel=1e-13)
    w = np.exp(t)
    assert se == pytest.approx(w.std() / math.sqrt(100) / w.mean(), rel=1e-10)


def test_log_mean_exp_extreme_offsets():
    v, _ = log_mean_exp(np.array([-3000.0, -3001.0]))
    assert v == pytest.approx(-3000.0 + math.log((1 + math.exp(-1)) / 2), rel=1e-15)


def test_paired_sample_from_masses():
    s = PairedMassSample.from_masses(4.0, 9.0)
    assert s.geometric_mean == pytest.approx(6.0, rel=1e-15)


def test_k0_small_x_law():
    x = 1e-3
    assert abs(bessel_k0(x) + math.log(x / 2) + 0.5772156649) < 1e-4


def test_gamma_zero_pairs_are_one():
    plus, minus = paired_mass_arrays(0.0, 16, SeedPlan(1), range(4))
    assert np.all(plus == 1.0) and np.all(minus == 1.0)


def test_partition_decreases_in_mu():
    g = np.exp(np.random.default_rng(5).normal(0, 0.4, 30))
    vals = [partition_estimate(ShgParams(1.0, mu=mu, R=2.0), g)[0] for mu in (0.1, 0.5, 1.0, 3.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_geometric_mean_cauchy_schwarz():
    s = paired_masses(1.0, 64, 2000, seed=21)
    g = np.array([x.geometric_mean for x in s])
    assert g.mean() <= 1.0 + 4 * g.std() / math.sqrt(g.size)
