import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmctorus.errors import InvalidArgument
from gmctorus.gmc import (
    GmcConfig,
    convergence_report,
    demeaned_variance,
    gmc_mass,
    gmc_mass_batch,
    sample_masses,
    scaling_pair,
    scaling_pairs_batch,
)
from gmctorus.harness.seeds import SeedPlan
from gmctorus.torus_field import (
    GridField,
    make_gff_spec,
    make_star_spec,
    remove_mean,
    sample_field,
)


def test_config_rejects_critical_gamma():
    with pytest.raises(InvalidArgument):
        GmcConfig(2.0)
    with pytest.raises(InvalidArgument):
        GmcConfig(-1.5, dim=1)
    with pytest.raises(InvalidArgument):
        GmcConfig(1.0, convention="other")
    assert GmcConfig(1.95).near_critical
    assert not GmcConfig(1.8).near_critical


def test_gamma_zero_is_lebesgue():
    spec = make_gff_spec(2)
    f = sample_field(spec, 32, 4)
    mask = np.zeros((32, 32), bool)
    mask[:10, 3:20] = True
    m = gmc_mass(f, spec, GmcConfig(0.0, region_mask=mask)).mass
    assert m == mask.sum() / 32 ** 2
    assert gmc_mass(f, spec, GmcConfig(0.0)).mass == 1.0


def test_empty_mask_rejected():
    spec = make_gff_spec(2)
    f = sample_field(spec, 16, 4)
    with pytest.raises(InvalidArgument):
        gmc_mass(f, spec, GmcConfig(1.0, region_mask=np.zeros((16, 16), bool)))


def test_mean_identity_small_grid():
    spec, m = make_gff_spec(2), 10_000
    plan = SeedPlan(5)
    masses = np.concatenate([sample_masses(spec, 64, [1.0], plan, range(s, s + 500))[0]
                             for s in range(0, m, 500)])
    assert np.all(masses > 0)
    assert abs(masses.mean() - 1.0) < 4 * masses.std() / math.sqrt(m)


def test_mean_identity_on_partial_mask_with_demeaning():
    # self convention uses the cellwise variance of the demeaned field
    spec, n, m = make_gff_spec(2), 32, 10_000
    mask = np.zeros((n, n), bool)
    mask[4:20, 2:14] = True
    plan = SeedPlan(6)
    masses = np.concatenate([
        sample_masses(spec, n, [1.0], plan, range(s, s + 1000), region_mask=mask, demean=True)[0]
        for s in range(0, m, 1000)
    ])
    area = mask.sum() / n ** 2
    assert abs(masses.mean() - area) < 4 * masses.std() / math.sqrt(m)


def test_demeaned_variance_matches_dense_covariance():
    n = 8
    spec = make_gff_spec(2)
    mask = np.zeros((n, n), bool)
    mask[1:5, 2:7] = True
    # dense covariance from an explicit mode sum over the grid lattice
    freqs = np.fft.fftfreq(n, 1.0 / n)
    pts = np.stack(np.meshgrid(np.arange(n), np.arange(n), indexing="ij"), -1).reshape(-1, 2) / n
    C = np.zeros((n * n, n * n))
    for k1 in freqs:
        for k2 in freqs:
            if k1 == 0 and k2 == 0:
                continue
            phase = 2 * np.pi * (pts @ np.array([k1, k2]))
            C += (np.cos(phase)[:, None] * np.cos(phase)[None, :]
                  + np.sin(phase)[:, None] * np.sin(phase)[None, :]) / (2 * np.pi * (k1 * k1 + k2 * k2))
    P = np.eye(n * n) - np.outer(np.ones(n * n), mask.ravel() / mask.sum())
    expected = np.diag(P @ C @ P.T).reshape(n, n)
    assert np.allclose(demeaned_variance(spec, n, mask), expected, atol=1e-12)


def test_tilde_matches_self_up_to_constant_factor():
    spec = make_star_spec(xi=1.0)
    gamma = 1.0
    s0 = float(spec.symbol((0, 0)))
    assert s0 > 0
    for seed in range(5):
        z = remove_mean(sample_field(spec, 32, seed))
        m_self = gmc_mass(z, spec, GmcConfig(gamma)).mass
        m_tilde = gmc_mass(z, spec, GmcConfig(gamma, convention="tilde")).mass
        assert m_tilde == pytest.approx(m_self * math.exp(-0.5 * gamma ** 2 * s0), rel=1e-12)


def test_tilde_requires_demeaned_field():
    spec = make_star_spec(xi=1.0)
    f = sample_field(spec, 16, 1)
    with pytest.raises(InvalidArgument):
        gmc_mass(f, spec, GmcConfig(1.0, convention="tilde"))


def test_scaling_pair_identities():
    a, b = scaling_pair(1.0, 1.0, 32, 17)
    assert a == b
    a, b = scaling_pair(0.0, 2.0, 32, 17)
    assert a == 4.0 and b == 4.0
    a, b = scaling_pair(0.0, 3.0, 32, 17)
    assert a == pytest.approx(9.0, rel=1e-15) and b == pytest.approx(9.0, rel=1e-15)


def test_scaling_pair_batch_matches_single():
    plan = SeedPlan(3)
    mR, m1 = scaling_pairs_batch(1.0, 2.0, 32, plan, range(4))
    # the batch uses the plan streams; the law identity is pathwise here
    assert np.allclose(mR, m1, rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 63), gamma=st.floats(0.05, 1.95))
def test_antithetic_symmetry_bitwise(seed, gamma):
    spec = make_gff_spec(2)
    f = sample_field(spec, 16, seed)
    neg = GridField(f.dim, f.side_length, f.n, -f.values)
    assert gmc_mass(f, spec, GmcConfig(gamma)).mass == gmc_mass(neg, spec, GmcConfig(-gamma)).mass


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 63), gamma=st.floats(0.05, 1.95), bump=st.floats(1e-6, 2.0),
       cell=st.integers(0, 255))
def test_monotone_coupling(seed, gamma, bump, cell):
    spec = make_gff_spec(2)
    f = sample_field(spec, 16, seed)
    up = f.values.copy()
    up.flat[cell] += bump
    g = GridField(f.dim, f.side_length, f.n, up)
    assert gmc_mass(g, spec, GmcConfig(gamma)).mass > gmc_mass(f, spec, GmcConfig(gamma)).mass


def test_convergence_report_gamma_zero():
    rows = convergence_report(make_gff_spec(2), 0.0, [16, 32], 50)
    for r in rows:
        assert r.mean == 1.0 and r.stderr == 0.0


def test_convergence_report_gamma_one():
    rows = convergence_report(make_gff_spec(2), 1.0, [64, 128], 2000, master_seed=8)
    assert abs(rows[1].diff_prev) <= 4 * rows[1].combined_stderr
    for r in rows:
        assert abs(r.mean - 1.0) < 4 * r.stderr


def test_near_critical_finite():
    rows = convergence_report(make_gff_spec(2), 1.8, [32, 64], 500, master_seed=9)
    for r in rows:
        assert math.isfinite(r.mean) and r.mean > 0


def test_rejects_non_increasing_n_list():
    with pytest.raises(InvalidArgument):
        convergence_report(make_gff_spec(2), 1.0, [64, 32], 10)
