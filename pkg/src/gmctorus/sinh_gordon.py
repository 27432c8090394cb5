"""Partition function and free energy of the massless Sinh-Gordon model on T_R.

After integrating out the zero mode, the partition function is an average
of K0 evaluated at 2 mu R^{gamma Q} sqrt(M_+ M_-), where M_+ and M_- are the
unit-torus chaos masses at +gamma and -gamma of one field. All arithmetic is
in the log domain: at R = 16, gamma = 1 the K0 argument is around 2048.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bessel import bessel_k0_log
from .errors import InvalidArgument
from .gmc import GmcConfig, gmc_mass_batch
from .harness.seeds import SeedPlan
from .quadrature import adaptive_simpson
from .torus_field import make_gff_spec, sample_values


@dataclass(frozen=True)
class ShgParams:
    gamma: float
    mu: float = 1.0
    R: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 2.0:
            raise InvalidArgument(f"gamma must lie in (0, 2), got {self.gamma}")
        if not self.mu > 0:
            raise InvalidArgument(f"mu must be positive, got {self.mu}")
        if not self.R > 0:
            raise InvalidArgument(f"R must be positive, got {self.R}")

    @property
    def Q(self):
        return 2.0 / self.gamma + self.gamma / 2.0

    @property
    def exponent(self):
        """gamma Q = 2 + gamma^2 / 2."""
        return 2.0 + 0.5 * self.gamma * self.gamma

    def log_coupling(self):
        """log(mu R^{gamma Q})."""
        return math.log(self.mu) + self.exponent * math.log(self.R)

    def collapsed(self):
        """Same coupling with mu = 1 and R replaced by mu^{1/(gamma Q)} R."""
        return ShgParams(self.gamma, 1.0, self.mu ** (1.0 / self.exponent) * self.R)


@dataclass
class PairedMassSample:
    m_plus: float
    m_minus: float
    geometric_mean: float
    seed: Optional[int] = None

    @classmethod
    def from_masses(cls, m_plus, m_minus, seed=None):
        g = math.exp(0.5 * (math.log(m_plus) + math.log(m_minus)))
        return cls(float(m_plus), float(m_minus), g, seed)


def paired_mass_arrays(gamma, n, plan, indices):
    """(m_plus, m_minus) arrays from one unit-torus GFF batch; m_minus uses -gamma."""
    spec = make_gff_spec(2)
    values = sample_values(spec, n, [plan.rng(i) for i in indices])
    if gamma == 0.0:
        ones = np.ones(values.shape[0])
        return ones, ones.copy()
    plus = gmc_mass_batch(values, spec, GmcConfig(gamma))
    minus = gmc_mass_batch(values, spec, GmcConfig(-gamma))
    return plus, minus


def paired_masses(gamma, n, n_samples, seed=0, batch=250):
    plan = SeedPlan(seed)
    out = []
    for s in range(0, n_samples, batch):
        idx = range(s, min(s + batch, n_samples))
        plus, minus = paired_mass_arrays(gamma, n, plan, idx)
        for i, a, b in zip(idx, plus, minus):
            out.append(PairedMassSample.from_masses(a, b, plan.sample_seed(i)))
    return out


def _geometric_means(samples):
    if isinstance(samples, np.ndarray):
        return samples.astype(float)
    return np.array([s.geometric_mean for s in samples], dtype=float)


def log_summands(params, samples):
    """-log gamma + log K0(2 mu R^{gamma Q} g) for each sample."""
    g = _geometric_means(samples)
    if np.any(~(g > 0)):
        raise InvalidArgument("geometric means must be positive")
    log_x = math.log(2.0) + params.log_coupling() + np.log(g)
    return -math.log(params.gamma) + np.asarray(bessel_k0_log(np.exp(log_x)), dtype=float)


def log_mean_exp(terms):
    """(log mean exp(terms), delta-method stderr of the log); independent of order."""
    terms = np.asarray(terms, dtype=float)
    m = terms.size
    top = float(np.max(terms))
    w = np.exp(terms - top)
    s1 = math.fsum(w.tolist())
    s2 = math.fsum((w * w).tolist())
    mean = s1 / m
    var = max(s2 / m - mean * mean, 0.0)
    se = math.sqrt(var / m) / mean
    return top + math.log(mean), se


def partition_estimate(params, samples):
    g = _geometric_means(samples)
    if g.size < 2:
        raise InvalidArgument("need at least 2 samples")
    return log_mean_exp(log_summands(params, g))


def free_energy_normalizer(params):
    return params.mu ** (2.0 / params.exponent) * params.R ** 2


def free_energy(params, samples):
    """(-log Z / (mu^{2/(gamma Q)} R^2), propagated stderr)."""
    log_z, se = partition_estimate(params, samples)
    norm = free_energy_normalizer(params)
    return -log_z / norm, se / norm


def zero_mode_quadrature(params, geometric_mean, tol=1e-13):
    """int_0^inf exp(-a (c + 1/c)) dc / c with a = mu R^{gamma Q} g, which is 2 K0(2a).

    With c = e^s the integrand becomes exp(-2a cosh s), even in s. The
    integral over s >= 0 is done by adaptive Simpson on the rescaled
    integrand exp(-2a (cosh s - 1)) and the factor 2 e^{-2a} restored.
    """
    log_scaled, log_prefactor = _zero_mode_parts(params, geometric_mean, tol)
    return math.exp(log_prefactor + log_scaled)


def zero_mode_quadrature_log(params, geometric_mean, tol=1e-13):
    log_scaled, log_prefactor = _zero_mode_parts(params, geometric_mean, tol)
    return log_prefactor + log_scaled


def _zero_mode_parts(params, geometric_mean, tol):
    if not geometric_mean > 0:
        raise InvalidArgument("geometric mean must be positive")
    a = math.exp(params.log_coupling()) * geometric_mean
    b = 2.0 * a
    top = math.acosh(1.0 + 60.0 / b)
    scaled = adaptive_simpson(lambda s: math.exp(-b * (math.cosh(s) - 1.0)), 0.0, top, tol=tol)
    return math.log(scaled), math.log(2.0) - b
