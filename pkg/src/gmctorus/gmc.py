"""Total masses of Gaussian multiplicative chaos on grid fields.

The mass of a region is the Riemann sum of exp(gamma X - gamma^2/2 sigma^2)
over its cells. Two conventions fix sigma^2:

* ``self``: the variance of the field that is actually exponentiated, cell by
  cell (constant unless the field was demeaned on part of the torus);
* ``tilde``: the variance of the field before demeaning, so that the weight of
  a demeaned field differs from the self-normalized one by a constant factor.

With ``physical_scale`` the normalizing variance is reduced by log R. For
fields built by the exact scaling X_R(z) = X_1(z / R) the extra log R is part
of the smooth correction to -log d on T_R, not of the mollified log
divergence, and leaving it out of the normalization yields the
R^{d + gamma^2/2} scaling of the mass.
"""

import math
from functools import lru_cache
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
import scipy.fft as sfft

from .errors import InvalidArgument
from .harness.seeds import SeedPlan
from .torus_field import (
    GridField,
    make_gff_spec,
    remove_mean_batch,
    sample_field,
    sample_values,
    symbol_grid,
)

SELF = "self"
TILDE = "tilde"
NEAR_CRITICAL_FRACTION = 0.05


@dataclass(frozen=True)
class GmcConfig:
    gamma: float
    convention: str = SELF
    region_mask: Optional[np.ndarray] = dc_field(default=None, compare=False, repr=False)
    dim: int = 2
    physical_scale: bool = False

    def __post_init__(self):
        if self.convention not in (SELF, TILDE):
            raise InvalidArgument(f"convention must be 'self' or 'tilde', got {self.convention!r}")
        if not abs(self.gamma) < math.sqrt(2 * self.dim):
            raise InvalidArgument(
                f"|gamma| = {abs(self.gamma)} is not below the critical value {math.sqrt(2 * self.dim):.6f}"
            )

    @property
    def near_critical(self):
        crit = math.sqrt(2 * self.dim)
        return abs(self.gamma) >= (1.0 - NEAR_CRITICAL_FRACTION) * crit


@dataclass
class MassSample:
    mass: float
    grid_n: int
    spec_id: str = ""
    seed: Optional[int] = None
    gamma: float = 0.0
    convention: str = SELF
    near_critical: bool = False


def _mask_for(cfg, n, dim):
    if cfg.region_mask is None:
        return np.ones((n,) * dim, dtype=bool)
    mask = np.asarray(cfg.region_mask, dtype=bool)
    if mask.shape != (n,) * dim:
        raise InvalidArgument("region mask does not match the grid")
    if not mask.any():
        raise InvalidArgument("region mask selects no cells")
    return mask


@lru_cache(maxsize=64)
def grid_sigma2(spec, n):
    """Variance of the synthesized (un-demeaned) field at any cell."""
    return math.fsum(symbol_grid(spec, n).ravel().tolist())


def demeaned_variance(spec, n, mask):
    """Cellwise variance of X - avg_mask(X) for X sampled on the n-grid."""
    table = symbol_grid(spec, n)
    d = spec.dim
    m = np.asarray(mask, dtype=float)
    count = m.sum()
    if np.all(m == 1.0):
        return np.full(m.shape, grid_sigma2(spec, n) - float(table.flat[0]))
    conv = np.real(sfft.ifftn(table * sfft.fftn(m))) * n ** d  # sum_j c(z - j) m_j
    cov_avg = conv / count
    var_avg = float(np.sum(m * conv)) / count ** 2
    return grid_sigma2(spec, n) - 2.0 * cov_avg + var_avg


def normalizing_variance(spec, n, cfg, demean_mask=None):
    """sigma^2 used in the weight: a scalar or a cellwise array."""
    if cfg.convention == TILDE or demean_mask is None:
        sigma2 = grid_sigma2(spec, n)
    else:
        sigma2 = demeaned_variance(spec, n, demean_mask)
    if cfg.physical_scale:
        sigma2 = sigma2 - spec.log_scale_shift
    return sigma2


def _check_tilde_field(values, mask, demean_mask):
    if demean_mask is not None and np.array_equal(demean_mask, mask):
        return
    sub = values[..., mask]
    rms = np.sqrt(np.mean(sub ** 2, axis=-1))
    avg = np.mean(sub, axis=-1)
    if np.any(np.abs(avg) > 1e-9 * np.maximum(rms, 1e-300)):
        raise InvalidArgument("tilde convention needs a field demeaned on the region mask")


def mass_from_values(values, sigma2, gamma, cell_area, mask):
    """Riemann sums of exp(gamma X - gamma^2/2 sigma^2) over ``mask``; batch on axis 0."""
    if gamma == 0.0:
        count = int(mask.sum())
        shape = values.shape[: values.ndim - mask.ndim]
        return np.full(shape, count * cell_area) if shape else count * cell_area
    w = gamma * values
    w -= (0.5 * gamma * gamma) * sigma2
    np.exp(w, out=w)
    if mask.all():
        return np.sum(w, axis=tuple(range(-mask.ndim, 0))) * cell_area
    return np.sum(w[..., mask], axis=-1) * cell_area


def gmc_mass(field, spec, cfg):
    """Mass of the configured region under the configured normalization."""
    n, d = field.n, field.dim
    mask = _mask_for(cfg, n, d)
    if cfg.convention == TILDE:
        _check_tilde_field(field.values, mask, field.demean_mask)
    sigma2 = normalizing_variance(spec, n, cfg, field.demean_mask)
    m = mass_from_values(field.values, sigma2, cfg.gamma, field.cell_area, mask)
    return MassSample(float(m), n, field.spec_id, field.seed, cfg.gamma, cfg.convention, cfg.near_critical)


def gmc_mass_batch(values, spec, cfg, demean_mask=None):
    """Masses for a batch of fields (leading axis) sampled from ``spec``."""
    d = spec.dim
    n = values.shape[-1]
    mask = _mask_for(cfg, n, d)
    if cfg.convention == TILDE:
        _check_tilde_field(values, mask, None if demean_mask is None else demean_mask)
    sigma2 = normalizing_variance(spec, n, cfg, demean_mask)
    area = (spec.side_length / n) ** d
    return mass_from_values(values, sigma2, cfg.gamma, area, mask)


def scaling_pair(gamma, R, n, seed, dim=2):
    """(mass of T_R, R^{d + gamma^2/2} * mass of T_1) from one seed.

    Both fields come from the same unit-lattice coefficients, which is the
    exact scaling X_R(z) = X_1(z / R). The R-torus mass is normalized with the
    log R shift described in the module docstring.
    """
    spec_R, spec_1 = make_gff_spec(dim, R), make_gff_spec(dim, 1.0)
    f_R, f_1 = sample_field(spec_R, n, seed), sample_field(spec_1, n, seed)
    m_R = gmc_mass(f_R, spec_R, GmcConfig(gamma, dim=dim, physical_scale=True)).mass
    m_1 = gmc_mass(f_1, spec_1, GmcConfig(gamma, dim=dim)).mass
    if R == 1.0:
        return m_R, m_1
    return m_R, R ** (dim + 0.5 * gamma * gamma) * m_1


def scaling_pairs_batch(gamma, R, n, plan, indices, dim=2):
    """Vectorized scaling_pair over sample indices of a seed plan."""
    spec_R, spec_1 = make_gff_spec(dim, R), make_gff_spec(dim, 1.0)
    values = sample_values(spec_1, n, [plan.rng(i) for i in indices])
    m_R = gmc_mass_batch(values, spec_R, GmcConfig(gamma, dim=dim, physical_scale=True))
    m_1 = gmc_mass_batch(values, spec_1, GmcConfig(gamma, dim=dim))
    if R == 1.0:
        return m_R, m_1
    return m_R, R ** (dim + 0.5 * gamma * gamma) * m_1


def sample_masses(spec, n, gammas, plan, indices, convention=SELF, region_mask=None, demean=False):
    """Masses for several gammas from one batch of fields.

    Returns an array of shape (len(gammas), len(indices)). With ``demean`` the
    fields are mean-removed on the region mask first.
    """
    d = spec.dim
    values = sample_values(spec, n, [plan.rng(i) for i in indices])
    mask = np.ones((n,) * d, dtype=bool) if region_mask is None else np.asarray(region_mask, bool)
    demean_mask = None
    if demean:
        values = remove_mean_batch(values, mask, d)
        demean_mask = mask
    out = np.empty((len(gammas), values.shape[0]))
    for i, g in enumerate(gammas):
        cfg = GmcConfig(g, convention=convention, region_mask=mask, dim=d)
        out[i] = gmc_mass_batch(values, spec, cfg, demean_mask)
    return out


@dataclass
class ConvergenceRow:
    n: int
    mean: float
    stderr: float
    diff_prev: Optional[float] = None
    combined_stderr: Optional[float] = None

    @property
    def z_score(self):
        if self.diff_prev is None or not self.combined_stderr:
            return None
        return self.diff_prev / self.combined_stderr


def convergence_report(spec, gamma, n_list, n_samples, master_seed=0, batch=250):
    """Mean self-normalized mass of the whole torus at each resolution."""
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise InvalidArgument("n_list must be increasing")
    rows = []
    plan = SeedPlan(master_seed)
    for n in n_list:
        masses = np.concatenate([
            sample_masses(spec, n, [gamma], plan, range(s, min(s + batch, n_samples)))[0]
            for s in range(0, n_samples, batch)
        ])
        mean = float(np.mean(masses))
        se = float(np.std(masses) / math.sqrt(masses.size))
        row = ConvergenceRow(n, mean, se)
        if rows:
            prev = rows[-1]
            row.diff_prev = mean - prev.mean
            row.combined_stderr = math.hypot(se, prev.stderr)
        rows.append(row)
    return rows
