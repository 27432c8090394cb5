"""Small-deviation probabilities of chaos mass, with an exact Gaussian tilt.

The tilted law nu scales each Fourier coordinate of the base field by
ratio(k) = min(|k| / R_tilt, 1). Both laws are diagonal Gaussians in the
same coordinates, so with z the standard-normal coordinate drawn under nu

    log dmu/dnu = sum over tilted coordinates of  log r + z^2 (1 - r^2) / 2,

and the relative entropy Ent(nu, mu) is the sum of log(1/r) + (r^2 - 1)/2.
"""

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy import stats

from .errors import InfiniteEntropy, InvalidArgument
from .gmc import GmcConfig, gmc_mass_batch, grid_sigma2, mass_from_values
from .harness.seeds import SeedPlan
from .torus_field import (
    FieldSpec,
    GridField,
    half_layout,
    half_symbol,
    lattice,
    make_star_spec,
    remove_mean_batch,
    sample_values,
)

ESS_WARN = 10.0
BETA_DEFAULT = 1e-5
KAPPA_DEFAULT = 12


def _half_kabs(n, dim):
    k = lattice(n, dim)[..., : n // 2 + 1, :] if dim == 2 else lattice(n, dim)[: n // 2 + 1]
    return np.sqrt(np.sum(k.astype(float) ** 2, axis=-1))


@dataclass(frozen=True)
class TiltSpec:
    base: FieldSpec
    R_tilt: float

    def __post_init__(self):
        if not self.R_tilt > 0:
            raise InvalidArgument(f"R_tilt must be positive, got {self.R_tilt}")

    def ratio(self, k):
        """Standard-deviation ratio at wavevector(s) k (1 where the base mode is inactive)."""
        k = np.asarray(k, dtype=float)
        if self.base.dim == 1 and (k.ndim == 0 or k.shape[-1] != 1):
            k = k[..., None]
        kabs = np.sqrt(np.sum(k * k, axis=-1))
        r = np.minimum(kabs / self.R_tilt, 1.0)
        active = self.base.symbol(k) > 0
        return np.where(active, r, 1.0)

    def half_ratio(self, n):
        """Ratios on the rfft half-lattice of the n-grid; raises if a live mode gets 0."""
        kabs = _half_kabs(n, self.base.dim)
        r = np.minimum(kabs / self.R_tilt, 1.0)
        active = half_symbol(self.base, n) > 0
        r = np.where(active, r, 1.0)
        if np.any(r == 0.0):
            raise InfiniteEntropy("tilt ratio is 0 on a mode with positive base variance")
        return r

    def grid_entropy(self, n):
        """Relative entropy of the tilt restricted to the n-grid's modes."""
        r = self.half_ratio(n)
        mult = half_layout(n, self.base.dim)
        terms = mult * (-np.log(r) + 0.5 * (r * r - 1.0))
        return math.fsum(terms.ravel().tolist())


@dataclass
class WeightedSample:
    field: GridField
    log_rn: float

    @property
    def log_rn_reverse(self):
        """log dnu/dmu at the same point."""
        return -self.log_rn


def entropy_exact(tilt, k_cutoff=None):
    """Ent(nu, mu): one term log(1/r) + (r^2 - 1)/2 per lattice vector k."""
    R = tilt.R_tilt
    if k_cutoff is None:
        k_cutoff = R
    if k_cutoff < R:
        raise InvalidArgument(f"k_cutoff={k_cutoff} must be at least R_tilt={R}")
    m = int(math.floor(R))
    d = tilt.base.dim
    ks = np.arange(-m, m + 1)
    K = np.stack(np.meshgrid(*([ks] * d), indexing="ij"), axis=-1).reshape(-1, d)
    kabs = np.sqrt(np.sum(K.astype(float) ** 2, axis=1))
    sel = kabs < R
    K, kabs = K[sel], kabs[sel]
    active = tilt.base.symbol(K) > 0
    r = kabs[active] / R
    if np.any(r == 0.0):
        raise InfiniteEntropy("tilt ratio is 0 on a mode with positive base variance")
    return math.fsum((-np.log(r) + 0.5 * (r * r - 1.0)).tolist())


def _log_rn_from(z2, r, mult):
    """Per-sample log dmu/dnu from squared coordinates on the half-lattice."""
    axes = tuple(range(1, z2.ndim))
    const = math.fsum((mult * np.log(r)).ravel().tolist())
    return const + 0.5 * np.sum(z2 * (1.0 - r * r), axis=axes)


def tilted_values(tilt, n, rngs):
    """Fields drawn under nu and their log dmu/dnu."""
    r = tilt.half_ratio(n)
    values, z2 = sample_values(tilt.base, n, rngs, ratio=r)
    return values, _log_rn_from(z2, r, half_layout(n, tilt.base.dim))


def sample_tilted(tilt, n, seed):
    from .harness.seeds import philox

    rng = philox(seed)
    values, log_rn = tilted_values(tilt, n, [rng])
    spec = tilt.base
    f = GridField(spec.dim, spec.side_length, n, values[0], spec.spec_id, int(seed))
    return WeightedSample(f, float(log_rn[0]))


# -- probability estimates ---------------------------------------------------


@dataclass
class ProbEstimate:
    eps: float
    p_hat: float
    stderr: float
    n_samples: int
    hits: int
    ess: Optional[float] = None
    R_tilt: Optional[float] = None
    upper_bound: Optional[float] = None

    @property
    def ess_flag(self):
        return self.ess is not None and self.ess < ESS_WARN

    @property
    def rule_of_three(self):
        return 3.0 / self.n_samples


def _cfg(gamma, spec):
    return GmcConfig(gamma, dim=spec.dim)


def naive_masses(spec, gamma, n, plan, indices):
    """Self-normalized masses of mean-removed fields on the whole torus."""
    values = sample_values(spec, n, [plan.rng(i) for i in indices])
    mask = np.ones((n,) * spec.dim, dtype=bool)
    values = remove_mean_batch(values, mask, spec.dim)
    return gmc_mass_batch(values, spec, _cfg(gamma, spec), demean_mask=mask)


def tilted_masses(tilt, gamma, n, plan, indices):
    """Masses (mu normalization) of fields drawn under nu, with log dmu/dnu."""
    spec = tilt.base
    values, log_rn = tilted_values(tilt, n, [plan.rng(i) for i in indices])
    mask = np.ones((n,) * spec.dim, dtype=bool)
    values = remove_mean_batch(values, mask, spec.dim)
    return gmc_mass_batch(values, spec, _cfg(gamma, spec), demean_mask=mask), log_rn


def _batched(fn, n_samples, batch):
    parts = [fn(range(s, min(s + batch, n_samples))) for s in range(0, n_samples, batch)]
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p) for p in zip(*parts))
    return np.concatenate(parts)


def _as_list(eps):
    return [float(e) for e in np.atleast_1d(eps)]


def naive_from_masses(masses, eps):
    m = masses.size
    hits = int(np.count_nonzero(masses < eps))
    p = hits / m
    se = math.sqrt(p * (1.0 - p) / m)
    ub = 3.0 / m if hits == 0 else None
    return ProbEstimate(eps, p, se, m, hits, upper_bound=ub)


def small_dev_naive(spec, gamma, eps, n, n_samples, seed=0, batch=500):
    """Frequency of {mass < eps} with its binomial standard error (list if eps is a list)."""
    plan = SeedPlan(seed)
    masses = _batched(lambda idx: naive_masses(spec, gamma, n, plan, idx), n_samples, batch)
    out = [naive_from_masses(masses, e) for e in _as_list(eps)]
    return out if np.ndim(eps) else out[0]


def is_from_samples(masses, log_rn, eps, R_tilt=None):
    """Importance-sampling estimate of P(mass < eps) from nu draws."""
    m = masses.size
    hit = masses < eps
    hits = int(np.count_nonzero(hit))
    if hits == 0:
        return ProbEstimate(eps, 0.0, 0.0, m, 0, ess=0.0, R_tilt=R_tilt)
    lw = np.where(hit, log_rn, -np.inf)
    top = float(np.max(lw))
    w = np.exp(lw - top)  # shifted weights, zero off the event
    s1 = math.fsum(w.tolist())
    s2 = math.fsum((w * w).tolist())
    p = math.exp(top) * s1 / m
    second = math.exp(2 * top) * s2 / m
    se = math.sqrt(max(second - p * p, 0.0) / m)
    ess = s1 * s1 / s2
    return ProbEstimate(eps, p, se, m, hits, ess=ess, R_tilt=R_tilt)


def default_R_tilt(eps, gamma):
    return eps ** (-2.0 / (gamma * gamma))


def small_dev_is(spec, gamma, eps, R_tilt=None, n=64, n_samples=10_000, seed=0, batch=500,
                 pilot_samples=1000):
    """IS estimate of P(mass < eps) under the tilt with scale R_tilt.

    ``R_tilt=None`` uses eps^{-2/gamma^2}; ``R_tilt="auto"`` picks the
    candidate with the largest pilot ESS (see :func:`choose_R_tilt`).
    """
    if not eps > 0:
        raise InvalidArgument("eps must be positive")
    if R_tilt is None:
        R_tilt = default_R_tilt(eps, gamma)
    elif R_tilt == "auto":
        R_tilt = choose_R_tilt(spec, gamma, eps, n, pilot_samples, seed)[0]
    tilt = TiltSpec(spec, float(R_tilt))
    plan = SeedPlan(seed)
    masses, log_rn = _batched(lambda idx: tilted_masses(tilt, gamma, n, plan, idx), n_samples, batch)
    return is_from_samples(masses, log_rn, eps, float(R_tilt))


def tilt_candidates(n):
    base = [0.5, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 11.0, 16.0, 22.0, 32.0]
    return [r for r in base if r <= n / 2]


def choose_R_tilt(spec, gamma, eps, n, pilot_samples=1000, seed=0, candidates=None):
    """Candidate tilt scale with the largest event-restricted ESS on a pilot run.

    Pilot draws come from a seed plan independent of the main run. Returns
    (R_tilt, table) where table lists (R, ess, p_hat) for every candidate.
    """
    plan = SeedPlan(seed).child(0x9170)
    table = []
    for R in candidates or tilt_candidates(n):
        tilt = TiltSpec(spec, R)
        masses, log_rn = tilted_masses(tilt, gamma, n, plan, range(pilot_samples))
        est = is_from_samples(masses, log_rn, eps, R)
        table.append((R, est.ess, est.p_hat))
    best = max(table, key=lambda row: (row[1], -row[0]))
    return best[0], table


# -- exponent fit ----------------------------------------------------------


@dataclass
class ExponentFit:
    slope: float
    intercept: float
    slope_stderr: float
    ci: tuple
    n_points: int
    excluded: list = dc_field(default_factory=list)

    def target(self, dim, gamma):
        return 2.0 * dim / (gamma * gamma)


def exponent_fit(points, level=0.95):
    """Weighted least squares of log(-log p) on log(1/eps).

    Each point is (eps, p_hat, stderr). Weights are the inverse delta-method
    variances of log(-log p); if every stderr is zero the fit is unweighted.
    The interval uses the t distribution with the residual scale inflated to
    at least the nominal one.
    """
    pts = [(float(e), float(p), float(s)) for e, p, s in points]
    if len(pts) < 3:
        raise InvalidArgument("need at least 3 points")
    for e, p, _ in pts:
        if not 0.0 < p < 1.0:
            raise InvalidArgument(f"p_hat={p} at eps={e} is outside (0, 1)")
        if not e > 0:
            raise InvalidArgument("eps must be positive")
    x = np.array([math.log(1.0 / e) for e, _, _ in pts])
    if np.ptp(x) == 0.0 or len(set(x.tolist())) < 2:
        raise InvalidArgument("degenerate design: all eps identical")
    p = np.array([q for _, q, _ in pts])
    se = np.array([s for _, _, s in pts])
    y = np.log(-np.log(p))
    if np.all(se == 0):
        w = np.ones_like(x)
        weighted = False
    else:
        sd_y = se / (p * np.abs(np.log(p)))
        if np.any(sd_y == 0):
            raise InvalidArgument("mixed zero and nonzero standard errors")
        w = 1.0 / sd_y ** 2
        weighted = True
    A = np.stack([x, np.ones_like(x)], axis=1)
    Aw = A * np.sqrt(w)[:, None]
    yw = y * np.sqrt(w)
    coef, *_ = np.linalg.lstsq(Aw, yw, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    resid = yw - Aw @ coef
    dof = len(pts) - 2
    cov = np.linalg.inv(Aw.T @ Aw)
    if weighted:
        scale = max(1.0, float(resid @ resid) / dof) if dof > 0 else 1.0
    else:
        scale = float(resid @ resid) / dof if dof > 0 else 0.0
    slope_se = math.sqrt(cov[0, 0] * scale)
    q = stats.t.ppf(0.5 + level / 2, dof) if dof > 0 else math.inf
    return ExponentFit(slope, intercept, slope_se, (slope - q * slope_se, slope + q * slope_se), len(pts))


def fit_estimates(estimates, level=0.95):
    """Fit the usable estimates; p_hat = 0 or 1 cells are set aside and reported."""
    usable = [e for e in estimates if 0.0 < e.p_hat < 1.0]
    excluded = [(e.eps, e.p_hat, e.rule_of_three if e.p_hat == 0 else None)
                for e in estimates if not 0.0 < e.p_hat < 1.0]
    fit = exponent_fit([(e.eps, e.p_hat, e.stderr) for e in usable], level)
    fit.excluded = excluded
    return fit


# -- dichotomy checker -----------------------------------------------------


def ck_constant(kappa):
    return 8.0 * (2.0 / math.e) ** kappa / (1.0 - 2.0 / math.e)


def min_admissible_kappa():
    kappa = 1
    while ck_constant(kappa) >= 1.0:
        kappa += 1
    return kappa


@dataclass
class BranchReport:
    branch: int
    level: Optional[int]
    cells: np.ndarray = dc_field(repr=False)
    measure: float
    required: float
    domain_measure: float
    threshold: float


def ck_dichotomy(values, areas, D_mask, alpha, kappa=KAPPA_DEFAULT, beta=BETA_DEFAULT):
    """Exhaustive level-set scan for one of the two branches.

    Branch 1: B = {Z >= -alpha} in D has measure >= beta |D|.
    Branch 2: some n >= kappa has A_n = {Z >= 4 alpha 2^n} in D of measure >= e^{-n} |D|.
    """
    if not alpha > 0:
        raise InvalidArgument("alpha must be positive")
    if ck_constant(kappa) >= 1.0:
        raise InvalidArgument(f"kappa={kappa} too small: 8(2/e)^kappa/(1-2/e) = {ck_constant(kappa):.4f} >= 1")
    if 4.0 * beta * 2.0 ** kappa + ck_constant(kappa) >= 1.0 - beta:
        raise InvalidArgument(f"beta={beta} too large for kappa={kappa}")
    Z = np.asarray(values, dtype=float)
    D = np.asarray(D_mask, dtype=bool)
    a = np.broadcast_to(np.asarray(areas, dtype=float), Z.shape)
    if not D.any():
        raise InvalidArgument("D selects no cells")
    zd, ad = Z[D], a[D]
    measure_D = math.fsum(ad.tolist())
    mean = math.fsum((zd * ad).tolist()) / measure_D
    rms = math.sqrt(math.fsum((zd * zd * ad).tolist()) / measure_D)
    if abs(mean) > 1e-9 * max(rms, 1e-300):
        raise InvalidArgument(f"values are not mean-zero on D (mean {mean:.3e}, rms {rms:.3e})")
    B = D & (Z >= -alpha)
    mB = math.fsum(a[B].tolist())
    if mB >= beta * measure_D:
        return BranchReport(1, None, B, mB, beta * measure_D, measure_D, -alpha)
    top = float(zd.max())
    level = kappa
    while 4.0 * alpha * 2.0 ** level <= top:
        thr = 4.0 * alpha * 2.0 ** level
        A = D & (Z >= thr)
        mA = math.fsum(a[A].tolist())
        need = math.exp(-level) * measure_D
        if mA >= need:
            return BranchReport(2, level, A, mA, need, measure_D, thr)
        level += 1
    raise ArithmeticError("no branch found; the dichotomy inequality failed")


# -- concentration probe ---------------------------------------------------


@dataclass
class ProbeRow:
    t: float
    p_hat: float
    stderr: float
    n_samples: int
    upper_bound: Optional[float] = None


def concentration_probe(gamma, t_list, D_mask, n_samples, n=64, xi=1.0, seed=0, batch=250):
    """P(tilde-normalized mass of D <= |D|/2) for the rough field above scale t.

    The field has kernel int_t^inf rho(e^u r)(1 - e^{-xi u}) du, is demeaned
    on D, and the weight uses the variance before demeaning.
    """
    D = np.asarray(D_mask, dtype=bool)
    d = D.ndim
    area_D = D.sum() / D.size
    rows = []
    for t in t_list:
        if area_D < math.exp(-2 * t):
            raise InvalidArgument(f"|D|={area_D} is below e^(-2t) at t={t}")
        spec = make_star_spec(xi=xi, t_low=float(t), dim=d)
        plan = SeedPlan(seed).child(int(round(1000 * t)))
        cfg = GmcConfig(gamma, convention="tilde", region_mask=D, dim=d)

        def masses(idx):
            v = sample_values(spec, n, [plan.rng(i) for i in idx])
            v = remove_mean_batch(v, D, d)
            return gmc_mass_batch(v, spec, cfg, demean_mask=D)

        m = _batched(masses, n_samples, batch)
        hits = int(np.count_nonzero(m <= area_D / 2))
        p = hits / n_samples
        rows.append(ProbeRow(float(t), p, math.sqrt(p * (1 - p) / n_samples), n_samples,
                             3.0 / n_samples if hits == 0 else None))
    return rows


# -- Donsker-Varadhan objective -------------------------------------------


@dataclass
class DvResult:
    R_tilt: float
    objective: float
    entropy_part: float
    mass_part: float
    mean_mass: float
    mean_mass_stderr: float

    @property
    def objective_stderr(self):
        return self.mass_part / self.mean_mass * self.mean_mass_stderr if self.mean_mass else 0.0


def dv_objective(spec, gamma, R_tilt, n, n_samples, seed=0, batch=250):
    """R^{d + gamma^2/2} E_nu[mass] + Ent(nu, mu), with the parts reported separately."""
    tilt = TiltSpec(spec, float(R_tilt))
    plan = SeedPlan(seed)
    masses, _ = _batched(lambda idx: tilted_masses(tilt, gamma, n, plan, idx), n_samples, batch)
    mean = float(np.mean(masses))
    se = float(np.std(masses) / math.sqrt(masses.size))
    ent = entropy_exact(tilt)
    scale = float(R_tilt) ** (spec.dim + 0.5 * gamma * gamma)
    return DvResult(float(R_tilt), scale * mean + ent, ent, scale * mean, mean, se)


def tilted_mean_mass_exact(tilt, gamma, n):
    """E_nu[mass of T^d] in closed form: exp(-gamma^2/2 * sum S(k)(1 - r(k)^2))."""
    r = tilt.half_ratio(n)
    S = half_symbol(tilt.base, n)
    mult = half_layout(n, tilt.base.dim)
    drop = math.fsum((mult * S * (1.0 - r * r)).ravel().tolist())
    return tilt.base.side_length ** tilt.base.dim * math.exp(-0.5 * gamma * gamma * drop)
