"""Per-command Monte Carlo jobs.

A job turns a block of sample indices into per-accumulator value arrays
(log values for log-domain accumulators) and per-sample CSV rows, and
turns finished accumulators into a results table and summary.
"""

import math

import numpy as np

from ..kernel_decomp import DecompParams, decompose, sample_decomposed_batch, search_params
from ..gmc import sample_masses
from ..sinh_gordon import ShgParams, free_energy_normalizer, log_summands, paired_mass_arrays
from ..small_dev import (
    TiltSpec,
    choose_R_tilt,
    default_R_tilt,
    naive_masses,
    tilted_masses,
)
from ..torus_field import grid_variance, make_gff_spec, make_star_spec, sample_values
from .accumulator import McAccumulator, PlainAccumulator
from .seeds import SeedPlan


def _r(x):
    return repr(float(x))


def _tag(x):
    return f"{float(x):g}"


def field_spec(cfg):
    if cfg.kind == "gff":
        return make_gff_spec(cfg.dim, cfg.R)
    return make_star_spec(xi=cfg.xi, t_low=cfg.t_low, dim=cfg.dim, R=cfg.R)


class Job:
    sample_columns = ()
    result_columns = ()

    def __init__(self, cfg):
        self.cfg = cfg
        self.plan = SeedPlan(cfg.master_seed)
        self.extra = {}

    def accumulators(self):
        raise NotImplementedError

    def compute(self, indices):
        raise NotImplementedError

    def results(self, accs):
        raise NotImplementedError

    def _rows(self, indices, *cols):
        return [",".join([str(i), str(self.plan.sample_seed(i))] + [_r(c[j]) for c in cols])
                for j, i in enumerate(indices)]


class FieldJob(Job):
    """Point variance of the synthesized field against the grid sum."""

    sample_columns = ("index", "seed", "x0", "rms")
    result_columns = ("quantity", "estimate", "stderr", "exact")

    def __init__(self, cfg):
        super().__init__(cfg)
        self.spec = field_spec(cfg)

    def accumulators(self):
        return {"x0_sq": PlainAccumulator()}

    def compute(self, indices):
        v = sample_values(self.spec, self.cfg.n, [self.plan.rng(i) for i in indices])
        x0 = v.reshape(v.shape[0], -1)[:, 0]
        rms = np.sqrt(np.mean(v.reshape(v.shape[0], -1) ** 2, axis=1))
        return {"x0_sq": x0 * x0}, self._rows(indices, x0, rms)

    def results(self, accs):
        a = accs["x0_sq"]
        exact = grid_variance(self.spec, self.cfg.n)
        return [("point_variance", a.mean(), a.se(), exact)], {
            "point_variance": a.mean(), "stderr": a.se(), "exact": exact,
            "z_score": (a.mean() - exact) / a.se() if a.se() > 0 else 0.0,
        }


class GmcJob(Job):
    """Total chaos mass for several gammas from one field per sample."""

    result_columns = ("gamma", "mean", "stderr", "z_vs_one")

    def __init__(self, cfg):
        super().__init__(cfg)
        self.spec = field_spec(cfg)
        self.names = [f"mass_g{_tag(g)}" for g in cfg.gammas]
        self.sample_columns = ("index", "seed", *self.names)

    def accumulators(self):
        return {k: McAccumulator() for k in self.names}

    def compute(self, indices):
        m = sample_masses(self.spec, self.cfg.n, self.cfg.gammas, self.plan, indices,
                          convention=self.cfg.convention, demean=self.cfg.convention == "tilde")
        return {k: np.log(m[i]) for i, k in enumerate(self.names)}, self._rows(indices, *m)

    def results(self, accs):
        rows, summary = [], {}
        for g, k in zip(self.cfg.gammas, self.names):
            a = accs[k]
            se = a.se()
            z = (a.mean() - 1.0) / se if se > 0 else 0.0
            rows.append((g, a.mean(), se, z))
            summary[k] = {"mean": a.mean(), "stderr": se, "z_vs_one": z}
        return rows, summary


class SmallDevJob(Job):
    """P(mass < eps) for each eps, by importance sampling or naive counting."""

    result_columns = ("eps", "p_hat", "stderr", "ess", "hits", "R_tilt")

    def __init__(self, cfg):
        super().__init__(cfg)
        self.spec = make_gff_spec(2)
        self.names = [f"eps{_tag(e)}" for e in cfg.eps]
        self.tilt = None
        if cfg.method == "is":
            eps_min = min(cfg.eps)
            if cfg.R_tilt == "auto":
                R, table = choose_R_tilt(self.spec, cfg.gamma, eps_min, cfg.n, cfg.pilot_samples,
                                         cfg.master_seed)
                self.extra["pilot_table"] = [list(map(float, row)) for row in table]
            elif cfg.R_tilt == "default":
                R = default_R_tilt(eps_min, cfg.gamma)
            else:
                R = cfg.R_tilt
            self.tilt = TiltSpec(self.spec, float(R))
            self.extra["R_tilt_resolved"] = float(R)
        self.sample_columns = ("index", "seed", "mass", "log_rn")

    def accumulators(self):
        out = {k: McAccumulator() for k in self.names}
        out.update({f"hits_{k}": PlainAccumulator() for k in self.names})
        return out

    def compute(self, indices):
        if self.tilt is None:
            m = naive_masses(self.spec, self.cfg.gamma, self.cfg.n, self.plan, indices)
            lr = np.zeros_like(m)
        else:
            m, lr = tilted_masses(self.tilt, self.cfg.gamma, self.cfg.n, self.plan, indices)
        pushes = {}
        for e, k in zip(self.cfg.eps, self.names):
            hit = m < e
            pushes[k] = np.where(hit, lr, -np.inf)
            pushes[f"hits_{k}"] = hit.astype(float)
        return pushes, self._rows(indices, m, lr)

    def results(self, accs):
        R = None if self.tilt is None else self.tilt.R_tilt
        rows, summary = [], {}
        for e, k in zip(self.cfg.eps, self.names):
            a = accs[k]
            hits = int(round(accs[f"hits_{k}"].total))
            rows.append((e, a.mean(), a.se(), a.ess(), hits, R if R is not None else float("nan")))
            summary[k] = {"p_hat": a.mean(), "stderr": a.se(), "ess": a.ess(), "hits": hits}
        return rows, summary


class ShgJob(Job):
    """log Z and free energy for each R from one set of paired masses."""

    sample_columns = ("index", "seed", "m_plus", "m_minus", "geometric_mean")
    result_columns = ("R", "log_Z", "stderr", "free_energy", "free_energy_stderr")

    def __init__(self, cfg):
        super().__init__(cfg)
        self.params = [ShgParams(cfg.gamma, cfg.mu, R) for R in cfg.R_list]
        self.names = [f"R{_tag(R)}" for R in cfg.R_list]

    def accumulators(self):
        out = {k: McAccumulator() for k in self.names}
        out.update({f"collapsed_{k}": McAccumulator() for k in self.names})
        return out

    def compute(self, indices):
        plus, minus = paired_mass_arrays(self.cfg.gamma, self.cfg.n, self.plan, indices)
        g = np.exp(0.5 * (np.log(plus) + np.log(minus)))
        pushes = {}
        for p, k in zip(self.params, self.names):
            pushes[k] = log_summands(p, g)
            pushes[f"collapsed_{k}"] = log_summands(p.collapsed(), g)
        return pushes, self._rows(indices, plus, minus, g)

    def results(self, accs):
        rows, summary, residual = [], {}, 0.0
        for p, k in zip(self.params, self.names):
            a, c = accs[k], accs[f"collapsed_{k}"]
            log_z, se = a.log_mean(), a.se_log()
            norm = free_energy_normalizer(p)
            rows.append((p.R, log_z, se, -log_z / norm, se / norm))
            residual = max(residual, abs(log_z - c.log_mean()) / max(abs(log_z), 1e-300))
            summary[k] = {"log_Z": log_z, "stderr": se, "free_energy": -log_z / norm,
                          "free_energy_stderr": se / norm}
        fe = [r[3] for r in rows]
        summary["collapse_residual"] = residual
        summary["free_energy_ratio"] = max(fe) / min(fe) if min(fe) > 0 else float("nan")
        return rows, summary


class DecompJob(Job):
    """Cross-covariance at the origin of the rough and remainder parts."""

    sample_columns = ("index", "seed", "rough0", "smooth0")
    result_columns = ("quantity", "estimate", "stderr")

    def __init__(self, cfg):
        super().__init__(cfg)
        self.input = make_gff_spec(2)
        if cfg.xi is None or cfg.N is None:
            found = search_params(self.input, K_max=cfg.K_max)
            xi = cfg.xi if cfg.xi is not None else found.xi
            N = cfg.N if cfg.N is not None else found.N
        else:
            xi, N = cfg.xi, cfg.N
        self.params = DecompParams(xi=xi, N=N, t=cfg.t, eps=cfg.eps)
        result = decompose(self.input, self.params, cfg.K_max)
        self.extra.update({"xi": xi, "N": N, "min_remainder": result.min_remainder,
                           "argmin_mode": list(result.argmin_mode)})

    def accumulators(self):
        return {"cross": PlainAccumulator(), "rough_sq": PlainAccumulator(),
                "smooth_sq": PlainAccumulator()}

    def compute(self, indices):
        rough, smooth = sample_decomposed_batch(self.input, self.params, self.cfg.n, self.plan,
                                                indices, self.cfg.K_max)
        a = rough.reshape(rough.shape[0], -1)[:, 0]
        b = smooth.reshape(smooth.shape[0], -1)[:, 0]
        return {"cross": a * b, "rough_sq": a * a, "smooth_sq": b * b}, self._rows(indices, a, b)

    def results(self, accs):
        rows = [(k, accs[k].mean(), accs[k].se()) for k in ("cross", "rough_sq", "smooth_sq")]
        c = accs["cross"]
        summary = {k: {"mean": m, "stderr": s} for k, m, s in rows}
        summary["cross_z"] = c.mean() / c.se() if c.se() > 0 else 0.0
        return rows, summary


JOBS = {"field": FieldJob, "gmc": GmcJob, "smalldev": SmallDevJob, "shg": ShgJob, "decomp": DecompJob}


def make_job(cfg):
    return JOBS[cfg.command](cfg)


def fmt_cell(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    return repr(v) if math.isfinite(v) else str(v)
