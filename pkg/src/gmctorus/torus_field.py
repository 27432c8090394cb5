"""Centered Gaussian fields on the torus T^d_R described by Fourier symbols.

A field is ``X(x) = sum_k a_k exp(2 pi i k.x / R)`` over k in Z^d with
independent complex Gaussian coefficients, ``a_{-k} = conj(a_k)`` and
``E|a_k|^2 = symbol(k)``. Modes are indexed on the unit-torus lattice, so
a field on T^d_R is the unit-torus field read at ``x / R``. On a grid with
``n`` points per side the lattice is cut off at the Nyquist frequency.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import scipy.fft as sfft

from .errors import InvalidArgument, PositivityViolation
from .harness.seeds import philox
from .quadrature import adaptive_simpson, gauss_legendre_panels
from .seed_covariance import SeedCovariance, standard_seed

GFF = "gff"
STAR = "star"
CUSTOM = "custom"

NEG_TOL = 1e-10


@dataclass(frozen=True)
class FieldSpec:
    """Immutable description of a centered Gaussian field on T^d_R.

    ``symbol_fn`` (custom kind only) maps an integer array of shape
    ``(..., dim)`` to mode variances. ``grid_n`` fixes the sampling grid
    whose circulant diagonalization defines star kernels with finite
    ``t_high``.
    """

    dim: int
    side_length: float = 1.0
    kind: str = GFF
    xi: float = math.inf
    t_low: float = 0.0
    t_high: float = math.inf
    zero_mode_variance: float = 0.0
    symbol_fn: Optional[Callable] = field(default=None, repr=False)
    grid_n: Optional[int] = None
    label: str = ""

    def symbol(self, k):
        """Mode variance at integer wavevector(s) ``k`` of shape (..., dim)."""
        k = np.asarray(k)
        if k.ndim == 0 or k.shape[-1] != self.dim:
            k = k.reshape(k.shape + (1,)) if self.dim == 1 else k
        if self.kind == GFF:
            k2 = np.sum(k.astype(float) ** 2, axis=-1)
            out = np.full(k2.shape, float(self.zero_mode_variance))
            nz = k2 > 0
            out[nz] = 1.0 / (2.0 * np.pi * k2[nz])
            return out
        if self.kind == CUSTOM:
            return np.asarray(self.symbol_fn(k), dtype=float)
        if self.kind == STAR:
            if math.isinf(self.t_high):
                return _star_continuum_symbol(self, np.sqrt(np.sum(k.astype(float) ** 2, axis=-1)))
            n = self.grid_n
            if n is None:
                raise InvalidArgument("star spec with finite t_high needs grid_n")
            table = symbol_grid(self, n)
            idx = tuple(np.mod(k[..., i], n) for i in range(self.dim))
            return table[idx]
        raise InvalidArgument(f"unknown field kind {self.kind!r}")

    @property
    def log_scale_shift(self):
        """h_R(z, z) - h_1(z, z) = log R for fields built by the exact scaling."""
        return math.log(self.side_length)

    def block(self, **extra):
        """Flat key-value provenance block."""
        items = [
            ("kind", self.kind),
            ("dim", self.dim),
            ("R", repr(float(self.side_length))),
            ("xi", repr(float(self.xi))),
            ("t_low", repr(float(self.t_low))),
            ("t_high", repr(float(self.t_high))),
        ]
        if self.label:
            items.append(("label", self.label))
        items += [(k, v) for k, v in extra.items()]
        return "\n".join(f"{k} = {v}" for k, v in items)

    @property
    def spec_id(self):
        return self.block().replace("\n", "; ")


@dataclass
class GridField:
    dim: int
    side_length: float
    n: int
    values: np.ndarray
    spec_id: str = ""
    seed: Optional[int] = None
    demean_mask: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def cell_area(self):
        return (self.side_length / self.n) ** self.dim

    def rms(self):
        return float(np.sqrt(np.mean(self.values ** 2)))


def _check_dim(dim):
    if dim not in (1, 2):
        raise InvalidArgument(f"dim must be 1 or 2, got {dim}")


def _check_n(n):
    if not isinstance(n, (int, np.integer)) or n < 4 or (n & (n - 1)) != 0:
        raise InvalidArgument(f"grid size n must be a power of two >= 4, got {n}")


def make_gff_spec(dim, R=1.0):
    """Zero-mean free field: symbol 1/(2 pi |k|^2) off the origin, 0 at k = 0."""
    _check_dim(dim)
    if not R > 0:
        raise InvalidArgument(f"side length R must be positive, got {R}")
    return FieldSpec(dim=dim, side_length=float(R), kind=GFF)


def make_custom_spec(dim, symbol_fn, R=1.0, label="custom"):
    _check_dim(dim)
    if not R > 0:
        raise InvalidArgument(f"side length R must be positive, got {R}")
    return FieldSpec(dim=dim, side_length=float(R), kind=CUSTOM, symbol_fn=symbol_fn, label=label)


def make_star_spec(rho=None, xi=math.inf, t_low=0.0, t_high=math.inf, dim=2, R=1.0, n=None):
    """Almost star-scale invariant field with kernel int rho(e^u r)(1 - e^{-xi u}) du.

    For finite ``t_high`` the symbol is the DFT of the kernel row on the
    ``n``-point grid. For ``t_high = inf`` the kernel diverges at the origin,
    so the exact torus Fourier coefficients are used instead, cut off at
    the grid Nyquist frequency like every other spec.
    """
    _check_dim(dim)
    if not R > 0:
        raise InvalidArgument(f"side length R must be positive, got {R}")
    if not (0.0 <= t_low < t_high):
        raise InvalidArgument(f"need 0 <= t_low < t_high, got ({t_low}, {t_high})")
    if not (xi > 0):
        raise InvalidArgument(f"xi must be positive or inf, got {xi}")
    if rho is not None and rho.dim != dim:
        raise InvalidArgument("seed covariance dimension does not match dim")
    if not math.isinf(t_high):
        if n is None:
            raise InvalidArgument("finite t_high needs the sampling grid size n")
        _check_n(n)
    spec = FieldSpec(dim=dim, side_length=float(R), kind=STAR, xi=float(xi),
                     t_low=float(t_low), t_high=float(t_high), grid_n=n)
    # build eagerly so positivity problems surface at construction
    if n is not None:
        symbol_grid(spec, n)
    return spec


def _seed_for(spec):
    return standard_seed(spec.dim)


def _damping(xi, u):
    if math.isinf(xi):
        return np.where(np.asarray(u) > 0, 1.0, 0.0)
    return -np.expm1(-xi * np.asarray(u))


def kernel_at_zero(spec):
    """C(0) = int_{t_low}^{t_high} (1 - e^{-xi u}) du in closed form."""
    if math.isinf(spec.t_high):
        return math.inf
    width = spec.t_high - spec.t_low
    if math.isinf(spec.xi):
        return width
    return width - (math.exp(-spec.xi * spec.t_low) - math.exp(-spec.xi * spec.t_high)) / spec.xi


def _u_max(spec, r, support):
    if r <= 0:
        return spec.t_high
    return min(spec.t_high, math.log(support / r))


def covariance(spec, r, cutoff=None, tol=1e-10):
    """Kernel value at torus distance ``r`` (in units of the side length R).

    Star kernels use adaptive Simpson over u; the integrand vanishes once
    e^u r reaches the support radius of rho. Lattice specs (GFF, custom)
    are summed over |k_i| <= cutoff.
    """
    r = float(r)
    R = spec.side_length
    if r < 0 or r > R * math.sqrt(spec.dim) / 2 + 1e-12:
        raise InvalidArgument(f"distance {r} outside [0, diameter]")
    if spec.kind != STAR:
        disp = np.zeros(spec.dim)
        disp[0] = r
        return lattice_covariance(spec, disp, cutoff=4096 if cutoff is None else cutoff)
    x = r / R
    if x == 0.0:
        return kernel_at_zero(spec)
    rho = _seed_for(spec)
    lo = spec.t_low
    hi = _u_max(spec, x, rho.support_radius)
    if hi <= lo:
        return 0.0
    xi = spec.xi

    def integrand(u):
        damp = 1.0 if math.isinf(xi) else -math.expm1(-xi * u)
        return rho.profile(math.exp(u) * x) * damp

    return adaptive_simpson(integrand, lo, hi, tol=tol)


def lattice_covariance(spec, displacement, cutoff=4096, chunk=512):
    """sum_{|k_i| <= cutoff} symbol(k) cos(2 pi k.x / R).

    In 2D the phase splits as cos(a + b) = cos a cos b - sin a sin b, so each
    block of rows reduces to two matrix-vector products.
    """
    disp = np.asarray(displacement, dtype=float).reshape(spec.dim) / spec.side_length
    ks = np.arange(-cutoff, cutoff + 1)
    if spec.dim == 1:
        s = spec.symbol(ks[:, None])
        return math.fsum((s * np.cos(2 * np.pi * ks * disp[0])).tolist())
    c1, s1 = np.cos(2 * np.pi * ks * disp[0]), np.sin(2 * np.pi * ks * disp[0])
    c2, s2 = np.cos(2 * np.pi * ks * disp[1]), np.sin(2 * np.pi * ks * disp[1])
    parts = []
    for start in range(0, ks.size, chunk):
        rows = slice(start, start + chunk)
        if spec.kind == GFF:
            k2 = (ks[rows, None] ** 2 + ks[None, :] ** 2).astype(float)
            with np.errstate(divide="ignore"):
                S = 1.0 / (2.0 * np.pi * k2)
            S[k2 == 0] = spec.zero_mode_variance
        else:
            K = np.stack(np.meshgrid(ks[rows], ks, indexing="ij"), axis=-1)
            S = spec.symbol(K)
        parts.append(float(c1[rows] @ (S @ c2) - s1[rows] @ (S @ s2)))
    return math.fsum(parts)


def lattice(n, dim):
    """Integer wavevectors of the n-point grid in FFT order, shape (n,)*dim + (dim,)."""
    f = np.fft.fftfreq(n, 1.0 / n).astype(np.int64)
    grids = np.meshgrid(*([f] * dim), indexing="ij")
    return np.stack(grids, axis=-1)


def _star_continuum_symbol(spec, kabs):
    """Exact Fourier coefficients of the star kernel on the unit torus.

    symbol(k) = int_{t_low}^{t_high} e^{-d u} F[rho](e^{-u}|k|)(1 - e^{-xi u}) du,
    integrated on a fixed Gauss-Legendre grid in u (e^{-d u} < 1e-34 beyond
    40 units above t_low).
    """
    rho = _seed_for(spec)
    d = spec.dim
    kabs = np.asarray(kabs, dtype=float)
    uniq, inv = np.unique(kabs.ravel(), return_inverse=True)
    top = min(spec.t_high, spec.t_low + 40.0)
    u, w = gauss_legendre_panels(spec.t_low, top, 160, order=16)
    weight = w * np.exp(-d * u) * _damping(spec.xi, u)
    out = np.empty(uniq.shape)
    for start in range(0, uniq.size, 512):
        block = uniq[start:start + 512]
        q = np.multiply.outer(block, np.exp(-u))
        out[start:start + 512] = rho.fourier(q) @ weight
    return out[inv].reshape(kabs.shape)


def _star_kernel_row(spec, n):
    """Kernel C(d(x, 0)) on the n-point grid of the unit torus (finite t_high)."""
    rho = _seed_for(spec)
    d = spec.dim
    f = np.fft.fftfreq(n, 1.0 / n) / n  # coordinates in (-1/2, 1/2]
    grids = np.meshgrid(*([f] * d), indexing="ij")
    dist = np.sqrt(sum(g * g for g in grids))
    uniq, inv = np.unique(dist.ravel(), return_inverse=True)
    vals = np.zeros(uniq.shape)
    x, w = np.polynomial.legendre.leggauss(16)
    panels = 24
    for i, r in enumerate(uniq):
        if r == 0.0:
            vals[i] = kernel_at_zero(spec)
            continue
        hi = _u_max(spec, r, rho.support_radius)
        if hi <= spec.t_low:
            continue
        edges = np.linspace(spec.t_low, hi, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        uu = (mid[:, None] + half[:, None] * x).ravel()
        ww = (half[:, None] * w).ravel()
        vals[i] = np.sum(rho(np.exp(uu) * r) * _damping(spec.xi, uu) * ww)
    return vals[inv].reshape(dist.shape)


@lru_cache(maxsize=64)
def symbol_grid(spec, n):
    """Symbol on the full n-point lattice in FFT order (read-only array)."""
    _check_n(n)
    if spec.kind == STAR and not math.isinf(spec.t_high):
        row = _star_kernel_row(spec, n)
        table = np.real(sfft.fftn(row)) / n ** spec.dim
        table = _clip_negative(table, n, spec.dim)
    else:
        table = spec.symbol(lattice(n, spec.dim))
        if np.any(table < 0):
            table = _clip_negative(table, n, spec.dim)
    table = np.ascontiguousarray(table, dtype=float)
    table.setflags(write=False)
    return table


def _clip_negative(table, n, dim):
    scale = max(float(np.max(table)), 0.0)
    worst = int(np.argmin(table))
    if table.flat[worst] < -NEG_TOL * max(scale, 1.0):
        mode = tuple(int(v) for v in lattice(n, dim).reshape(-1, dim)[worst])
        raise PositivityViolation(
            f"symbol negative at k={mode}: {table.flat[worst]:.3e}",
            mode=mode, value=float(table.flat[worst]),
        )
    return np.maximum(table, 0.0)


def half_symbol(spec, n):
    """Symbol restricted to the rfft half-lattice."""
    return symbol_grid(spec, n)[..., : n // 2 + 1]


@lru_cache(maxsize=16)
def half_layout(n, dim):
    """Number of independent real coordinates carried by each rfft entry.

    2 for a generic complex mode, 1 for self-conjugate modes (every index
    0 or n/2), 0 for entries that mirror another entry of the half-lattice.
    """
    m = n // 2 + 1
    if dim == 1:
        mult = np.full(m, 2, dtype=np.int8)
        mult[0] = mult[n // 2] = 1
    else:
        mult = np.full((n, m), 2, dtype=np.int8)
        for c in (0, n // 2):
            mult[n // 2 + 1:, c] = 0
            mult[0, c] = mult[n // 2, c] = 1
    mult.setflags(write=False)
    return mult


def draw_coefficients(rng, n, dim, batch=None):
    """Unit-variance Hermitian coefficients on the half-lattice.

    Returns ``(a, z2)``: the complex half-lattice array and the sum of squares
    of the real coordinates behind each entry (zero for mirrored entries).
    Leading axis is the batch axis when ``batch`` is given.
    """
    mult = half_layout(n, dim)
    shape = mult.shape if batch is None else (batch,) + mult.shape
    g = rng.standard_normal((2,) + shape)
    re, im = g[0], g[1]
    a = (re + 1j * im) * (1.0 / math.sqrt(2.0))
    z2 = re * re + im * im
    single = mult == 1
    a[..., single] = re[..., single]
    z2[..., single] = re[..., single] ** 2
    if dim == 2:
        h = n // 2
        for c in (0, h):
            a[..., h + 1:, c] = np.conj(a[..., 1:h, c][..., ::-1])
            z2[..., h + 1:, c] = 0.0
    return a, z2


def synthesize(amplitude, a, n, dim):
    """Real field from half-lattice coefficients ``a`` scaled by ``amplitude``."""
    axes = tuple(range(-dim, 0))
    return sfft.irfftn(amplitude * a, s=(n,) * dim, axes=axes) * float(n ** dim)


def hermitian_extend(half, n, dim):
    """Full-lattice coefficient array from an rfft half-lattice array."""
    if dim == 1:
        full = np.empty(half.shape[:-1] + (n,), dtype=complex)
        full[..., : n // 2 + 1] = half
        full[..., n // 2 + 1:] = np.conj(half[..., 1: n // 2][..., ::-1])
        return full
    full = np.empty(half.shape[:-2] + (n, n), dtype=complex)
    full[..., : n // 2 + 1] = half
    cols = np.arange(n // 2 + 1, n)
    rows = (-np.arange(n)) % n
    full[..., cols] = np.conj(half[..., rows[:, None], (n - cols)[None, :]])
    return full


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed, None
    return philox(seed), int(seed)


def sample_field(spec, n, seed):
    """One realization on the n^d grid; deterministic in (spec, n, seed)."""
    _check_n(n)
    rng, seed_id = _as_rng(seed)
    a, _ = draw_coefficients(rng, n, spec.dim)
    values = synthesize(np.sqrt(half_symbol(spec, n)), a, n, spec.dim)
    return GridField(spec.dim, spec.side_length, n, values, spec.spec_id, seed_id)


def sample_values(spec, n, rngs, ratio=None):
    """Batch synthesis: one row per generator in ``rngs``.

    With ``ratio`` (half-lattice array of standard-deviation ratios) the
    coefficients are scaled mode by mode and the squared coordinates are
    returned for likelihood-ratio bookkeeping.
    """
    _check_n(n)
    pieces = [draw_coefficients(rng, n, spec.dim) for rng in rngs]
    a = np.stack([p[0] for p in pieces])
    amp = np.sqrt(half_symbol(spec, n))
    if ratio is not None:
        amp = amp * ratio
    values = synthesize(amp, a, n, spec.dim)
    if ratio is None:
        return values
    return values, np.stack([p[1] for p in pieces])


def full_mask(n, dim):
    return np.ones((n,) * dim, dtype=bool)


def remove_mean(field_, mask=None):
    """Subtract the mask average; idempotent on its own output."""
    values = field_.values
    if mask is None:
        mask = full_mask(field_.n, field_.dim)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != values.shape:
        raise InvalidArgument("mask shape does not match the field")
    count = int(mask.sum())
    if count == 0:
        raise InvalidArgument("mask selects no cells")
    if field_.demean_mask is not None and np.array_equal(field_.demean_mask, mask):
        return field_
    mean = math.fsum(values[mask].tolist()) / count
    return GridField(field_.dim, field_.side_length, field_.n, values - mean,
                     field_.spec_id, field_.seed, demean_mask=mask.copy())


def remove_mean_batch(values, mask, dim):
    """Vectorized mask-average removal over the leading batch axis."""
    axes = tuple(range(-dim, 0))
    m = mask.astype(float)
    means = np.sum(values * m, axis=axes, keepdims=True) / m.sum()
    return values - means


def partial_variance(spec, k_max, n=None):
    """sum_{0 < |k| <= k_max} symbol(k), compensated summation."""
    if k_max < 0:
        raise InvalidArgument("k_max must be nonnegative")
    if k_max == 0:
        return 0.0
    m = int(math.floor(k_max))
    ks = np.arange(-m, m + 1)
    K = np.stack(np.meshgrid(*([ks] * spec.dim), indexing="ij"), axis=-1)
    k2 = np.sum(K.astype(float) ** 2, axis=-1)
    sel = (k2 > 0) & (k2 <= float(k_max) ** 2)
    if spec.kind == STAR and not math.isinf(spec.t_high):
        grid = n or spec.grid_n
        vals = symbol_grid(spec, grid)[tuple(np.mod(K[sel][:, i], grid) for i in range(spec.dim))]
    else:
        vals = spec.symbol(K[sel])
    return math.fsum(vals.tolist())


def grid_variance(spec, n):
    """Pointwise variance of the synthesized field: the truncated symbol sum."""
    return math.fsum(symbol_grid(spec, n).ravel().tolist())


def check_seed_positivity(rho: SeedCovariance, n):
    """Min and max of the DFT of the periodized seed profile on an n-grid."""
    f = np.fft.fftfreq(n, 1.0 / n) / n
    grids = np.meshgrid(*([f] * rho.dim), indexing="ij")
    dist = np.sqrt(sum(g * g for g in grids))
    spectrum = np.real(sfft.fftn(rho(dist))) / n ** rho.dim
    return float(spectrum.min()), float(spectrum.max())
