"""Split a log-correlated symbol into a rough high-frequency part and a remainder.

The rough part keeps the modes |k| > N with symbol

    (1 / 2 pi) (|k|^{-d} - |k|^{-d - 2 xi}),

and the remainder is whatever is left. A split is usable when the remainder
is a nonnegative symbol, so that both parts can be sampled independently
and their sum has the input law.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft as sfft

from .errors import InvalidArgument, PreconditionViolation
from .harness.seeds import SeedPlan, mix64, philox
from .torus_field import (
    FieldSpec,
    GridField,
    make_custom_spec,
    sample_values,
    symbol_grid,
)

DEFAULT_XI_GRID = (0.125, 0.25, 0.5, 0.75, 1.0)
DEFAULT_N_GRID = (2, 4, 8, 16, 32, 64)


@dataclass(frozen=True)
class DecompParams:
    xi: float
    N: int
    t: float = 0.0
    eps: float = 0.5

    def __post_init__(self):
        if not self.xi > 0:
            raise InvalidArgument(f"xi must be positive, got {self.xi}")
        if int(self.N) != self.N or self.N < 1:
            raise InvalidArgument(f"N must be an integer >= 1, got {self.N}")
        if self.t < 0:
            raise InvalidArgument(f"t must be nonnegative, got {self.t}")
        if not 0 < self.eps < 1:
            raise InvalidArgument(f"eps must lie in (0, 1), got {self.eps}")


@dataclass
class DecompResult:
    params: DecompParams
    rough_spec: FieldSpec
    smooth_spec: FieldSpec
    K_max: int
    min_remainder: float
    argmin_mode: tuple
    sobolev_proxy: dict = field(default_factory=dict)

    def smooth_symbol(self, k):
        return self.smooth_spec.symbol(k)


class NotFound(LookupError):
    """No grid point gives a nonnegative remainder; ``best`` is the least negative."""

    def __init__(self, message, best=None, best_min=None):
        super().__init__(message)
        self.best = best
        self.best_min = best_min


def rough_symbol(xi, N, dim, k):
    """Rough-part mode variance at integer wavevector(s) k of shape (..., dim)."""
    if not xi > 0:
        raise InvalidArgument(f"xi must be positive, got {xi}")
    k = np.asarray(k, dtype=float)
    if dim == 1 and (k.ndim == 0 or k.shape[-1] != 1):
        k = k[..., None]
    kabs = np.sqrt(np.sum(k * k, axis=-1))
    if N < 1 and np.any(kabs == 0):
        raise InvalidArgument("k = 0 needs N >= 1")
    out = np.zeros(kabs.shape)
    hi = kabs > N
    kk = kabs[hi]
    tail = 0.0 if math.isinf(xi) else kk ** (-dim - 2.0 * xi)
    out[hi] = (kk ** (-dim) - tail) / (2.0 * math.pi)
    return out


def rough_spec(xi, N, dim, R=1.0):
    return make_custom_spec(dim, lambda k: rough_symbol(xi, N, dim, k), R=R,
                            label=f"rough(xi={xi!r}, N={N})")


def _disk_modes(dim, K_max):
    """All k with 0 < |k| <= K_max, in lexicographic order."""
    ks = np.arange(-K_max, K_max + 1)
    K = np.stack(np.meshgrid(*([ks] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    k2 = np.sum(K * K, axis=1)
    return K[(k2 > 0) & (k2 <= K_max * K_max)]


def _remainder_spec(input_spec, xi, N):
    d = input_spec.dim

    def sym(k):
        return input_spec.symbol(k) - rough_symbol(xi, N, d, k)

    return make_custom_spec(d, sym, R=input_spec.side_length, label=f"remainder(xi={xi!r}, N={N})")


def decompose(input_spec, params, K_max=None):
    """Rough/remainder split with the remainder minimum and Sobolev proxy sums."""
    d = input_spec.dim
    K_max = int(K_max if K_max is not None else max(256, 4 * params.N))
    if K_max < 4 * params.N:
        raise InvalidArgument(f"K_max={K_max} must be at least 4N={4 * params.N}")
    modes = _disk_modes(d, K_max)
    base = input_spec.symbol(modes)
    rough = rough_symbol(params.xi, params.N, d, modes)
    rem = base - rough
    i = int(np.argmin(rem))
    k2 = np.sum(modes.astype(float) ** 2, axis=1)
    proxy = {}
    for K in (K_max // 2, K_max):
        sel = k2 <= K * K
        proxy[K] = {
            order: math.fsum(((1.0 + k2[sel]) ** (order / 2.0) * rem[sel]).tolist())
            for order in (float(d), d + params.xi)
        }
    return DecompResult(
        params=params,
        rough_spec=rough_spec(params.xi, params.N, d, input_spec.side_length),
        smooth_spec=_remainder_spec(input_spec, params.xi, params.N),
        K_max=K_max,
        min_remainder=float(rem[i]),
        argmin_mode=tuple(int(v) for v in modes[i]),
        sobolev_proxy=proxy,
    )


def search_table(input_spec, xi_grid=DEFAULT_XI_GRID, N_grid=DEFAULT_N_GRID, K_max=256):
    """min_remainder for every (N, xi) on the grid, N-major then xi, both ascending."""
    if len(xi_grid) == 0 or len(N_grid) == 0:
        raise InvalidArgument("xi_grid and N_grid must be nonempty")
    d = input_spec.dim
    modes = _disk_modes(d, K_max)
    base = input_spec.symbol(modes)
    rows = []
    for N in sorted(int(v) for v in N_grid):
        for xi in sorted(float(v) for v in xi_grid):
            rem = base - rough_symbol(xi, N, d, modes)
            i = int(np.argmin(rem))
            rows.append((N, xi, float(rem[i]), tuple(int(v) for v in modes[i])))
    return rows


def search_params(input_spec, xi_grid=DEFAULT_XI_GRID, N_grid=DEFAULT_N_GRID, K_max=256):
    """Smallest N, then smallest xi, whose remainder is nonnegative on 0 < |k| <= K_max."""
    rows = search_table(input_spec, xi_grid, N_grid, K_max)
    for N, xi, m, _ in rows:
        if m >= 0.0:
            return DecompParams(xi=xi, N=N)
    N, xi, m, mode = max(rows, key=lambda r: r[2])
    raise NotFound(
        f"no admissible (N, xi); best N={N} xi={xi} has remainder {m:.3e} at k={mode}",
        best=DecompParams(xi=xi, N=N), best_min=m,
    )


def _grid_wavevectors(n, dim):
    f = np.fft.fftfreq(n, 1.0 / n)
    return np.stack(np.meshgrid(*([f] * dim), indexing="ij"), axis=-1).reshape(-1, dim)


def nondegeneracy_delta(kernel_matrix, dim, points=None, zero_mean=False, sym_tol=1e-10):
    """Smallest eigenvalue of W^{-1/2} C_hat W^{-1/2} over the grid's Fourier basis.

    ``kernel_matrix[i, j]`` is C(z_i, z_j) for the M = n^d points of a uniform
    grid. Without ``points`` the rows follow the C-order flattening of the
    grid; otherwise ``points[i]`` holds the integer grid coordinates of row i.
    C_hat = F* C F / M^2 with F[i, k] = exp(2 pi i k.z_i), so a circulant
    kernel with symbol s maps to diag(s). W holds (1 + |k|^2)^{-d/2}.
    """
    C = np.asarray(kernel_matrix, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise InvalidArgument("kernel matrix must be square")
    M = C.shape[0]
    n = round(M ** (1.0 / dim))
    if n ** dim != M:
        raise InvalidArgument(f"matrix size {M} is not a {dim}-dimensional grid")
    scale = max(float(np.max(np.abs(C))), 1e-300)
    asym = float(np.max(np.abs(C - C.T)))
    if asym > sym_tol * scale:
        raise InvalidArgument(f"kernel matrix not symmetric (max asymmetry {asym:.3e})")
    k = _grid_wavevectors(n, dim)
    if points is None:
        shape = (n,) * dim
        A = C.reshape(shape + shape)
        row_axes = tuple(range(dim))
        col_axes = tuple(range(dim, 2 * dim))
        A = sfft.fftn(A, axes=row_axes)
        A = sfft.ifftn(A, axes=col_axes) * M
        C_hat = A.reshape(M, M) / (M * M)
    else:
        z = np.asarray(points, dtype=float).reshape(M, dim) / n
        F = np.exp(2j * np.pi * (z @ k.T))
        C_hat = (F.conj().T @ C @ F) / (M * M)
    C_hat = 0.5 * (C_hat + C_hat.conj().T)
    w = (1.0 + np.sum(k * k, axis=1)) ** (-dim / 2.0)
    keep = np.ones(M, dtype=bool)
    if zero_mean:
        keep &= np.any(k != 0, axis=1)
    s = 1.0 / np.sqrt(w[keep])
    A = s[:, None] * C_hat[np.ix_(keep, keep)] * s[None, :]
    return float(np.linalg.eigvalsh(A)[0])


def circulant_matrix(spec, n):
    """Dense C(z_i, z_j) on the n^d grid, from the grid symbol (for small n)."""
    table = symbol_grid(spec, n)
    row = np.real(sfft.ifftn(table)) * table.size
    d = spec.dim
    idx = np.stack(np.meshgrid(*([np.arange(n)] * d), indexing="ij"), axis=-1).reshape(-1, d)
    diff = (idx[:, None, :] - idx[None, :, :]) % n
    return row[tuple(diff[..., i] for i in range(d))]


def _check_grid_remainder(result, n):
    if result.min_remainder < 0:
        raise PreconditionViolation(
            f"remainder negative ({result.min_remainder:.3e}) at k={result.argmin_mode}"
        )
    return symbol_grid(result.smooth_spec, n)  # also covers grid modes beyond K_max


def sample_decomposed(input_spec, params, n, seed, K_max=None):
    """Independent rough and remainder fields whose sum has the input law."""
    result = decompose(input_spec, params, K_max)
    _check_grid_remainder(result, n)
    rough_rng = philox(mix64(seed, 1))
    smooth_rng = philox(mix64(seed, 2))
    rough = sample_values(result.rough_spec, n, [rough_rng])[0]
    smooth = sample_values(result.smooth_spec, n, [smooth_rng])[0]
    R = input_spec.side_length
    return (
        GridField(input_spec.dim, R, n, rough, result.rough_spec.spec_id, int(seed)),
        GridField(input_spec.dim, R, n, smooth, result.smooth_spec.spec_id, int(seed)),
    )


def sample_decomposed_batch(input_spec, params, n, plan: SeedPlan, indices, K_max=None):
    """Batch form: rough from ``plan`` and remainder from an independent child plan."""
    result = decompose(input_spec, params, K_max)
    _check_grid_remainder(result, n)
    child = plan.child(1)
    rough = sample_values(result.rough_spec, n, [plan.rng(i) for i in indices])
    smooth = sample_values(result.smooth_spec, n, [child.rng(i) for i in indices])
    return rough, smooth
