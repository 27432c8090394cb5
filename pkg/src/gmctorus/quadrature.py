"""Small numerical integration and interpolation helpers."""

import math

import numpy as np


def adaptive_simpson(f, a, b, tol=1e-10, max_depth=60):
    """Adaptive composite Simpson with Richardson correction.

    ``f`` is a scalar function. ``tol`` is an absolute tolerance on the
    whole interval; each accepted panel gets a share proportional to its
    width. Uses an explicit stack so deep refinement near kinks does not hit
    the recursion limit.
    """
    if b == a:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    total = 0.0
    comp = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, s, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = (mid - lo) * (flo + 4.0 * flm + fmid) / 6.0
        right = (hi - mid) * (fmid + 4.0 * frm + fhi) / 6.0
        delta = left + right - s
        if depth >= max_depth or abs(delta) <= 15.0 * eps:
            # Kahan-compensated accumulation of accepted panels
            y = left + right + delta / 15.0 - comp
            t = total + y
            comp = (t - total) - y
            total = t
        else:
            stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth + 1))
            stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps, depth + 1))
    return sign * total


def gauss_legendre_panels(a, b, panels, order=16):
    """Nodes and weights of a composite Gauss-Legendre rule on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


class ChebyshevTable:
    """Piecewise Chebyshev interpolant of a smooth function on [a, b].

    ``f`` must accept a numpy array. Outside [a, b] the table returns
    ``fill``.
    """

    def __init__(self, f, a, b, panels=64, degree=24, fill=0.0):
        self.a, self.b = float(a), float(b)
        self.panels = int(panels)
        self.degree = int(degree)
        self.fill = fill
        k = np.arange(degree + 1)
        # Chebyshev points of the first kind on [-1, 1]
        t = np.cos(np.pi * (k + 0.5) / (degree + 1))
        self.width = (self.b - self.a) / self.panels
        lo = self.a + self.width * np.arange(self.panels)
        x = lo[:, None] + 0.5 * self.width * (t[None, :] + 1.0)
        vals = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
        # discrete cosine transform to Chebyshev coefficients
        T = np.cos(np.outer(k, np.arccos(t)))
        coeffs = (2.0 / (degree + 1)) * vals @ T.T
        coeffs[:, 0] *= 0.5
        self.coeffs = coeffs

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.fill, dtype=float)
        inside = (x >= self.a) & (x <= self.b)
        xi = x[inside]
        idx = np.minimum(((xi - self.a) / self.width).astype(np.int64), self.panels - 1)
        s = 2.0 * (xi - self.a - idx * self.width) / self.width - 1.0
        c = self.coeffs[idx]
        b1 = np.zeros_like(s)
        b2 = np.zeros_like(s)
        for j in range(self.degree, 0, -1):
            b1, b2 = 2.0 * s * b1 - b2 + c[:, j], b1
        out[inside] = s * b1 - b2 + c[:, 0]
        return out


def kahan_sum(values):
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())
