"""Mergeable Monte Carlo accumulators with exact JSON checkpoints.

``McAccumulator`` keeps positive weights in the log domain as a running
maximum plus sums of exp(log w - max) and its square, so weights spanning
hundreds of orders of magnitude neither overflow nor lose the small ones.
``PlainAccumulator`` keeps signed values as plain sums. Both merge by field
addition (after rescaling to a common maximum), and ``merge(a, empty)``
returns ``a`` unchanged.
"""

import json
import math
import os

import numpy as np

NEG_INF = float("-inf")


def _hex(x):
    return float(x).hex()


def _unhex(s):
    return float.fromhex(s)


class McAccumulator:
    kind = "log"

    def __init__(self, hist_edges=None):
        self.count = 0
        self.log_max = NEG_INF
        self.s1 = 0.0  # sum exp(lw - log_max)
        self.s2 = 0.0  # sum exp(2 (lw - log_max))
        self.hist_edges = None if hist_edges is None else [float(e) for e in hist_edges]
        self.hist = None if hist_edges is None else [0] * (len(self.hist_edges) + 1)

    # -- pushing ------------------------------------------------------------

    def push_log(self, lw):
        """Add one weight given by its log; -inf is a zero weight that still counts."""
        lw = float(lw)
        if math.isnan(lw) or lw == math.inf:
            raise ArithmeticError(f"log weight {lw} is not usable")
        self.count += 1
        if self.hist is not None and lw > NEG_INF:
            self.hist[int(np.searchsorted(self.hist_edges, lw, side="right"))] += 1
        if lw == NEG_INF:
            return self
        if lw > self.log_max:
            scale = math.exp(self.log_max - lw) if self.log_max > NEG_INF else 0.0
            self.s1 = self.s1 * scale + 1.0
            self.s2 = self.s2 * scale * scale + 1.0
            self.log_max = lw
        else:
            e = math.exp(lw - self.log_max)
            self.s1 += e
            self.s2 += e * e
        return self

    def push(self, w):
        if w < 0:
            raise ArithmeticError(f"negative weight {w}")
        return self.push_log(math.log(w) if w > 0 else NEG_INF)

    def extend_log(self, lws):
        for lw in np.asarray(lws, dtype=float).ravel():
            self.push_log(lw)
        return self

    # -- merging ------------------------------------------------------------

    def copy(self):
        out = McAccumulator(self.hist_edges)
        out.count, out.log_max, out.s1, out.s2 = self.count, self.log_max, self.s1, self.s2
        if self.hist is not None:
            out.hist = list(self.hist)
        return out

    def merge(self, other):
        if self.hist_edges != other.hist_edges:
            raise ValueError("histogram edges differ")
        if other.count == 0:
            return self.copy()
        if self.count == 0:
            return other.copy()
        out = McAccumulator(self.hist_edges)
        out.count = self.count + other.count
        top = max(self.log_max, other.log_max)
        if top == NEG_INF:
            out.log_max = NEG_INF
        else:
            a = math.exp(self.log_max - top) if self.log_max > NEG_INF else 0.0
            b = math.exp(other.log_max - top) if other.log_max > NEG_INF else 0.0
            out.log_max = top
            out.s1 = self.s1 * a + other.s1 * b
            out.s2 = self.s2 * a * a + other.s2 * b * b
        if self.hist is not None:
            out.hist = [x + y for x, y in zip(self.hist, other.hist)]
        return out

    # -- estimates ----------------------------------------------------------

    def log_mean(self):
        if self.count == 0 or self.log_max == NEG_INF:
            return NEG_INF
        return self.log_max + math.log(self.s1 / self.count)

    def mean(self):
        return math.exp(self.log_mean())

    def se(self):
        """Standard error of the mean weight."""
        if self.count == 0 or self.log_max == NEG_INF:
            return 0.0
        m1 = self.s1 / self.count
        m2 = self.s2 / self.count
        return math.exp(self.log_max) * math.sqrt(max(m2 - m1 * m1, 0.0) / self.count)

    def se_log(self):
        """Delta-method standard error of log_mean."""
        if self.count == 0 or self.log_max == NEG_INF:
            return 0.0
        m1 = self.s1 / self.count
        m2 = self.s2 / self.count
        return math.sqrt(max(m2 - m1 * m1, 0.0) / self.count) / m1

    def ess(self):
        return self.s1 * self.s1 / self.s2 if self.s2 > 0 else 0.0

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        d = {"kind": self.kind, "count": self.count, "log_max": _hex(self.log_max),
             "s1": _hex(self.s1), "s2": _hex(self.s2)}
        if self.hist is not None:
            d["hist_edges"] = [_hex(e) for e in self.hist_edges]
            d["hist"] = list(self.hist)
        return d

    @classmethod
    def from_dict(cls, d):
        edges = d.get("hist_edges")
        out = cls(None if edges is None else [_unhex(e) for e in edges])
        out.count = int(d["count"])
        out.log_max, out.s1, out.s2 = _unhex(d["log_max"]), _unhex(d["s1"]), _unhex(d["s2"])
        if edges is not None:
            out.hist = [int(h) for h in d["hist"]]
        return out

    def fields(self):
        return (self.count, self.log_max, self.s1, self.s2, None if self.hist is None else tuple(self.hist))


class PlainAccumulator:
    """Count, sum and sum of squares of signed values."""

    kind = "plain"

    def __init__(self):
        self.count = 0
        self.total = 0.0
        self.total_sq = 0.0

    def push(self, x):
        x = float(x)
        if not math.isfinite(x):
            raise ArithmeticError(f"value {x} is not finite")
        self.count += 1
        self.total += x
        self.total_sq += x * x
        return self

    def extend(self, xs):
        for x in np.asarray(xs, dtype=float).ravel():
            self.push(x)
        return self

    def copy(self):
        out = PlainAccumulator()
        out.count, out.total, out.total_sq = self.count, self.total, self.total_sq
        return out

    def merge(self, other):
        if other.count == 0:
            return self.copy()
        if self.count == 0:
            return other.copy()
        out = PlainAccumulator()
        out.count = self.count + other.count
        out.total = self.total + other.total
        out.total_sq = self.total_sq + other.total_sq
        return out

    def mean(self):
        return self.total / self.count if self.count else 0.0

    def se(self):
        if self.count < 2:
            return 0.0
        m = self.mean()
        return math.sqrt(max(self.total_sq / self.count - m * m, 0.0) / self.count)

    def to_dict(self):
        return {"kind": self.kind, "count": self.count, "total": _hex(self.total),
                "total_sq": _hex(self.total_sq)}

    @classmethod
    def from_dict(cls, d):
        out = cls()
        out.count = int(d["count"])
        out.total, out.total_sq = _unhex(d["total"]), _unhex(d["total_sq"])
        return out

    def fields(self):
        return (self.count, self.total, self.total_sq)


def accumulator_from_dict(d):
    return {"log": McAccumulator, "plain": PlainAccumulator}[d["kind"]].from_dict(d)


def save_json(obj, path):
    """Write atomically: a crash mid-write leaves the previous checkpoint intact."""
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, sort_keys=True)
    os.replace(tmp, path)


def checkpoint_roundtrip(acc, path):
    save_json(acc.to_dict(), path)
    with open(path) as fh:
        return accumulator_from_dict(json.load(fh))
