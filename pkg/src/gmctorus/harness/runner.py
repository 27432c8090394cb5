"""Deterministic chunked Monte Carlo runner with checkpoint and resume.

Samples are grouped into blocks aligned to absolute sample index (one block
per seed stream). Each block's accumulators are filled by pushing its
samples in index order, and completed blocks are folded left to right.
Workers only compute blocks; they never touch shared state. The result is
therefore the same for any worker count, and a run stopped at any sample
count and resumed gives the same accumulators as one uninterrupted run.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor

from .accumulator import accumulator_from_dict, save_json
from .config import ConfigError
from .seeds import STREAM_LEN

CHECKPOINT_VERSION = 1


class RunState:
    def __init__(self, folded, partial=None, next_index=0, rows=None):
        self.folded = folded
        self.partial = partial
        self.next_index = next_index
        self.rows = [] if rows is None else rows

    def totals(self):
        if self.partial is None:
            return {k: v.copy() for k, v in self.folded.items()}
        return {k: v.merge(self.partial[k]) for k, v in self.folded.items()}

    def to_dict(self, fingerprint):
        return {
            "version": CHECKPOINT_VERSION,
            "fingerprint": fingerprint,
            "next_index": self.next_index,
            "folded": {k: v.to_dict() for k, v in self.folded.items()},
            "partial": None if self.partial is None else {k: v.to_dict() for k, v in self.partial.items()},
            "rows": self.rows,
        }

    @classmethod
    def from_dict(cls, d):
        folded = {k: accumulator_from_dict(v) for k, v in d["folded"].items()}
        partial = d["partial"]
        if partial is not None:
            partial = {k: accumulator_from_dict(v) for k, v in partial.items()}
        return cls(folded, partial, int(d["next_index"]), list(d["rows"]))


def segments(start, stop, block=STREAM_LEN):
    """Split [start, stop) at multiples of ``block``."""
    out = []
    i = start
    while i < stop:
        end = min((i // block + 1) * block, stop)
        out.append((i, end))
        i = end
    return out


def load_state(job, path, fingerprint):
    if path is None or not os.path.exists(path):
        return RunState(job.accumulators())
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read checkpoint {path}: {exc}") from exc
    if d.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"checkpoint {path} has unsupported version", key="checkpoint_path")
    if d.get("fingerprint") != fingerprint:
        raise ConfigError(f"checkpoint {path} was written by a different config", key="checkpoint_path")
    return RunState.from_dict(d)


def run_samples(job, n_samples, workers=1, checkpoint_path=None, fingerprint=None, block=STREAM_LEN,
                wave=None, stop_after=None):
    """Advance the job to ``n_samples`` samples and return its RunState.

    ``stop_after`` ends the run early after that many samples in total (the
    state is checkpointed), which is how an interruption is simulated.
    """
    state = load_state(job, checkpoint_path, fingerprint)
    if state.next_index > n_samples:
        raise ConfigError(
            f"checkpoint already holds {state.next_index} samples, more than samples={n_samples}",
            key="samples",
        )
    target = n_samples if stop_after is None else min(stop_after, n_samples)
    segs = segments(state.next_index, target, block)
    wave = wave or max(1, 2 * workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for w in range(0, len(segs), wave):
            part = segs[w:w + wave]
            results = list(pool.map(lambda s: job.compute(range(*s)), part))
            for (lo, hi), (pushes, rows) in zip(part, results):
                _apply(job, state, lo, hi, pushes, rows, block)
            if checkpoint_path is not None:
                save_json(state.to_dict(fingerprint), checkpoint_path)
    if checkpoint_path is not None and not segs:
        save_json(state.to_dict(fingerprint), checkpoint_path)
    return state


def _apply(job, state, lo, hi, pushes, rows, block):
    accs = job.accumulators() if lo % block == 0 else state.partial
    for name, acc in accs.items():
        values = pushes[name]
        if acc.kind == "log":
            acc.extend_log(values)
        else:
            acc.extend(values)
    if hi % block == 0:
        state.folded = {k: v.merge(accs[k]) for k, v in state.folded.items()}
        state.partial = None
    else:
        state.partial = accs
    state.next_index = hi
    state.rows.extend(rows)
