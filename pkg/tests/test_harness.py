import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmctorus.errors import PositivityViolation
from gmctorus.harness import cli, jobs
from gmctorus.harness.accumulator import (
    McAccumulator,
    PlainAccumulator,
    accumulator_from_dict,
    checkpoint_roundtrip,
)
from gmctorus.harness.config import ConfigError, load, parse_config_text, resolve
from gmctorus.harness.runner import run_samples, segments
from gmctorus.harness.seeds import SeedPlan, mix64

log_weights = st.lists(st.floats(-700, 700) | st.just(-math.inf), min_size=0, max_size=30)


def _acc(lws, edges=None):
    return McAccumulator(edges).extend_log(lws)


def _close(a, b, rel=1e-12):
    for x, y in zip(a.fields(), b.fields()):
        if isinstance(x, tuple) or x is None or isinstance(x, int):
            assert x == y
        elif math.isinf(x) or math.isinf(y):
            assert x == y
        else:
            assert x == pytest.approx(y, rel=rel, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(a=log_weights, b=log_weights, c=log_weights)
def test_merge_associative(a, b, c):
    edges = [-10.0, 0.0, 10.0]
    A, B, C = _acc(a, edges), _acc(b, edges), _acc(c, edges)
    _close(A.merge(B.merge(C)), A.merge(B).merge(C))


@settings(max_examples=60, deadline=None)
@given(a=log_weights, b=log_weights)
def test_merge_commutative(a, b):
    A, B = _acc(a), _acc(b)
    _close(A.merge(B), B.merge(A))


@settings(max_examples=40, deadline=None)
@given(a=log_weights)
def test_merge_with_empty_is_exact(a):
    A = _acc(a)
    assert A.merge(McAccumulator()).fields() == A.fields()
    assert McAccumulator().merge(A).fields() == A.fields()


@settings(max_examples=40, deadline=None)
@given(a=st.lists(st.floats(-1e6, 1e6), max_size=30), b=st.lists(st.floats(-1e6, 1e6), max_size=30))
def test_plain_merge_laws(a, b):
    A, B = PlainAccumulator().extend(a), PlainAccumulator().extend(b)
    assert A.merge(PlainAccumulator()).fields() == A.fields()
    assert A.merge(B).fields() == B.merge(A).fields()


def test_log_accumulator_matches_direct_mean():
    w = np.random.default_rng(0).lognormal(0, 1.5, 1000)
    a = McAccumulator().extend_log(np.log(w))
    assert a.mean() == pytest.approx(w.mean(), rel=1e-12)
    assert a.se() == pytest.approx(w.std() / math.sqrt(w.size), rel=1e-10)
    assert a.ess() == pytest.approx(w.sum() ** 2 / (w * w).sum(), rel=1e-12)


def test_log_accumulator_survives_huge_offsets():
    a = McAccumulator().extend_log([-5000.0, -5001.0, -math.inf])
    assert a.count == 3
    assert a.log_mean() == pytest.approx(-5000.0 + math.log((1 + math.exp(-1)) / 3), rel=1e-15)
    assert McAccumulator().extend_log([-math.inf] * 4).mean() == 0.0


def test_accumulator_rejects_bad_values():
    with pytest.raises(ArithmeticError):
        McAccumulator().push_log(float("nan"))
    with pytest.raises(ArithmeticError):
        McAccumulator().push(-1.0)
    with pytest.raises(ArithmeticError):
        PlainAccumulator().push(math.inf)


def test_histogram_counts():
    a = McAccumulator([0.0, 1.0]).extend_log([-1.0, 0.5, 0.5, 2.0, -math.inf])
    assert a.hist == [1, 2, 1]


def test_checkpoint_roundtrip_empty(tmp_path):
    a = checkpoint_roundtrip(McAccumulator(), tmp_path / "a.json")
    assert a.count == 0 and a.log_mean() == -math.inf
    p = checkpoint_roundtrip(PlainAccumulator(), tmp_path / "p.json")
    assert p.fields() == (0, 0.0, 0.0)


def test_checkpoint_roundtrip_many(tmp_path):
    lw = np.random.default_rng(1).normal(0, 3, 100_000)
    a = McAccumulator([-1.0, 0.0, 1.0]).extend_log(lw)
    b = checkpoint_roundtrip(a, tmp_path / "a.json")
    assert b.fields() == a.fields()
    assert b.mean() == a.mean() and b.se() == a.se()
    assert accumulator_from_dict(a.to_dict()).fields() == a.fields()


# -- config ------------------------------------------------------------------


def test_config_file_and_overrides(tmp_path):
    f = tmp_path / "c.txt"
    f.write_text("# comment\nsamples = 50\ngammas = 0.5, 1.0\nn = 16  # grid\n")
    cfg = load("gmc", str(f), ["--samples", "70", "--master-seed=9"])
    assert cfg.samples == 70 and cfg.n == 16 and cfg.gammas == [0.5, 1.0] and cfg.master_seed == 9
    assert cfg.echo()["xi"] == "inf"


def test_unknown_key_names_the_key():
    with pytest.raises(ConfigError) as exc:
        resolve("gmc", {"gamma_list": "1"})
    assert exc.value.key == "gamma_list"


def test_bad_values_rejected():
    for raw in ({"n": "48"}, {"workers": "0"}, {"samples": "x"}, {"convention": "other"}):
        with pytest.raises(ConfigError) as exc:
            resolve("gmc", raw)
        assert exc.value.key == next(iter(raw))
    with pytest.raises(ConfigError):
        parse_config_text("no equals sign")


def test_cli_unknown_key_exit_2(tmp_path, capsys):
    code = cli.main(["gmc", "--out", str(tmp_path), "--wat", "1"])
    assert code == 2
    assert "wat" in capsys.readouterr().err


def test_cli_invalid_argument_exit_2(tmp_path):
    assert cli.main(["shg", "--out", str(tmp_path), "--gamma", "2.5", "--samples", "4"]) == 2


def test_cli_corrupt_checkpoint_exit_3(tmp_path):
    ck = tmp_path / "ck.json"
    ck.write_text("{not json")
    code = cli.main(["field", "--out", str(tmp_path), "--samples", "4", "--n", "8",
                     "--checkpoint_path", str(ck)])
    assert code == 3


def test_cli_positivity_violation_exit_3_reports_mode(tmp_path, capsys, monkeypatch):
    def boom(cfg):
        raise PositivityViolation("negative symbol", mode=(3, 1), value=-1.0)
    monkeypatch.setattr(cli, "make_job", boom)
    assert cli.main(["field", "--out", str(tmp_path), "--samples", "4"]) == 3
    assert "(3, 1)" in capsys.readouterr().err


# -- runner ------------------------------------------------------------------


def test_segments_align_to_blocks():
    assert segments(0, 600, 256) == [(0, 256), (256, 512), (512, 600)]
    assert segments(300, 520, 256) == [(300, 512), (512, 520)]
    assert segments(5, 5) == []


def _body(path):
    return [l for l in path.read_text().splitlines() if not l.startswith("#")]


@pytest.mark.parametrize("command", ["field", "gmc", "smalldev", "shg", "decomp"])
def test_cli_runs_and_writes_outputs(tmp_path, command):
    args = [command, "--out", str(tmp_path), "--samples", "40", "--n", "16"]
    if command == "smalldev":
        args += ["--pilot_samples", "50"]
    assert cli.main(args) == 0
    doc = json.loads((tmp_path / f"{command}_summary.json").read_text())
    assert doc["schema_version"] == 1 and doc["command"] == command
    assert doc["config"]["samples"] == 40 and doc["seeds"]["n_samples"] == 40
    assert "runtime_seconds" in doc
    samples = _body(tmp_path / f"{command}_samples.csv")
    assert len(samples) == 41
    assert (tmp_path / f"{command}_results.csv").read_text().startswith("# gmctorus")


def test_same_config_gives_identical_csv_bodies(tmp_path):
    args = ["gmc", "--samples", "300", "--n", "16", "--master_seed", "5"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("gmc_samples.csv", "gmc_results.csv"):
        assert _body(tmp_path / "a" / name) == _body(tmp_path / "b" / name)


def test_worker_count_does_not_change_estimates(tmp_path):
    base = ["shg", "--samples", "700", "--n", "16", "--master_seed", "3"]
    assert cli.main(base + ["--workers", "1", "--out", str(tmp_path / "w1")]) == 0
    assert cli.main(base + ["--workers", "8", "--out", str(tmp_path / "w8")]) == 0
    a = json.loads((tmp_path / "w1" / "shg_summary.json").read_text())["estimates"]
    b = json.loads((tmp_path / "w8" / "shg_summary.json").read_text())["estimates"]
    for k in ("R4", "R8", "R16"):
        for field in a[k]:
            assert a[k][field] == pytest.approx(b[k][field], rel=1e-12)
    assert _body(tmp_path / "w1" / "shg_samples.csv") == _body(tmp_path / "w8" / "shg_samples.csv")


def test_resume_matches_single_run(tmp_path):
    cfg = resolve("gmc", {"samples": "1000", "n": "16", "master_seed": "7", "gammas": "1.0"})
    single = run_samples(jobs.make_job(cfg), 1000)
    ck = str(tmp_path / "ck.json")
    job = jobs.make_job(cfg)
    first = run_samples(job, 1000, checkpoint_path=ck, fingerprint=cfg.fingerprint(), stop_after=500)
    assert first.next_index == 500
    resumed = run_samples(jobs.make_job(cfg), 1000, workers=3, checkpoint_path=ck,
                          fingerprint=cfg.fingerprint())
    a, b = single.totals(), resumed.totals()
    for k in a:
        assert a[k].fields() == b[k].fields()
    assert single.rows == resumed.rows


def test_resume_rejects_other_config(tmp_path):
    ck = str(tmp_path / "ck.json")
    cfg = resolve("field", {"samples": "10", "n": "8"})
    run_samples(jobs.make_job(cfg), 10, checkpoint_path=ck, fingerprint=cfg.fingerprint())
    other = resolve("field", {"samples": "10", "n": "16"})
    with pytest.raises(ConfigError):
        run_samples(jobs.make_job(other), 10, checkpoint_path=ck, fingerprint=other.fingerprint())


def test_seed_plan_replays_single_sample():
    plan = SeedPlan(123)
    a = plan.rng(700).standard_normal(4)
    b = SeedPlan(123).rng(700).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, plan.rng(701).standard_normal(4))
    assert mix64(1, 0) != mix64(0, 1)
