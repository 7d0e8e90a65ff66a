import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from canonical_es.checkpoint import load_checkpoint
from canonical_es.experiment import runner as runner_mod
from canonical_es.experiment.cli import main
from canonical_es.experiment.config import Budget, ConfigError, RunConfig
from canonical_es.experiment.evaluation import EvalReport, eval_seed, evaluate_fitness
from canonical_es.experiment.plots import emit_plots, median_smooth
from canonical_es.experiment.report import (COMPARE_FIELDS, RESULT_FIELDS, ResultRow, compare_runs, format_table,
                                            ordered, read_results, read_trace, write_results, write_trace)
from canonical_es.experiment.runner import budget_hit, run_experiment
from canonical_es.experiment.stats import mann_whitney_u, midranks
from canonical_es.experiment.tasks import BenchmarkFitness
from canonical_es.training import TraceRow

from oracles import mann_whitney_oracle
from runs import cartpole_config, write_config

# ------------------------------------------------------------ Mann-Whitney


def test_mw_exact_matches_enumeration():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n, m = rng.integers(1, 8, size=2)
        # small integer support forces plenty of ties
        a = rng.integers(0, 6, size=n).tolist()
        b = rng.integers(0, 6, size=m).tolist()
        u_ref, p_ref = mann_whitney_oracle(a, b)
        res = mann_whitney_u(a, b)
        assert res.method == "exact"
        assert res.u == u_ref
        assert res.p_value == p_ref


def test_mw_one_third_exactly():
    r = mann_whitney_u([1, 2], [3, 4])
    assert r.p_value == 1 / 3
    assert (r.u, r.u_other) == (0.0, 4.0)


def test_mw_identical_samples():
    r = mann_whitney_u([5.0] * 10, [5.0] * 10)
    assert r.u == 50.0 and r.p_value == 1.0 and not r.significant
    r = mann_whitney_u([1, 2, 3], [1, 2, 3])
    assert r.u == 4.5 and r.p_value == 1.0


def test_mw_normal_matches_scipy():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = np.round(rng.normal(size=30), 1)
        b = np.round(rng.normal(0.3, size=25), 1)
        r = mann_whitney_u(a, b)
        ref = sps.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
        assert r.method == "normal"
        assert r.u == ref.statistic
        assert math.isclose(r.p_value, ref.pvalue, rel_tol=1e-9)


def test_mw_exact_matches_scipy_without_ties():
    rng = np.random.default_rng(4)
    for _ in range(20):
        a, b = rng.normal(size=6), rng.normal(size=8)
        ref = sps.mannwhitneyu(a, b, alternative="two-sided", method="exact")
        assert math.isclose(mann_whitney_u(a, b).p_value, ref.pvalue, rel_tol=1e-12)


def test_mw_disjoint_significant():
    r = mann_whitney_u(range(1, 31), range(100, 131))
    assert r.significant and 0 < r.p_value < 1e-9


def test_mw_errors():
    with pytest.raises(ValueError):
        mann_whitney_u([], [1.0])
    with pytest.raises(ValueError):
        mann_whitney_u([math.nan], [1.0])


def test_midranks():
    assert midranks([3, 1, 3, 2]).tolist() == [3.5, 1.0, 3.5, 2.0]


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=12), st.lists(st.integers(-5, 5), min_size=1, max_size=12))
def test_mw_bounds(a, b):
    r = mann_whitney_u(a, b)
    assert 0 <= r.u <= len(a) * len(b)
    assert r.u + r.u_other == len(a) * len(b)
    assert 0 < r.p_value <= 1
    flipped = mann_whitney_u(b, a)
    assert flipped.u == r.u_other
    assert math.isclose(flipped.p_value, r.p_value, rel_tol=1e-12)


# ----------------------------------------------------------------- config


def test_config_roundtrip(tmp_path):
    cfg = RunConfig(env="sphere", mu_grid=[5, 10], lam=40, budget_a=Budget(3, 100), seeds=[4, 5])
    again = RunConfig.from_dict(json.loads(cfg.to_json()))
    assert again == cfg
    p = tmp_path / "c.json"
    p.write_text(cfg.to_json())
    assert RunConfig.load(p) == cfg


@pytest.mark.parametrize("bad", [
    {"bogus": 1},
    {"episode": {"max_step": 3}},
    {"algorithm": "cma"},
    {"sigma": 0.0},
    {"algorithm": "openai", "lam": 7},
    {"mu": 900, "lam": 10},
    {"seeds": []},
    {"budget_a": {"iterations": -1}},
])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_config_unreadable(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.load(p)


def test_budget_hit_first_limit():
    b = Budget(10, frames=1000, wall_seconds=5.0)
    assert budget_hit(b, 3, 999, 1.0) is None
    assert budget_hit(b, 3, 1000, 1.0) == "frames"
    assert budget_hit(b, 3, 10, 5.0) == "wall"
    assert budget_hit(b, 10, 10, 0.0) == "iterations"
    assert budget_hit(Budget(10), 9, 10 ** 12, 1e9) is None


# ------------------------------------------------------------- evaluation


def test_eval_seed_distinct_and_stable():
    seeds = [eval_seed(7, k) for k in range(100)]
    assert len(set(seeds)) == 100
    assert seeds == [eval_seed(7, k) for k in range(100)]
    assert eval_seed(8, 0) != eval_seed(7, 0)


def test_evaluate_deterministic_fitness():
    theta = np.full(5, 0.5)
    rep = evaluate_fitness(BenchmarkFitness("sphere"), theta, 30, base_seed=11)
    assert rep.n_effective == 30 and rep.std == 0.0
    assert rep.mean == -1.25


def test_evaluate_failures_excluded():
    class Flaky:
        def __call__(self, theta, seed):
            if seed % 3 == 0:
                raise RuntimeError("boom")
            return float(seed % 7)

    rep = evaluate_fitness(Flaky(), np.zeros(2), 30, base_seed=1)
    bad = [k for k in range(30) if eval_seed(1, k) % 3 == 0]
    assert rep.failed == bad
    assert rep.n_effective == 30 - len(bad)
    assert math.isclose(rep.mean, float(np.mean(rep.scores)), rel_tol=1e-12)
    assert math.isclose(rep.std, float(np.std(rep.scores)), rel_tol=1e-12)


def test_evaluate_rejects_nonfinite_theta():
    with pytest.raises(ValueError):
        evaluate_fitness(BenchmarkFitness("sphere"), np.array([np.nan]), 3)


def test_report_roundtrip(tmp_path):
    rep = EvalReport.from_scores([1.0, 2.0, 4.0], base_seed=3, param_hash="ab")
    assert EvalReport.load(rep.save(tmp_path / "r.json")) == rep


# ---------------------------------------------------------------- reports


def test_compare_identical_no_winner():
    rep = EvalReport.from_scores(np.arange(30.0))
    row = compare_runs(rep, rep, "x", "y")
    assert tuple(row) == COMPARE_FIELDS
    assert row["winner"] == "" and not row["significant"]


def test_compare_names_winner():
    a = EvalReport.from_scores(range(1, 31))
    b = EvalReport.from_scores(range(100, 131))
    row = compare_runs(a, b, "canonical", "openai")
    assert row["significant"] and row["winner"] == "openai"


def test_results_csv(tmp_path):
    rows = [ResultRow("r", "canonical", "sphere", s, "A", float(m), 0.5, 30, 100, 1.5) for s, m in
            [(0, 1), (1, 3), (2, 3)]]
    p = write_results(tmp_path / "res.csv", rows)
    assert p.read_text().splitlines()[0] == ",".join(RESULT_FIELDS)
    assert read_results(p) == rows
    assert [r.seed for r in ordered(rows)] == [1, 2, 0]
    assert format_table(rows).splitlines()[1].split()[:2] == ["1", "1"]


def test_trace_roundtrip(tmp_path):
    rows = [TraceRow(0, 0, math.nan, math.nan, 0.1), TraceRow(1, 50, 0.30000000000000004, -1e-300, 2.5, 0.2)]
    back = read_trace(write_trace(tmp_path / "t.csv", rows))
    assert [r.as_tuple()[:2] for r in back] == [(0, 0), (1, 50)]
    assert back[1].best == 0.30000000000000004 and back[1].mean == -1e-300
    assert math.isnan(back[0].best)


# ------------------------------------------------------------------ plots


def test_median_smooth():
    v = [1.0, 5.0, 2.0, math.nan, 8.0]
    assert np.array_equal(median_smooth(v, 1), np.array(v), equal_nan=True)
    out = median_smooth(v, 3)
    assert out[:3].tolist() == [1.0, 3.0, 2.0]
    assert math.isnan(out[3]) and out[4] == 5.0
    with pytest.raises(ValueError):
        median_smooth(v, 0)


def test_plot_single_point(tmp_path):
    (tmp_path / "a").mkdir()
    p = write_trace(tmp_path / "a" / "trace.csv", [TraceRow(1, 10, 2.0, 1.0)])
    svg = emit_plots([p], tmp_path / "plot.svg")
    root = ET.parse(svg).getroot()
    assert root.tag.endswith("svg")


def test_plot_nothing(tmp_path):
    p = write_trace(tmp_path / "t.csv", [TraceRow(0, 0, math.nan, math.nan)])
    assert emit_plots([p], tmp_path / "plot.svg") is None
    assert not (tmp_path / "plot.svg").exists()


def test_plot_deterministic(tmp_path):
    p = write_trace(tmp_path / "t.csv", [TraceRow(i, 10 * i, float(i), float(i) / 2, float(i)) for i in range(6)])
    a = emit_plots([p], tmp_path / "a.svg", x="frames").read_bytes()
    b = emit_plots([p], tmp_path / "b.svg", x="frames").read_bytes()
    assert a == b


# ----------------------------------------------------------------- runner


def _trace_key(path):
    # repr makes NaN compare equal to NaN
    return [tuple(repr(v) for v in r.as_tuple()[:5]) for r in read_trace(path)]


def test_resume_after_crash(tmp_path, monkeypatch):
    full = run_experiment(RunConfig.from_dict(cartpole_config(tmp_path / "full")))
    cfg = RunConfig.from_dict(cartpole_config(tmp_path / "crash"))

    real = runner_mod._write_json
    calls = {"n": 0}

    def crashing(path, obj):
        if path.name == "progress.json":
            calls["n"] += 1
            if calls["n"] == 3:
                raise RuntimeError("simulated crash")
        real(path, obj)

    monkeypatch.setattr(runner_mod, "_write_json", crashing)
    with pytest.raises(RuntimeError):
        run_experiment(cfg)
    monkeypatch.setattr(runner_mod, "_write_json", real)
    assert not (tmp_path / "crash" / "cp" / "seed0" / "final.ckpt").exists()
    resumed = run_experiment(cfg, resume=True)

    a, b = full / "seed0", resumed / "seed0"
    assert _trace_key(b / "trace.csv") == _trace_key(a / "trace.csv")
    assert load_checkpoint(b / "final.ckpt").theta.tobytes() == load_checkpoint(a / "final.ckpt").theta.tobytes()
    assert json.loads((b / "eval_final.json").read_text())["scores"] == \
        json.loads((a / "eval_final.json").read_text())["scores"]


def test_manifest_reproducible(tmp_path):
    cfg = RunConfig.from_dict(cartpole_config(tmp_path, keep_all_checkpoints=True))
    first = json.loads((run_experiment(cfg) / "manifest.json").read_text())
    run_dir = run_experiment(cfg)
    second = json.loads((run_dir / "manifest.json").read_text())
    assert first == second
    assert sorted(p.name for p in (run_dir / "seed0").glob("iter*.ckpt")) == \
        [f"iter{i:06d}.ckpt" for i in range(6)]


def test_budget_a_trace_is_prefix(tmp_path):
    run_dir = run_experiment(RunConfig.from_dict(cartpole_config(tmp_path)))
    a = _trace_key(run_dir / "seed0" / "trace_budget_a.csv")
    b = _trace_key(run_dir / "seed0" / "trace.csv")
    assert len(a) == 3 and b[:len(a)] == a and len(b) == 6
    prog = json.loads((run_dir / "seed0" / "progress.json").read_text())
    assert prog["budget_a"]["reason"] == "iterations" and prog["budget_a"]["iteration"] == 2


def test_budget_a_after_b_ends(tmp_path):
    cfg = RunConfig.from_dict(cartpole_config(tmp_path, budget_a={"iterations": 50}))
    run_dir = run_experiment(cfg)
    prog = json.loads((run_dir / "seed0" / "progress.json").read_text())
    assert prog["budget_a"]["reason"] == "end"
    ck = run_dir / "seed0"
    assert load_checkpoint(ck / "budget_a.ckpt").theta.tobytes() == load_checkpoint(ck / "final.ckpt").theta.tobytes()


def test_mu_grid_units(tmp_path):
    run_dir = run_experiment(RunConfig.from_dict(cartpole_config(tmp_path, mu_grid=[1, 4],
                                                                 budget_b={"iterations": 2})))
    assert (run_dir / "seed0_mu1" / "eval_final.json").exists()
    assert (run_dir / "seed0_mu4" / "eval_final.json").exists()
    assert "mu=4" in (run_dir / "table.txt").read_text()


# -------------------------------------------------------------------- CLI


def test_cli_exit_codes(tmp_path, capsys):
    assert main([]) == 1
    assert main(["train"]) == 1
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 1
    bad = write_config(tmp_path / "bad.json", {"env": "cartpole", "lamda": 4})
    assert main(["train", "--config", str(bad)]) == 1
    assert "lamda" in capsys.readouterr().err
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"not a checkpoint")
    good = write_config(tmp_path / "config.json", cartpole_config(tmp_path))
    assert main(["evaluate", "--checkpoint", str(junk), "--config", str(good)]) == 2


def test_cli_train_evaluate_compare_plot(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", cartpole_config(tmp_path / "out", seeds=[0, 1]))
    assert main(["train", "--config", str(cfg)]) == 0
    run_dir = tmp_path / "out" / "cp"
    assert "budget B" in capsys.readouterr().out

    out = tmp_path / "ev.json"
    assert main(["evaluate", "--checkpoint", str(run_dir / "seed0" / "final.ckpt"), "--rollouts", "5",
                 "--out", str(out)]) == 0
    # same checkpoint, same protocol seed: identical scores to the in-run evaluation
    assert EvalReport.load(out).scores == EvalReport.load(run_dir / "seed0" / "eval_final.json").scores

    cmp_csv = tmp_path / "cmp.csv"
    assert main(["compare", "--a", str(run_dir), "--b", str(run_dir), "--out", str(cmp_csv)]) == 0
    lines = cmp_csv.read_text().splitlines()
    assert lines[0] == ",".join(COMPARE_FIELDS) and len(lines) == 3
    assert main(["compare", "--a", str(run_dir), "--b", str(out)]) == 1

    svg = tmp_path / "p.svg"
    assert main(["plot", "--trace", str(run_dir / "seed0" / "trace.csv"), str(run_dir / "seed1" / "trace.csv"),
                 "--out", str(svg)]) == 0
    ET.parse(svg)
