import csv
import json

import numpy as np
import pytest

from semf import harness
from semf.engine import RESIDUAL_MODELS
from semf.errors import ConfigError, NumericError
from semf.harness import (RESULT_COLUMNS, RunConfig, grid_configs, load_config, parse_config_text, run_experiment,
                          sweep)
from semf.metrics import select_best_config

QUICK = "n = 200\nfamily = ridge\nmax_steps = 3\nR = 5\nR_infer = 30\nseeds = 0, 10\n"
SWEEP_GRID = {"R": (5,), "m_k": (1, 5), "sigma": (0.1, 1.0, RESIDUAL_MODELS), "patience": (5,), "R_infer": (30,)}


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parse_config_types_and_defaults():
    cfg = parse_config_text("""
        # comment
        signal = quadratic_periodic
        noise = gumbel
        n = 300   # trailing comment
        family = boosted
        sigma = 0.1
        m_k = 5
        alpha = 0.1
        seeds = 1,2,3
        learner.n_trees = 20
        learner.learning_rate = 0.1
    """)
    assert cfg.sim.signal == "quadratic_periodic" and cfg.sim.noise == "gumbel" and cfg.sim.n == 300
    assert cfg.semf.sigma == 0.1 and cfg.semf.m_k == 5
    assert cfg.alpha == 0.1 and cfg.seeds == (1, 2, 3)
    assert dict(cfg.learner_params) == {"n_trees": 20, "learning_rate": 0.1}
    d = RunConfig()
    assert d.seeds == (0, 10, 20, 30, 40) and d.alpha == 0.05
    assert parse_config_text("sigma = train_residual_models").semf.sigma == RESIDUAL_MODELS


@pytest.mark.parametrize("text, match", [
    ("colour = red", "unknown config key"),
    ("n = ten", "bad value"),
    ("alpha = 1.5", "alpha"),
    ("seeds = 1,1", "distinct"),
    ("seeds = ", "non-empty"),
    ("family = svm", "family"),
    ("just words", "key = value"),
])
def test_parse_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config_text(text)


def test_load_config_file_and_overrides(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("n = 120\nalpha = 0.2\n")
    cfg = load_config(str(p), {"alpha": "0.1"})
    assert cfg.sim.n == 120 and cfg.alpha == 0.1
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "none.cfg"))


def test_config_hash_ignores_seeds_and_out():
    a = parse_config_text("seeds = 1\nout = a")
    assert a.config_hash() == parse_config_text("seeds = 2,3\nout = b").config_hash()
    assert a.config_hash() != parse_config_text("seeds = 1\nR = 25").config_hash()


def test_run_experiment_files_and_aggregates(tmp_path):
    cfg = parse_config_text(QUICK)
    rec = run_experiment(cfg, str(tmp_path))
    assert len(rec.seeds) == 2 and not rec.partial
    rows = _read(tmp_path / "results.csv")
    with open(tmp_path / "results.csv") as fh:
        assert fh.readline().strip().split(",") == list(RESULT_COLUMNS)
    assert [(r["seed"], r["side"]) for r in rows] == [("0", "semf"), ("0", "baseline"), ("10", "semf"),
                                                      ("10", "baseline")]
    for r in rows:
        assert r["config_hash"] == cfg.config_hash() and r["family"] == "ridge"
        assert r["dataset"] == "cosine_normal_k2_n200"
        filled = all(r["d_" + k] != "" for k in ("cwr", "nmpiw", "crps", "pinball", "picp"))
        assert filled == (r["side"] == "semf")
    # aggregates recomputable from the stored rows
    agg = rec.aggregates()
    for side in ("semf", "baseline"):
        for metric in ("picp", "mpiw", "nmpiw", "cwr", "crps", "pinball"):
            vals = np.array([float(r[metric]) for r in rows if r["side"] == side])
            st = agg[(side, metric)]
            assert abs(st["mean"] - vals.mean()) < 1e-12
            assert st["min"] == vals.min() and st["max"] == vals.max()
            assert abs(st["std"] - vals.std(ddof=1)) < 1e-12
    d = np.array([float(r["d_cwr"]) for r in rows if r["side"] == "semf"])
    assert abs(agg[("delta", "cwr")]["mean"] - d.mean()) < 1e-12
    summary = _read(tmp_path / "summary.csv")
    assert {(s["side"], s["metric"]) for s in summary} == set(agg)
    meta = json.loads((tmp_path / f"run_{cfg.config_hash()}.json").read_text())
    assert meta["calibration_segment"] == "valid" and meta["failed_seeds"] == {}


def test_rerun_gives_identical_results_bytes(tmp_path):
    cfg = parse_config_text(QUICK)
    run_experiment(cfg, str(tmp_path / "a"))
    run_experiment(cfg, str(tmp_path / "b"))
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_failing_seed_is_isolated(tmp_path, monkeypatch):
    real = harness.run_seed

    def flaky(config, seed, raw=None):
        if seed == 10:
            raise NumericError("boom")
        return real(config, seed, raw)

    monkeypatch.setattr(harness, "run_seed", flaky)
    cfg = parse_config_text(QUICK.replace("seeds = 0, 10", "seeds = 0, 10, 20"))
    rec = run_experiment(cfg, str(tmp_path))
    assert rec.partial and [s.seed for s in rec.completed] == [0, 20]
    assert "boom" in rec.seeds[1].error
    rows = _read(tmp_path / "results.csv")
    assert [r["seed"] for r in rows] == ["0", "0", "20", "20"]
    assert all(len(r) == len(RESULT_COLUMNS) and None not in r for r in rows)
    meta = json.loads((tmp_path / f"run_{cfg.config_hash()}.json").read_text())
    assert "boom" in meta["failed_seeds"]["10"]


def test_pairing_shares_one_context(monkeypatch):
    seen = []
    real_semf, real_base = harness.run_semf, harness.run_baseline

    def spy_semf(config, ctx):
        seen.append(ctx)
        return real_semf(config, ctx)

    def spy_base(family, ctx, **kw):
        seen.append(ctx)
        return real_base(family, ctx, **kw)

    monkeypatch.setattr(harness, "run_semf", spy_semf)
    monkeypatch.setattr(harness, "run_baseline", spy_base)
    harness.run_seed(parse_config_text(QUICK), 0)
    assert len(seen) == 2 and seen[0] is seen[1]
    assert seen[0].calibration_segment == "valid"


def test_different_seeds_different_splits():
    cfg = parse_config_text(QUICK)
    a, b = harness.run_seed(cfg, 0), harness.run_seed(cfg, 10)
    assert a.split_digest != b.split_digest
    assert harness.run_seed(cfg, 0).split_digest == a.split_digest


def test_sweep_single_config_returned():
    cfg = parse_config_text("n = 400\nseeds = 0\nfamily = ridge\nmax_steps = 3\nsignal = quadratic_periodic\n"
                            "noise = uniform")
    grid = {"R": (5,), "m_k": (5,), "sigma": (0.1,), "patience": (5,), "R_infer": (30,)}
    best, _, cands = sweep(cfg, grid, budget=10, seed=0)
    assert len(cands) == 1
    assert {k: best[k] for k in grid} == {"R": 5, "m_k": 5, "sigma": 0.1, "patience": 5, "R_infer": 30}


def test_sweep_full_enumeration_and_gate(tmp_path):
    cfg = parse_config_text("n = 400\nseeds = 0\nfamily = ridge\nmax_steps = 3\nsignal = quadratic_periodic\n"
                            "noise = uniform")
    best, floor, cands = sweep(cfg, SWEEP_GRID, budget=100, seed=0, out_dir=str(tmp_path))
    assert len(cands) == len(grid_configs(SWEEP_GRID)) == 6
    assert {tuple(sorted((k, c[k]) for k in SWEEP_GRID)) for c in cands} == \
        {tuple(sorted(c.items())) for c in grid_configs(SWEEP_GRID)}
    # the winner passes the gate at the floor it was admitted under
    assert best["d_cwr"] > 0 and (best["d_picp"] >= 0 if floor == 0 else best["d_picp"] > floor)
    assert select_best_config(cands) == (best, floor)
    assert len(_read(tmp_path / "sweep.csv")) == 6


def test_sweep_budget_samples_without_replacement(monkeypatch):
    monkeypatch.setattr(harness, "select_best_config", lambda c: (c[0], 0.0))
    cfg = parse_config_text("n = 200\nseeds = 0\nfamily = ridge\nmax_steps = 2")
    _, _, a = sweep(cfg, SWEEP_GRID, budget=3, seed=1)
    _, _, b = sweep(cfg, SWEEP_GRID, budget=3, seed=1)
    keys = [tuple(c[k] for k in sorted(SWEEP_GRID)) for c in a]
    assert len(a) == 3 and len(set(keys)) == 3
    assert keys == [tuple(c[k] for k in sorted(SWEEP_GRID)) for c in b]


def test_sweep_empty_grid():
    with pytest.raises(ConfigError):
        sweep(parse_config_text("n = 200"), {"R": ()})
