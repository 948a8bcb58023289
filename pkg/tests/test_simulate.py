import dataclasses
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from meitest.errors import ConfigError
from meitest.simulate import (METHODS, ReplicateRecord, ScenarioConfig, gen_summary, load_grid, parse_grid,
                              report_rows, run_experiment, run_replicate, run_replicates, sample_effects,
                              summarize_replicates)
from meitest.stats_dist import RngStream


def test_config_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig(pi1=0.8, pi3=0.3)
    with pytest.raises(ConfigError):
        ScenarioConfig(q=1.5)
    with pytest.raises(ConfigError):
        ScenarioConfig(tau_x2=-1)
    with pytest.raises(ConfigError):
        ScenarioConfig(n_x=0)
    with pytest.raises(ConfigError):
        ScenarioConfig(replicates=0)
    c = ScenarioConfig()
    assert c.pi2 == pytest.approx(0.98)
    assert c.sigma_y == pytest.approx(1 / math.sqrt(100_000))


def test_null_alpha_exactly_zero():
    e = sample_effects(ScenarioConfig(), RngStream(1))
    assert np.all(e.alpha == 0.0)


def test_relevant_fraction():
    p = 200_000
    e = sample_effects(ScenarioConfig(p_snps=p), RngStream(2))
    frac = np.mean(e.gamma != 0)
    assert abs(frac - 0.02) <= 4 * math.sqrt(0.02 * 0.98 / p)


def test_component_frequencies():
    cfg = ScenarioConfig(p_snps=200_000, pi3=0.3, q=0.4, r=0.5)
    e = sample_effects(cfg, RngStream(3))
    for k, prob in enumerate(cfg.component_probs(), start=1):
        f = np.mean(e.component == k)
        assert abs(f - prob) <= 4 * math.sqrt(prob * (1 - prob) / cfg.p_snps) + 1e-12


def test_component_tags_consistent():
    cfg = ScenarioConfig(p_snps=50_000, pi3=0.2, q=0.3, r=0.5)
    e = sample_effects(cfg, RngStream(4))
    c = e.component
    assert np.all(e.gamma[(c == 3) | (c == 4)] == 0)
    assert np.all(e.alpha[(c == 2) | (c == 4)] == 0)
    assert np.all(e.gamma[(c != 3) & (c != 4)] != 0)


def test_correlated_component_correlation():
    cfg = ScenarioConfig(p_snps=400_000, pi1=0.0, pi3=1.0, r=0.0)
    e = sample_effects(cfg, RngStream(5))
    r = np.corrcoef(e.gamma, e.alpha)[0, 1]
    n = len(e)
    assert abs(r - 0.5) <= 4 * (1 - 0.25) / math.sqrt(n)


def test_directional_mean():
    cfg = ScenarioConfig(p_snps=100_000, pi1=0.0, pi3=1.0, r=1.0)
    e = sample_effects(cfg, RngStream(6))
    assert abs(e.alpha.mean() - 0.01) <= 4 * math.sqrt(2e-5 / len(e))


def test_gen_summary():
    cfg = ScenarioConfig(p_snps=200_000)
    e = sample_effects(cfg, RngStream(7))
    t = gen_summary(e, cfg, RngStream(8))
    assert t.sigma_x[0] == pytest.approx(0.002236, abs=1e-6)
    v = np.var(t.gamma_hat - e.gamma)
    assert abs(v * cfg.n_x - 1) < 0.02
    assert t.scheme.value == "major"
    exact = gen_summary(e, dataclasses.replace(cfg, sigma_x_override=0.0), RngStream(8))
    np.testing.assert_array_equal(exact.gamma_hat, e.gamma)


SMALL = ScenarioConfig(name="small", p_snps=4000, n_x=2_000_000, replicates=4)


def test_replicate_null_valid():
    rec = run_replicate(SMALL, 0, 1)
    assert set(rec.p) | set(rec.skipped) == set(METHODS)
    assert all(0.0 <= p <= 1.0 for p in rec.p.values())


def test_replicate_deterministic():
    a, b = run_replicate(SMALL, 3, 9), run_replicate(SMALL, 3, 9)
    assert a == b
    assert run_replicate(SMALL, 4, 9) != a


def test_skip_recorded():
    cfg = ScenarioConfig(p_snps=200, pi1=0.0, replicates=2)
    rec = run_replicate(cfg, 0, 0)
    assert rec.p == {} and set(rec.skipped) == set(METHODS)
    with pytest.warns(UserWarning):
        rep = summarize_replicates(cfg, [rec, run_replicate(cfg, 1, 0)])
        for w in rep.warnings:
            warnings.warn(w)
    assert rep.methods["ei"].n_valid == 0 and rep.methods["ei"].n_skipped == 2


def test_single_replicate_rates():
    rep = summarize_replicates(SMALL, [run_replicate(SMALL, 0, 5)])
    for m in rep.methods.values():
        if m.n_valid:
            assert m.rate in (0.0, 1.0) and m.se == 0.0


def _rec(i, p):
    return ReplicateRecord(index=i, p={m: p for m in METHODS}, n_sel_ei=i, n_sel_mei=2 * i, kappa_hat=float(i))


@given(st.lists(st.floats(0, 1), min_size=1, max_size=60), st.randoms(use_true_random=False))
def test_aggregation_permutation_invariant(ps, rnd):
    recs = [_rec(i, p) for i, p in enumerate(ps)]
    shuffled = recs[:]
    rnd.shuffle(shuffled)
    a = summarize_replicates(SMALL, recs).to_dict()
    b = summarize_replicates(SMALL, shuffled).to_dict()
    assert repr(a) == repr(b)
    for m in a["methods"].values():
        assert 0 <= m["rate"] <= 1
        assert m["se"] == pytest.approx(math.sqrt(m["rate"] * (1 - m["rate"]) / m["n_valid"]))


def test_parallel_replay_200_cases():
    # 200 randomized (seed, replicate) keys replayed serially and in worker processes
    keys = np.random.default_rng(2024).integers(0, 2**63, size=(200, 2))
    cfg = dataclasses.replace(SMALL, p_snps=1500)
    from concurrent.futures import ProcessPoolExecutor
    from meitest.simulate import _run_one
    jobs = [(cfg, int(i % 2**32), int(s)) for s, i in keys]
    serial = [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=2) as ex:
        parallel = list(ex.map(_run_one, jobs, chunksize=7))
    assert repr(serial) == repr(parallel)


def test_run_replicates_workers_agree():
    a = run_replicates(SMALL, 11, workers=1)
    b = run_replicates(SMALL, 11, workers=2)
    assert repr(a) == repr(b)


def test_grid_parsing(tmp_path):
    grid = parse_grid("[a]\np_snps = 1000\nmu_x = 0.005\nn_y = none\n[b]\npi3 = 0.01\nr = 1\n")
    assert [g.name for g in grid] == ["a", "b"]
    assert grid[0].p_snps == 1000 and grid[0].n_y is None and grid[1].r == 1.0
    with pytest.raises(ConfigError, match="unknown key"):
        parse_grid("[a]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        parse_grid("")
    with pytest.raises(ConfigError):
        parse_grid("[a]\nreplicates = 0\n")
    with pytest.raises(ConfigError):
        load_grid(tmp_path / "missing.ini")


def test_shipped_grids():
    from importlib import resources
    d = resources.files("meitest.grids")
    t1 = parse_grid(d.joinpath("table1.ini").read_text())
    assert len(t1) == 12
    assert {(c.mu_x, c.n_x, c.q) for c in t1} == {
        (m, n, q) for m in (0.0, 0.005) for n in (200_000, 500_000) for q in (0.0, 0.05, 0.15)}
    assert all(c.pi3 == 0 for c in t1)
    for name in ("figure2", "figure3", "figure4"):
        assert parse_grid(d.joinpath(f"{name}.ini").read_text())


def test_experiment_report():
    reps = run_experiment([SMALL, dataclasses.replace(SMALL, name="other")], master_seed=1, workers=1)
    rows = report_rows(reps)
    assert len(rows) == 8
    with pytest.raises(ConfigError):
        run_experiment([], 1)
