import numpy as np
import pytest
from hypothesis import given, strategies as st

from canonical_es import CanonicalConfig, noise_table_create, run_canonical
from canonical_es.core import NoiseIndex, RngStream, noise_slice
from canonical_es.envs import sphere_eval
from canonical_es.es_canonical import generate_offspring, recombine, sample_indices
from canonical_es.shaping import recombination_weights
from canonical_es.training import ESState, ScoredOffspring, fitness_from_function

import oracles


def _scored(indices, scores):
    return [ScoredOffspring(i, float(s), 1, k) for k, (i, s) in enumerate(zip(indices, scores))]


def test_default_population_is_798(table):
    cfg = CanonicalConfig()
    assert (cfg.lam, cfg.mu) == (798, 50)
    assert len(sample_indices(cfg, table, 100, 0)) == 798


def test_config_validation():
    with pytest.raises(ValueError):
        CanonicalConfig(mu=0)
    with pytest.raises(ValueError):
        CanonicalConfig(lam=5, mu=6)
    with pytest.raises(ValueError):
        CanonicalConfig(sigma=-1.0)


def test_recombine_matches_scalar_oracle(table, rng):
    d, lam, mu, sigma = 13, 20, 6, 0.3
    theta = rng.normal(size=d).astype(np.float32)
    idx = [NoiseIndex(int(o)) for o in rng.integers(0, table.length - d, lam)]
    scores = rng.integers(0, 8, lam).astype(float)  # plenty of ties
    got = recombine(ESState(theta, sigma), _scored(idx, scores), recombination_weights(mu), table)
    eps = [noise_slice(table, i, d) for i in idx]
    ref = np.array(oracles.recombine_oracle(theta, sigma, eps, scores.tolist(), mu))
    assert got.dtype == np.float32
    assert np.allclose(got, ref.astype(np.float32), rtol=1e-6, atol=1e-7)


def test_mu_equals_lambda_equals_one_copies_offspring(table):
    theta = np.zeros(5, dtype=np.float32)
    idx = NoiseIndex(100)
    new = recombine(ESState(theta, 0.5), _scored([idx], [1.0]), recombination_weights(1), table)
    assert np.array_equal(new, (0.5 * noise_slice(table, idx, 5).astype(np.float64)).astype(np.float32))


def test_sigma_zero_is_fixed_point(table):
    theta = np.arange(6, dtype=np.float32)
    cfg = CanonicalConfig(sigma=0.0, lam=8, mu=3, max_iterations=3)
    res = run_canonical(cfg, fitness_from_function(sphere_eval), table, theta)
    assert np.array_equal(res.theta, theta)


def test_generate_offspring_candidates(table):
    state = ESState(np.ones(4, dtype=np.float32), 0.2)
    cfg = CanonicalConfig(lam=7, mu=2)
    offs = generate_offspring(state, cfg, table, RngStream(0, 1))
    assert len(offs) == 7
    for idx, cand in offs:
        assert np.array_equal(cand, 1.0 + 0.2 * noise_slice(table, idx, 4).astype(np.float64))


@given(st.lists(st.integers(-20, 20), min_size=10, max_size=10), st.sampled_from(["exp", "cube", "shift"]))
def test_update_monotone_invariance_bitwise(scores, kind):
    table = noise_table_create(1, 5000)
    idx = [NoiseIndex(37 * k) for k in range(10)]
    theta = np.linspace(-1, 1, 8).astype(np.float32)
    s = np.array(scores, dtype=float)
    f = {"exp": np.exp(s / 4.0), "cube": s ** 3, "shift": s + 1e9}[kind]
    w = recombination_weights(4)
    a = recombine(ESState(theta, 0.1), _scored(idx, s), w, table)
    b = recombine(ESState(theta, 0.1), _scored(idx, f), w, table)
    assert a.tobytes() == b.tobytes()


def test_run_is_deterministic(table):
    cfg = CanonicalConfig(sigma=0.1, lam=20, mu=5, seed=3, max_iterations=15)
    fit = fitness_from_function(sphere_eval)
    theta0 = np.full(10, 2.0, dtype=np.float32)
    a = run_canonical(cfg, fit, table, theta0)
    b = run_canonical(cfg, fit, table, theta0)
    assert a.theta.tobytes() == b.theta.tobytes()
    assert [r.as_tuple()[:4] for r in a.trace] == [r.as_tuple()[:4] for r in b.trace]
    assert len(a.trace) == 16 and a.state.iteration == 15


def test_resume_continues_identically(table):
    cfg = CanonicalConfig(sigma=0.1, lam=20, mu=5, seed=3, max_iterations=12)
    fit = fitness_from_function(sphere_eval)
    theta0 = np.full(10, 2.0, dtype=np.float32)
    full = run_canonical(cfg, fit, table, theta0)
    half = run_canonical(CanonicalConfig(sigma=0.1, lam=20, mu=5, seed=3, max_iterations=5), fit, table, theta0)
    rest = run_canonical(cfg, fit, table, state=half.state)
    assert rest.theta.tobytes() == full.theta.tobytes()


def test_sphere_improves(table):
    cfg = CanonicalConfig(sigma=0.1, lam=50, mu=10, seed=0, max_iterations=100)
    theta0 = np.full(20, 1.0, dtype=np.float32)
    res = run_canonical(cfg, fitness_from_function(sphere_eval), table, theta0)
    assert sphere_eval(res.theta) > 0.1 * sphere_eval(theta0)


def test_frame_budget_stops_run(table):
    cfg = CanonicalConfig(sigma=0.1, lam=10, mu=2, max_iterations=100, frame_budget=35)
    res = run_canonical(cfg, fitness_from_function(sphere_eval), table, np.zeros(3, dtype=np.float32))
    assert res.state.iteration == 4 and res.state.frames == 40


def test_failed_offspring_ranked_last(table):
    def fit(theta, seed):
        if theta[0] > 0:
            raise RuntimeError("boom")
        return -float(theta @ theta), 1

    cfg = CanonicalConfig(sigma=0.5, lam=16, mu=4, max_iterations=1)
    res = run_canonical(cfg, fit, table, np.zeros(4, dtype=np.float32))
    assert np.isfinite(res.theta).all()
