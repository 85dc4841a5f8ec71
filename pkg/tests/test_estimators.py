import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import hadamard

from hfce.dictionary import build_joint
from hfce.estimators import (DiffusionTable, MeasurementMatrix, PdOmpConfig, a_omp, combined_noise_covariance,
                             detect_strongest, diffusion_support, estimate_covariance, hf_npd_omp, hf_omp,
                             least_squares_on_support, mmse_estimate, p_omp, pd_omp)
from hfce.geometry import ArrayConfig
from hfce.scene import PilotObservation, generate_combiner, observe_pilots, sample_on_grid_scene, synthesize_channel


def _nmse(h_hat, h):
    return np.linalg.norm(h_hat - h) ** 2 / np.linalg.norm(h) ** 2


def _noiseless(seed, arr, D, k, k_far=None, q=10, n_rf=10):
    rng = np.random.default_rng(seed)
    scene, cols = sample_on_grid_scene(rng, D, k, k_far)
    h = synthesize_channel(arr, scene)
    W = generate_combiner(rng, arr, q, n_rf)
    return scene, cols, h, observe_pilots(rng, h, W, 0.0, n_rf=n_rf)


@pytest.fixture(scope="module")
def distinct_rings(arr200):
    # rings that do not collapse onto the distance floor, so no atom is duplicated
    return build_joint(arr200, 2, r_min_m=1.0, beta_control=0.5)


def test_config_validation():
    for bad in (dict(alpha=0.0), dict(alpha=1.5), dict(k_iterations=0), dict(max_support=0)):
        with pytest.raises(ValueError):
            PdOmpConfig(**bad)


def test_least_squares_residual_orthogonal(rng):
    psi = rng.standard_normal((30, 12)) + 1j * rng.standard_normal((30, 12))
    y = rng.standard_normal(30) + 1j * rng.standard_normal(30)
    coef, r, deficient = least_squares_on_support(y, psi, [1, 4, 7])
    assert not deficient
    np.testing.assert_allclose(psi[:, [1, 4, 7]].conj().T @ r, 0, atol=1e-12)
    oracle = np.linalg.pinv(psi[:, [1, 4, 7]]) @ y
    np.testing.assert_allclose(coef, oracle, atol=1e-12)


def test_least_squares_rank_deficient_min_norm(rng):
    a = rng.standard_normal(6) + 0j
    psi = np.column_stack([a, a])
    coef, r, deficient = least_squares_on_support(2 * a, psi, [0, 1])
    assert deficient
    np.testing.assert_allclose(coef, [1, 1], atol=1e-12)
    np.testing.assert_allclose(r, 0, atol=1e-12)
    with pytest.raises(ValueError):
        least_squares_on_support(a, psi, [])


def test_detect_strongest_basic():
    psi = np.eye(4, dtype=complex)
    assert detect_strongest(np.array([0, 3, 1, 0j]), psi) == 1
    assert detect_strongest(np.array([0, 3, 1, 0j]), psi, exclude=[1]) == 2
    # ties: lowest index
    assert detect_strongest(np.array([1, 1, 1, 1j]), psi) == 0


def test_detect_strongest_normalization():
    psi = np.array([[1.0, 3.0], [0.0, 1.0]], dtype=complex)
    r = np.array([1.0, 0.0], dtype=complex)
    assert detect_strongest(r, psi, normalize=False) == 1
    assert detect_strongest(r, psi, normalize=True) == 0


def test_diffusion_support_alpha_one_far_neighbours(arr200, joint200, table200):
    s = diffusion_support(100, joint200, arr200, 1.0, table200)
    assert s[0] == 100
    assert set(s[1:3]) == {99, 101}
    assert all(not joint200.params[i].is_far_field or i in (99, 100, 101) for i in s)
    assert diffusion_support(0, joint200, arr200, 1.0, table200)[:2] == [0, 1]


def test_diffusion_support_is_threshold_set(arr200, joint200, table200):
    # near-field atom close to 45 degrees on the 40 m ring
    n = int(np.argmin(np.abs(joint200.angles[:200] - math.radians(45))))
    l_star = joint200.encode(1, n)
    alpha = 0.04
    s = diffusion_support(l_star, joint200, arr200, alpha, table200)
    F = table200.row(l_star)
    expected = {l_star} | set(np.flatnonzero(F >= alpha).tolist())
    assert set(s) == expected
    assert any(joint200.params[i].is_far_field for i in s)
    assert s[0] == l_star
    assert all(F[a] >= F[b] for a, b in zip(s[1:], s[2:]))


def test_diffusion_support_monotone_in_alpha(arr200, joint200, table200):
    l = joint200.encode(2, 60)
    sizes = [len(diffusion_support(l, joint200, arr200, a, table200)) for a in (1.0, 0.7, 0.4, 0.2, 0.1, 0.05)]
    assert sizes == sorted(sizes)
    with pytest.raises(ValueError):
        diffusion_support(l, joint200, arr200, 0.0, table200)


def test_diffusion_table_matches_exact_on_duplicates(arr200, joint200, table200):
    # the floored rings make atom (ring 2, n) identical to (ring 1, n)
    row = table200.row(joint200.encode(1, 30))
    assert row[joint200.encode(2, 30)] == pytest.approx(1.0, abs=1e-12)
    assert np.isnan(table200.row(5)[:200]).all()
    assert not np.isnan(table200.row(5)[200:]).any()


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("alpha", [0.05, 0.2, 0.7])
def test_pd_omp_exact_recovery(arr200, joint200, table200, k, alpha):
    for seed in range(5):
        _, _, h, obs = _noiseless(100 * k + seed, arr200, joint200, k)
        est = pd_omp(obs, joint200, arr200, PdOmpConfig(alpha, k), table=table200)
        assert _nmse(est.h_hat, h) <= 1e-10


def test_hf_npd_omp_single_path(arr200, joint200):
    for seed in range(5):
        _, cols, h, obs = _noiseless(seed, arr200, joint200, 1)
        est = hf_npd_omp(obs, joint200, arr200, PdOmpConfig(1.0, 1))
        assert _nmse(est.h_hat, h) <= 1e-10


def test_hf_omp_single_path_each_field(arr200, joint200):
    for k_far in (0, 1):
        _, _, h, obs = _noiseless(7 + k_far, arr200, joint200, 1, k_far=k_far)
        est = hf_omp(obs, arr200, PdOmpConfig(1.0, 1), k_far, 1 - k_far, joint200)
        assert _nmse(est.h_hat, h) <= 1e-10


def test_a_omp_far_scene(arr200, joint200):
    _, _, h, obs = _noiseless(3, arr200, joint200, 3, k_far=3)
    est = a_omp(obs, arr200, PdOmpConfig(1.0, 3), joint200)
    assert _nmse(est.h_hat, h) <= 1e-10
    assert all(i < 200 for i in est.support.indices)


def test_p_omp_near_scene(arr200, joint200):
    _, cols, h, obs = _noiseless(4, arr200, joint200, 1, k_far=0)
    est = p_omp(obs, arr200, PdOmpConfig(1.0, 1), joint200)
    assert _nmse(est.h_hat, h) <= 1e-10
    standalone = p_omp(obs, arr200, PdOmpConfig(1.0, 1))
    assert _nmse(standalone.h_hat, h) <= 1e-10


def test_zero_observation(arr200, joint200, table200):
    W = generate_combiner(np.random.default_rng(0), arr200, 2, 10)
    obs = PilotObservation(np.zeros(20, complex), W, 0.0, q_slots=2, n_rf=10)
    cfg = PdOmpConfig(0.2, 3)
    for est in (pd_omp(obs, joint200, arr200, cfg, table=table200), hf_npd_omp(obs, joint200, arr200, cfg),
                a_omp(obs, arr200, cfg, joint200), hf_omp(obs, arr200, cfg, 1, 2, joint200)):
        assert not np.any(est.h_hat)


def _noisy_obs(seed, arr, q=4, n_rf=10):
    from hfce.scene import sample_scene
    rng = np.random.default_rng(seed)
    h = synthesize_channel(arr, sample_scene(rng, 5))
    W = generate_combiner(rng, arr, q, n_rf)
    return h, observe_pilots(rng, h, W, 0.05 / 200, n_rf=n_rf)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), alpha=st.sampled_from([0.05, 0.2, 0.7, 1.0]))
def test_residual_and_support_monotone(arr200, joint200, table200, seed, alpha):
    _, obs = _noisy_obs(seed, arr200)
    cfg = PdOmpConfig(alpha, 5)
    M = MeasurementMatrix.build(obs.combiner, joint200)
    for est in (pd_omp(obs, joint200, arr200, cfg, M, table200), hf_npd_omp(obs, joint200, arr200, cfg, M),
                a_omp(obs, arr200, cfg, joint200, M), p_omp(obs, arr200, cfg, joint200, M),
                hf_omp(obs, arr200, cfg, 2, 3, joint200, M)):
        r = est.residual_norms
        assert all(b <= a * (1 + 1e-9) + 1e-12 for a, b in zip(r, r[1:]))
        assert len(est.support.indices) <= obs.y.shape[0]
    est = pd_omp(obs, joint200, arr200, cfg, M, table200)
    seen = []
    for l_star, group in est.support.per_iteration:
        before = set(seen)
        seen.extend(i for i in group if i not in before and i in est.support.indices)
        assert before <= set(seen)
    assert set(seen) == set(est.support.indices)


def test_support_cap(arr200, joint200, table200):
    _, obs = _noisy_obs(1, arr200, q=2)
    est = pd_omp(obs, joint200, arr200, PdOmpConfig(0.02, 5, max_support=7), table=table200)
    assert len(est.support.indices) <= 7
    assert any("truncated" in d or "cap" in d for d in est.diagnostics)


@pytest.mark.parametrize("c", [2.5, -1j, 1e-3 * (1 + 1j), 1e4])
def test_pd_omp_scale_equivariance(arr200, joint200, table200, c):
    _, obs = _noisy_obs(2, arr200)
    scaled = PilotObservation(c * obs.y, obs.combiner, obs.noise_var, q_slots=obs.q_slots, n_rf=obs.n_rf)
    cfg = PdOmpConfig(0.2, 5)
    a = pd_omp(obs, joint200, arr200, cfg, table=table200)
    b = pd_omp(scaled, joint200, arr200, cfg, table=table200)
    assert a.support.indices == b.support.indices
    np.testing.assert_allclose(b.h_hat, c * a.h_hat, rtol=1e-8, atol=1e-12 * abs(c))


def test_scale_equivariance_with_rank_deficient_supports(arr200, joint200, table200):
    # duplicated ring atoms make every support rank deficient; the rank decision must not depend on |y|
    for seed in range(15):
        _, obs = _noisy_obs(500 + seed, arr200, q=10)
        cfg = PdOmpConfig(0.2, 5)
        a = pd_omp(obs, joint200, arr200, cfg, table=table200)
        b = pd_omp(PilotObservation((0.3 - 2j) * obs.y, obs.combiner, obs.noise_var, q_slots=10, n_rf=10),
                   joint200, arr200, cfg, table=table200)
        assert a.support.indices == b.support.indices
        np.testing.assert_allclose(b.h_hat, (0.3 - 2j) * a.h_hat, rtol=1e-8, atol=1e-12)


def test_pilot_symbol_divided_out(arr200, joint200, table200):
    rng = np.random.default_rng(5)
    scene, _ = sample_on_grid_scene(rng, joint200, 2)
    h = synthesize_channel(arr200, scene)
    W = generate_combiner(rng, arr200, 10, 10)
    obs = observe_pilots(rng, h, W, 0.0, pilot_symbol=np.exp(0.3j), n_rf=10)
    est = pd_omp(obs, joint200, arr200, PdOmpConfig(0.2, 2), table=table200)
    assert _nmse(est.h_hat, h) <= 1e-10


def test_deterministic(arr200, joint200, table200):
    _, obs = _noisy_obs(3, arr200)
    cfg = PdOmpConfig(0.1, 5)
    a = pd_omp(obs, joint200, arr200, cfg, table=table200)
    b = pd_omp(obs, joint200, arr200, cfg)
    np.testing.assert_array_equal(a.h_hat, b.h_hat)


def test_pd_omp_reduces_to_plain_omp_for_near_detections(arr200, distinct_rings):
    D = distinct_rings
    table = DiffusionTable(D, arr200)
    compared = 0
    for seed in range(20):
        _, _, _, obs = _noiseless(seed, arr200, D, 2, k_far=0)
        cfg = PdOmpConfig(1.0, 2)
        a = pd_omp(obs, D, arr200, cfg, table=table)
        if any(D.params[l].is_far_field for l, _ in a.support.per_iteration):
            continue
        b = hf_npd_omp(obs, D, arr200, cfg)
        assert a.support.indices == b.support.indices
        np.testing.assert_array_equal(a.h_hat, b.h_hat)
        compared += 1
    assert compared >= 10


def test_hf_omp_stage_order_and_indices(arr200, joint200):
    _, cols, h, obs = _noiseless(11, arr200, joint200, 2, k_far=1)
    for far_first in (True, False):
        est = hf_omp(obs, arr200, PdOmpConfig(1.0, 2), 1, 1, joint200, far_first=far_first)
        idx = est.support.indices
        assert sum(joint200.params[i].is_far_field for i in idx) == 1
        assert len(idx) == 2
    with pytest.raises(ValueError):
        hf_omp(obs, arr200, PdOmpConfig(1.0, 2), -1, 1, joint200)


def test_hf_omp_far_only_equals_a_omp(arr200, joint200):
    _, obs = _noisy_obs(4, arr200)
    a = hf_omp(obs, arr200, PdOmpConfig(1.0, 3), 3, 0, joint200)
    b = a_omp(obs, arr200, PdOmpConfig(1.0, 3), joint200)
    assert a.support.indices == b.support.indices
    np.testing.assert_allclose(a.h_hat, b.h_hat, atol=1e-12)


def test_combined_noise_covariance_block_structure(arr200):
    W = generate_combiner(np.random.default_rng(0), arr200, 3, 2)
    obs = PilotObservation(np.zeros(6, complex), W, 1.0, q_slots=3, n_rf=2)
    B = combined_noise_covariance(obs)
    full = W @ W.conj().T
    for q in range(3):
        s = slice(2 * q, 2 * q + 2)
        np.testing.assert_allclose(B[s, s], full[s, s])
    assert not np.any(B[0:2, 2:6])


def test_mmse_large_noise_shrinks_to_zero(arr200):
    rng = np.random.default_rng(0)
    C = estimate_covariance(rng, arr200, 200)
    h, obs = _noisy_obs(5, arr200)
    loud = observe_pilots(rng, h, obs.combiner, 1e8, n_rf=10)
    assert np.linalg.norm(mmse_estimate(loud, C, arr200).h_hat) < 1e-2


def test_mmse_identity_prior_orthogonal_combiner():
    cfg = ArrayConfig(8, 0.005, 0.01)
    W = hadamard(8).astype(complex) / math.sqrt(8)
    rng = np.random.default_rng(1)
    h = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    obs = observe_pilots(rng, h, W, 0.0, n_rf=1)
    est = mmse_estimate(obs, np.eye(8, dtype=complex), cfg)
    np.testing.assert_allclose(est.h_hat, h, atol=1e-8)
    with pytest.raises(ValueError):
        mmse_estimate(obs, np.eye(4), cfg)


def test_mmse_error_below_prior_energy(arr200):
    rng = np.random.default_rng(2)
    C = estimate_covariance(rng, arr200, 500)
    errs, energy = [], []
    for seed in range(60):
        h, obs = _noisy_obs(1000 + seed, arr200)
        errs.append(np.linalg.norm(mmse_estimate(obs, C, arr200).h_hat - h) ** 2)
        energy.append(np.linalg.norm(h) ** 2)
    assert np.mean(errs) <= np.mean(energy)


def test_covariance_properties(arr200):
    C = estimate_covariance(np.random.default_rng(3), arr200, 3000)
    np.testing.assert_allclose(C, C.conj().T)
    assert np.trace(C).real == pytest.approx(1.0, rel=0.06)
    assert np.linalg.eigvalsh(C).min() > -1e-10
    with pytest.raises(ValueError):
        estimate_covariance(np.random.default_rng(0), arr200, 0)
