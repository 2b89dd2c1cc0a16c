import io

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import all_bitstrings
from umps.data import bas_generate
from umps.errors import GaugeDriftError, SingularAmplitudeError
from umps.mps import Gauge, Mps, canonicalize, contract_pair, partition_function, random_init
from umps.train import (
    TRACE_CSV_HEADER,
    EnvCache,
    TrainConfig,
    advance_env,
    baseline_gd_fit,
    euclidean_grad,
    nll,
    umps_sd_fit,
)


def uniform_chain(d):
    core = np.full((1, 2, 1), 1 / np.sqrt(2))
    return Mps(tuple(core.copy() for _ in range(d)), Gauge.none())


def basis_chain(bits):
    cores = []
    for b in bits:
        core = np.zeros((1, 2, 1))
        core[0, b, 0] = 1.0
        cores.append(core)
    return Mps(tuple(cores), Gauge.none())


def chain_nll_oracle(cores, k, merged, bits):
    """Normalized NLL computed by direct per-string contraction."""
    vals = []
    for row in bits:
        vec = np.ones(1)
        for i in range(k):
            vec = vec @ cores[i][:, row[i], :]
        vec = np.einsum("a,ab->b", vec, merged[:, row[k], row[k + 1], :])
        for i in range(k + 2, len(cores)):
            vec = vec @ cores[i][:, row[i], :]
        vals.append(vec[0])
    vals = np.asarray(vals)
    return float(-2 * np.mean(np.log(np.abs(vals))) + np.log(np.sum(merged**2)))


class TestTrainConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"r_max": 0},
            {"theta": 0.0},
            {"theta": -1.0},
            {"l_max": 0},
            {"omega": 0.0},
            {"log_every": 0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestNll:
    def test_uniform_model_analytic(self, rng):
        m = uniform_chain(4)
        data = rng.integers(0, 2, size=(12, 4))
        assert nll(m, data) == pytest.approx(4 * np.log(2), rel=1e-12)

    def test_basis_state_perfect_fit(self):
        m = basis_chain([1, 0, 1])
        assert nll(m, np.array([[1, 0, 1]])) == pytest.approx(0.0, abs=1e-12)

    def test_lower_bounded_by_empirical_entropy(self, rng):
        d = 8
        m = random_init(d, 4, seed=1)
        data = rng.integers(0, 2, size=(40, d)).astype(np.uint8)
        counts = {}
        for row in data:
            key = tuple(row)
            counts[key] = counts.get(key, 0) + 1
        probs = np.array([c / len(data) for c in counts.values()])
        entropy = float(-np.sum(probs * np.log(probs)))
        assert nll(m, data) >= entropy - 1e-12

    def test_zero_amplitude_names_offender(self):
        m = basis_chain([0, 0, 0])
        with pytest.raises(SingularAmplitudeError) as err:
            nll(m, np.array([[0, 0, 0], [1, 0, 0]]))
        assert err.value.sample_index == 1

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            nll(uniform_chain(3), np.zeros((2, 4), dtype=np.uint8))


class TestEnvCache:
    def test_single_sample_d3_left_env(self):
        m = random_init(3, 2, seed=5)
        bits = np.array([[1, 0, 1]], dtype=np.uint8)
        cache = EnvCache.build(list(m.cores), bits, k=1)
        assert_allclose(cache.left[0], np.ones(1) @ m.cores[0][:, 1, :])
        assert_allclose(cache.right[0], np.ones(1))

    def test_advance_matches_fresh_build(self, rng):
        m = random_init(7, 3, seed=9)
        cores = list(m.cores)
        bits = rng.integers(0, 2, size=(15, 7)).astype(np.uint8)
        cache = EnvCache.build(cores, bits, k=0)
        path = list(range(1, 6)) + list(range(4, -1, -1))
        for k in path:
            advance_env(cache, cores, k)
            fresh = EnvCache.build(cores, bits, k=k)
            assert_allclose(cache.left, fresh.left, atol=1e-12)
            assert_allclose(cache.right, fresh.right, atol=1e-12)

    def test_consistency_invariant_along_sweep(self, rng):
        from umps.mps import amplitudes

        m = random_init(6, 4, seed=11)
        cores = list(m.cores)
        bits = rng.integers(0, 2, size=(20, 6)).astype(np.uint8)
        amps = amplitudes(m, bits)
        cache = EnvCache.build(cores, bits, k=0)
        for k in [0, 1, 2, 3, 4, 3, 2, 1, 0]:
            if k != cache.k:
                advance_env(cache, cores, k)
            merged = contract_pair(cores[k], cores[k + 1])
            assert_allclose(cache.psi(merged), amps, rtol=1e-10)

    def test_non_adjacent_jump_rejected(self, rng):
        m = random_init(5, 2, seed=0)
        cache = EnvCache.build(list(m.cores), rng.integers(0, 2, size=(4, 5)).astype(np.uint8), k=0)
        with pytest.raises(ValueError):
            advance_env(cache, m, 2)


class TestEuclideanGrad:
    def test_vanishes_at_exact_match(self):
        # Empirical distribution equal to the model distribution: the
        # dataset enumerates every string once and the model is uniform.
        d = 6
        m = canonicalize(uniform_chain(d), 0)
        bits = all_bitstrings(d)
        for k in (0, 2):
            g = canonicalize(m, k)
            cache = EnvCache.build(list(g.cores), bits, k=k)
            merged = contract_pair(g.cores[k], g.cores[k + 1])
            grad = euclidean_grad(cache, merged, z=1.0)
            assert np.linalg.norm(grad) <= 1e-8

    def test_single_sample_d2_hand_computed(self):
        tensor = np.array([[3.0, 1.0], [2.0, 1.0]]).reshape(1, 2, 2, 1)
        tensor /= np.linalg.norm(tensor)
        bits = np.array([[0, 1]], dtype=np.uint8)
        cores = [tensor[:, :, 0, :].copy(), tensor[0, 0, :, :].reshape(1, 2, 1).copy()]
        cache = EnvCache.build(cores, bits, k=0)
        grad = euclidean_grad(cache, tensor, z=1.0)
        expected = 2.0 * tensor.copy()
        expected[0, 0, 1, 0] -= 2.0 / tensor[0, 0, 1, 0]
        assert_allclose(grad, expected, rtol=1e-12)

    def test_matches_finite_differences(self, rng):
        d, r = 6, 4
        m = random_init(d, r, seed=3)
        bits = rng.integers(0, 2, size=(20, d)).astype(np.uint8)
        for k in (0, 3):
            g = canonicalize(m, k)
            cores = list(g.cores)
            merged = contract_pair(cores[k], cores[k + 1])
            cache = EnvCache.build(cores, bits, k=k)
            grad = euclidean_grad(cache, merged, z=float(np.sum(merged**2)))
            h = 1e-5
            for _ in range(10):
                idx = tuple(int(rng.integers(0, s)) for s in merged.shape)
                probe = np.zeros_like(merged)
                probe[idx] = h
                fd = (
                    chain_nll_oracle(cores, k, merged + probe, bits)
                    - chain_nll_oracle(cores, k, merged - probe, bits)
                ) / (2 * h)
                assert fd == pytest.approx(grad[idx], rel=1e-5, abs=1e-8)

    def test_zero_amplitude_sample_flagged(self):
        m = canonicalize(basis_chain([0, 0]), 0)
        bits = np.array([[0, 0], [1, 1]], dtype=np.uint8)
        cache = EnvCache.build(list(m.cores), bits, k=0)
        merged = contract_pair(m.cores[0], m.cores[1])
        with pytest.raises(SingularAmplitudeError) as err:
            euclidean_grad(cache, merged, z=1.0)
        assert err.value.sample_index == 1


class TestUmpsSdFit:
    def test_first_loop_mostly_descends(self):
        data = bas_generate(2)  # 6 patterns, d=4
        init = random_init(4, 4, seed=2)
        start = nll(init, data)
        _, trace = umps_sd_fit(init, data, TrainConfig(r_max=4, theta=0.05, l_max=1))
        nlls = [start] + [r.nll for r in trace.rows]
        drops = sum(b < a for a, b in zip(nlls, nlls[1:]))
        assert drops / (len(nlls) - 1) >= 0.9

    def test_partition_function_stays_unit(self):
        data = bas_generate(2)
        init = random_init(4, 4, seed=4)
        zs = []
        cb = lambda loop, k, direction, m: zs.append(partition_function(m))
        model, trace = umps_sd_fit(init, data, TrainConfig(r_max=4, theta=0.05, l_max=3), callback=cb)
        assert max(abs(z - 1.0) for z in zs) <= 1e-6
        assert partition_function(model) == pytest.approx(1.0, abs=1e-6)
        assert all(abs(r.z - 1.0) <= 1e-6 for r in trace.rows)

    def test_mixed_canonical_maintained(self):
        data = bas_generate(2)
        init = random_init(4, 4, seed=6)
        cb = lambda loop, k, direction, m: m.validate(tol=1e-8)
        umps_sd_fit(init, data, TrainConfig(r_max=4, theta=0.05, l_max=2), callback=cb)

    def test_small_steps_rarely_ascend(self, rng):
        d = 5
        data = rng.integers(0, 2, size=(16, d)).astype(np.uint8)
        trials, ok = 0, 0
        for seed in range(10):
            init = random_init(d, 3, seed=seed)
            before = nll(init, data)
            _, trace = umps_sd_fit(init, data, TrainConfig(r_max=3, theta=1e-3, l_max=1))
            nlls = [before] + [r.nll for r in trace.rows]
            for a, b in zip(nlls, nlls[1:]):
                trials += 1
                ok += b <= a + 1e-9
        assert ok / trials >= 0.95

    def test_rank_bound_never_exceeded(self):
        data = bas_generate(2)
        init = random_init(4, 2, seed=8)
        seen = []
        cb = lambda loop, k, direction, m: seen.append(max(m.bond_dims))
        model, trace = umps_sd_fit(init, data, TrainConfig(r_max=2, theta=0.05, l_max=2), callback=cb)
        assert max(seen) <= 2
        assert max(r.r_max for r in trace.rows) <= 2

    def test_plateau_stops_early(self, rng):
        data = rng.integers(0, 2, size=(8, 4)).astype(np.uint8)
        init = random_init(4, 2, seed=1)
        _, trace = umps_sd_fit(init, data, TrainConfig(r_max=2, theta=1e-12, l_max=9))
        assert max(r.loop for r in trace.rows) == 2

    def test_requires_normalized_model(self, rng):
        m = random_init(4, 2, seed=0)
        denorm = Mps((2.0 * m.cores[0],) + m.cores[1:], Gauge.none())
        with pytest.raises(GaugeDriftError):
            umps_sd_fit(denorm, rng.integers(0, 2, size=(4, 4)).astype(np.uint8), TrainConfig())


class TestBaselineFit:
    def test_tiny_step_keeps_nll_constant(self, rng):
        # theta must be positive, so the theta -> 0 contract (model changes
        # only by gauge moves) is probed at a step far below rounding scale
        data = rng.integers(0, 2, size=(10, 5)).astype(np.uint8)
        init = random_init(5, 3, seed=3)
        before = nll(init, data)
        _, trace = baseline_gd_fit(init, data, TrainConfig(r_max=3, theta=1e-15, l_max=1))
        assert all(abs(r.nll - before) <= 1e-10 for r in trace.rows)

    def test_rank_bound_after_truncating_splits(self):
        data = bas_generate(2)
        init = random_init(4, 2, seed=5)
        model, trace = baseline_gd_fit(init, data, TrainConfig(r_max=2, theta=0.05, l_max=3))
        assert max(model.bond_dims) <= 2
        assert max(r.r_max for r in trace.rows) <= 2

    def test_z_tracked_in_trace(self):
        data = bas_generate(2)
        init = random_init(4, 3, seed=7)
        _, trace = baseline_gd_fit(init, data, TrainConfig(r_max=3, theta=0.05, l_max=2))
        assert all(np.isfinite(r.z) and 0 < r.z <= 1 + 1e-9 for r in trace.rows)

    def test_descends_on_toy(self):
        data = bas_generate(2)
        init = random_init(4, 4, seed=9)
        before = nll(init, data)
        model, trace = baseline_gd_fit(init, data, TrainConfig(r_max=4, theta=0.02, l_max=5))
        assert trace.final_nll < before

    def test_mixed_canonical_maintained(self):
        data = bas_generate(2)
        init = random_init(4, 4, seed=6)
        cb = lambda loop, k, direction, m: m.validate(tol=1e-8)
        baseline_gd_fit(init, data, TrainConfig(r_max=4, theta=0.05, l_max=2), callback=cb)


class TestTrace:
    def test_eval_matches_final_row(self):
        data = bas_generate(2)
        init = random_init(4, 4, seed=10)
        model, trace = umps_sd_fit(init, data, TrainConfig(r_max=4, theta=0.05, l_max=2))
        assert nll(model, data) == pytest.approx(trace.final_nll, abs=1e-9)

    def test_csv_round_trip(self):
        data = bas_generate(2)
        init = random_init(4, 4, seed=10)
        _, trace = umps_sd_fit(init, data, TrainConfig(r_max=4, theta=0.05, l_max=2))
        buf = io.StringIO()
        trace.write_csv(buf, comments=["config: toy"])
        lines = buf.getvalue().splitlines()
        assert lines[0] == "# config: toy"
        assert lines[1] == TRACE_CSV_HEADER
        assert len(lines) == 2 + len(trace.rows)
        first = lines[2].split(",")
        assert first[0] == "1" and first[2] in {"R", "L"}

    def test_log_every_thins_rows(self):
        data = bas_generate(2)
        init = random_init(4, 4, seed=10)
        _, dense = umps_sd_fit(init, data, TrainConfig(r_max=4, theta=0.05, l_max=2))
        _, thin = umps_sd_fit(init, data, TrainConfig(r_max=4, theta=0.05, l_max=2, log_every=4))
        assert len(thin.rows) < len(dense.rows)
        # loop boundaries always logged
        assert {r.loop for r in thin.rows} == {1, 2}

    def test_elapsed_monotone(self):
        data = bas_generate(2)
        init = random_init(4, 4, seed=10)
        _, trace = umps_sd_fit(init, data, TrainConfig(r_max=4, theta=0.05, l_max=2))
        elapsed = [r.elapsed_s for r in trace.rows]
        assert all(b >= a for a, b in zip(elapsed, elapsed[1:]))
