import math

import numpy as np
import pytest

from naseval import oracle
from naseval import rng as nrng
from naseval.space import ChainArch, active_edges, canonical_encoding, chain_spec, edge_index, enumerate_space
from naseval.supernet import (
    EvalResult,
    NonFiniteError,
    TaskSpec,
    TrainConfig,
    backward,
    forward,
    ground_truth_table,
    init_params,
    make_splits,
    rank_trajectory,
    sgd_step,
    standalone_sweep,
    train_standalone,
    train_weight_sharing,
    unigram_loss,
    ws_ranking,
)
from naseval.supernet.task import entropy_floor, transition_table

SPEC2 = chain_spec(2)


def params_for(spec, task, seed=0, **kw):
    cfg = TrainConfig(hidden_size=kw.get("H", 6), embedding_size=kw.get("D", 4))
    return init_params(spec, task.vocab_size, cfg, seed)


def inactive(arch, n):
    on = {edge_index(i, p) for i, p in active_edges(arch)}
    return [e for e in range(n * (n + 1) // 2) if e not in on]


class TestTask:
    def test_shapes_and_reproducibility(self, small_task):
        s = make_splits(small_task)
        assert s.train.shape == (64, 9) and s.valid.shape == (32, 9) and s.test.shape == (32, 9)
        again = make_splits(TaskSpec(**small_task.to_dict()))
        np.testing.assert_array_equal(s.train, again.train)

    def test_pattern_rate(self):
        task = TaskSpec()
        s = make_splits(task)
        table = transition_table(task)
        w = np.concatenate([s.train, s.valid, s.test])
        hits = [table[r[t - 2], r[t - 1]] == r[t] for r in w for t in range(2, w.shape[1])]
        expected = 1 - task.noise + task.noise / task.vocab_size
        assert abs(np.mean(hits) - expected) < 0.01

    def test_splits_are_consecutive_windows(self, small_task):
        s = make_splits(small_task)
        stream = np.concatenate([s.train, s.valid, s.test]).ravel()
        # order-2 pattern continues across window boundaries of the single stream
        table = transition_table(small_task)
        follow = np.mean([table[stream[i - 2], stream[i - 1]] == stream[i] for i in range(2, len(stream))])
        assert follow > 0.8

    def test_different_seeds_differ(self, small_task):
        other = TaskSpec(**{**small_task.to_dict(), "seed": 4})
        assert not np.array_equal(make_splits(small_task).train, make_splits(other).train)

    def test_learnable(self, bundled_table):
        task = TaskSpec(**bundled_table.meta["task"])
        best_loss = math.log(bundled_table.record(bundled_table.ranked_keys[0]).mean)
        assert best_loss < unigram_loss(task)
        assert best_loss > entropy_floor(task)

    def test_invalid(self):
        with pytest.raises(ValueError):
            TaskSpec(vocab_size=1)
        with pytest.raises(ValueError):
            TaskSpec(noise=1.5)


class TestTrainConfig:
    def test_defaults(self):
        c = TrainConfig()
        assert (c.hidden_size, c.embedding_size, c.batch_size, c.learning_rate, c.gradient_clip) == (16, 8, 32, 0.5, 0.25)
        assert (c.epochs, c.ws_epochs) == (30, 100)

    @pytest.mark.parametrize("field,value", [("epochs", 0), ("hidden_size", -1), ("learning_rate", 0.0),
                                             ("gradient_clip", math.inf), ("batch_size", 2.5)])
    def test_rejected(self, field, value):
        with pytest.raises(ValueError):
            TrainConfig(**{field: value})

    def test_round_trip(self):
        c = TrainConfig(epochs=7)
        assert TrainConfig.from_dict(c.to_dict()) == c


class TestEvalResult:
    def test_ppl(self):
        r = EvalResult.of(1.25, "k", 3)
        assert abs(r.ppl - math.exp(1.25)) < 1e-9 and not r.failed

    def test_failure(self):
        r = EvalResult.of(math.nan, "k", 3)
        assert r.failed and r.to_dict()["loss"] is None


class TestForward:
    def test_deterministic(self, small_task):
        p = params_for(SPEC2, small_task)
        b = make_splits(small_task).train[:8]
        a = ChainArch(((0, 2), (1, 3)))
        assert forward(a, p, b) == forward(a, p, b)

    def test_path_locality(self, small_task):
        spec = chain_spec(3)
        p = params_for(spec, small_task, seed=1)
        b = make_splits(small_task).train[:8]
        a = ChainArch(((0, 1), (0, 2), (2, 3)))
        base = forward(a, p, b)
        q = p.copy()
        for e in inactive(a, 3):
            q.edges[e] = 0.0 if e % 2 else 1e6
        assert forward(a, q, b) == base

    def test_untrained_entropy(self):
        task = TaskSpec()
        p = init_params(SPEC2, task.vocab_size, TrainConfig(), 0)
        b = nrng.stream(0, nrng.BATCHES).integers(0, task.vocab_size, (32, 21))
        for a in enumerate_space(SPEC2)[::5]:
            assert abs(forward(a, p, b) - math.log(task.vocab_size)) < 0.2 * math.log(task.vocab_size)

    def test_bad_inputs(self, small_task):
        p = params_for(SPEC2, small_task)
        with pytest.raises(ValueError):
            forward(ChainArch(((0, 0),)), p, make_splits(small_task).train[:2])
        with pytest.raises(ValueError):
            forward(ChainArch(((0, 0), (0, 0))), p, np.full((2, 5), 99))
        with pytest.raises(ValueError):
            forward(ChainArch(((0, 0), (0, 0))), p, np.zeros(5, dtype=int))

    def test_non_finite(self, small_task):
        p = params_for(SPEC2, small_task)
        p.w_out[:] = np.nan
        with pytest.raises(NonFiniteError):
            forward(ChainArch(((0, 0), (0, 0))), p, make_splits(small_task).train[:2])


class TestBackward:
    ARCHS = [ChainArch(((0, 0), (1, 1), (0, 2))), ChainArch(((0, 3), (1, 2), (2, 1))),
             ChainArch(((0, 1), (0, 3), (1, 0)))]

    @pytest.mark.parametrize("arch", ARCHS)
    def test_finite_differences(self, arch, small_task):
        spec = chain_spec(3)
        p = params_for(spec, small_task, seed=2)
        rng = np.random.default_rng(0)
        for arr in p.arrays():  # break symmetry away from the small init
            arr += rng.normal(0, 0.3, arr.shape)
        b = make_splits(small_task).train[:6]
        g = backward(arch, p, b)
        on = set(edge_index(i, q) for i, q in active_edges(arch))
        coords = []
        for name in p.names:
            arr = getattr(p, name)
            for _ in range(20):
                idx = tuple(rng.integers(0, s) for s in arr.shape)
                if name == "edges" and idx[0] not in on:
                    idx = (sorted(on)[rng.integers(0, len(on))],) + idx[1:]
                coords.append((name, idx))
        for name, idx in coords:
            arr = getattr(p, name)
            old = arr[idx]
            arr[idx] = old + 1e-4
            lp = forward(arch, p, b)
            arr[idx] = old - 1e-4
            lm = forward(arch, p, b)
            arr[idx] = old
            fd = (lp - lm) / 2e-4
            an = getattr(g, name)[idx]
            assert abs(an - fd) <= 1e-4 * (1 + abs(an)), (name, idx, an, fd)

    def test_inactive_edges_exactly_zero(self, small_task):
        spec = chain_spec(3)
        p = params_for(spec, small_task)
        a = self.ARCHS[0]
        g = backward(a, p, make_splits(small_task).train[:4])
        for e in inactive(a, 3):
            assert not np.any(g.edges[e])

    def test_duplicated_batch(self, small_task):
        p = params_for(SPEC2, small_task)
        b = make_splits(small_task).train[:5]
        a = ChainArch(((0, 2), (1, 3)))
        g1 = backward(a, p, b)
        g2 = backward(a, p, np.concatenate([b, b]))
        for x, y in zip(g1.arrays(), g2.arrays()):
            np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-15)


class TestSgdStep:
    def test_inactive_bit_unchanged(self, small_task):
        spec = chain_spec(3)
        p = params_for(spec, small_task)
        before = p.copy()
        a = ChainArch(((0, 1), (0, 2), (2, 3)))
        b = make_splits(small_task).train[:16]
        sgd_step(a, p, b, 0.5, 0.25)
        for e in inactive(a, 3):
            assert p.edges[e].tobytes() == before.edges[e].tobytes()
        assert not np.array_equal(p.w_out, before.w_out)

    def test_clipped_step_norm(self, small_task):
        p = params_for(SPEC2, small_task)
        before = p.copy()
        a = ChainArch(((0, 2), (1, 3)))
        sgd_step(a, p, make_splits(small_task).train[:16], 1.0, 1e-3)
        sq = sum(np.sum((x - y) ** 2) for x, y in zip(p.arrays(), before.arrays()))
        assert math.sqrt(sq) == pytest.approx(1e-3, rel=1e-9)


class TestStandalone:
    def test_deterministic(self, small_task, small_config):
        a = ChainArch(((0, 2), (1, 3)))
        r1 = train_standalone(a, small_task, small_config, 5)
        r2 = train_standalone(a, small_task, small_config, 5)
        assert r1 == r2 and r1.epoch == small_config.epochs and r1.key == "0 tanh 1 relu"

    def test_training_reduces_loss(self, small_task, small_config):
        a = ChainArch(((0, 2), (0, 0)))
        p = init_params(SPEC2, small_task.vocab_size, small_config, 5)
        before = forward(a, p, make_splits(small_task).valid)
        after = train_standalone(a, small_task, TrainConfig(**{**small_config.to_dict(), "epochs": 20}), 5).loss
        assert after < before

    def test_divergence_flagged(self, small_task):
        cfg = TrainConfig(hidden_size=6, embedding_size=4, epochs=3, batch_size=16, learning_rate=1e200,
                          gradient_clip=1e300)
        r = train_standalone(ChainArch(((0, 0), (1, 0))), small_task, cfg, 0)
        assert r.failed and math.isinf(r.ppl)


class TestWeightSharing:
    def test_single_arch_space_equals_standalone(self, small_task, small_config):
        a = ChainArch(((0, 1), (1, 2)))
        shared = train_weight_sharing(SPEC2, small_task, small_config, 3, archs=[a], epochs=small_config.epochs)
        ws = ws_ranking(shared, SPEC2, small_task, archs=[a])[0][1]
        sa = train_standalone(a, small_task, small_config, 3)
        assert abs(ws.loss - sa.loss) < 1e-6

    def test_uniform_sampling_counts(self, small_task):
        cfg = TrainConfig(hidden_size=4, embedding_size=2, batch_size=16, ws_epochs=800)
        log = []
        train_weight_sharing(SPEC2, small_task, cfg, 0, log=log)
        assert len(log) == 3200
        counts = {k: log.count(k) for k in set(log)}
        assert len(counts) == 32
        assert all(60 <= c <= 140 for c in counts.values())

    def test_deterministic(self, small_task, small_config):
        a = train_weight_sharing(SPEC2, small_task, small_config, 1)
        b = train_weight_sharing(SPEC2, small_task, small_config, 1)
        assert a.equal(b)

    def test_ranking(self, small_task, small_config):
        shared = train_weight_sharing(SPEC2, small_task, small_config, 1)
        ranked = ws_ranking(shared, SPEC2, small_task)
        keys = [e.key for _, e in ranked]
        assert sorted(keys) == sorted(canonical_encoding(SPEC2, a) for a in enumerate_space(SPEC2))
        losses = [e.loss for _, e in ranked]
        assert losses == sorted(losses)
        assert all(canonical_encoding(SPEC2, a) == e.key for a, e in ranked)


class TestGroundTruth:
    def test_bookkeeping(self, small_task, small_config):
        sweep = standalone_sweep(SPEC2, small_task, small_config, [0, 1, 2])
        assert len(sweep.runs) == 96
        t = ground_truth_table(SPEC2, small_task, small_config, [0, 1, 2], sweep=sweep)
        assert t.r_max == 32 and all(r.runs == 3 for r in t.records())
        assert t.meta["failed_runs"] == 0

    def test_single_seed_std_zero(self, small_task, small_config):
        archs = enumerate_space(SPEC2)[:4]
        t = ground_truth_table(SPEC2, small_task, small_config, [7], archs=archs)
        assert all(r.std == 0.0 for r in t.records())

    def test_identical_bytes(self, small_task, small_config, tmp_path):
        archs = enumerate_space(SPEC2)[:6]
        for name in ("a", "b"):
            oracle.dump(ground_truth_table(SPEC2, small_task, small_config, [0, 1], archs=archs), tmp_path / name)
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_parallel_matches_serial(self, small_task, small_config):
        archs = enumerate_space(SPEC2)[:4]
        a = ground_truth_table(SPEC2, small_task, small_config, [0, 1], archs=archs)
        b = ground_truth_table(SPEC2, small_task, small_config, [0, 1], archs=archs, workers=2)
        assert oracle.table_lines(a) == oracle.table_lines(b)

    def test_failed_runs_flagged(self, small_task):
        cfg = TrainConfig(hidden_size=6, embedding_size=4, epochs=2, batch_size=16, learning_rate=1e200,
                          gradient_clip=1e300)
        archs = [ChainArch(((0, 0), (1, 0)))]
        t = ground_truth_table(SPEC2, small_task, cfg, [0], archs=archs)
        assert t.failed == ("0 identity 1 identity",) and t.meta["failed_runs"] == 1

    def test_trajectory(self, small_task, small_config):
        sweep = standalone_sweep(SPEC2, small_task, small_config, [0, 1])
        pts, keys, ranks = rank_trajectory(SPEC2, small_task, small_config, [0, 1], sweep=sweep)
        assert pts == [1, 2, 3]
        assert ranks.shape == (32, 3)
        for c in range(3):
            assert sorted(ranks[:, c]) == list(range(1, 33))
        t = ground_truth_table(SPEC2, small_task, small_config, [0, 1], sweep=sweep)
        assert [keys[i] for i in np.argsort(ranks[:, -1])] == list(t.ranked_keys)
