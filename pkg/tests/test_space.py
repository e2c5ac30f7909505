import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from naseval import rng as nrng
from naseval.space import (
    GRAPH,
    ChainArch,
    GraphArch,
    InvalidArchitectureError,
    RelaxationParams,
    SearchSpaceSpec,
    SpaceError,
    SpaceTooLargeError,
    UnsupportedFamilyError,
    active_edges,
    canonical_encoding,
    cardinality,
    chain_spec,
    decode,
    edge_index,
    enumerate_space,
    is_valid,
    mixture_probs,
    num_edges,
    sample_uniform,
    shared_upstream,
    validate,
)


def graph_spec(n=5):
    return SearchSpaceSpec(GRAPH, n, ("conv3x3", "conv1x1", "max3x3"))


class TestCardinality:
    @pytest.mark.parametrize("n,k,expected", [(2, 4, 32), (1, 4, 4), (3, 4, 384), (1, 1, 1)])
    def test_formula(self, n, k, expected):
        ops = ("identity", "sigmoid", "tanh", "relu")[:k]
        assert cardinality(chain_spec(n, ops)) == expected

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_matches_brute_force(self, n):
        # independent count: product over nodes of (#predecessors * #ops)
        brute = sum(1 for _ in itertools.product(*[range(i * 4) for i in range(1, n + 1)]))
        assert cardinality(chain_spec(n)) == brute == math.factorial(n) * 4**n

    def test_graph_family_rejected(self):
        with pytest.raises(UnsupportedFamilyError):
            cardinality(graph_spec())


class TestEnumerate:
    def test_two_node_space(self):
        archs = enumerate_space(chain_spec(2))
        keys = [canonical_encoding(chain_spec(2), a) for a in archs]
        assert len(archs) == 32
        assert len(set(keys)) == 32
        assert keys == sorted(keys)

    def test_single_point_space(self):
        spec = chain_spec(1, ("identity",))
        assert enumerate_space(spec) == [ChainArch(((0, 0),))]

    @pytest.mark.parametrize("n", [3, 4])
    def test_distinct_and_valid(self, n):
        spec = chain_spec(n)
        archs = enumerate_space(spec)
        assert len(archs) == cardinality(spec)
        assert len({canonical_encoding(spec, a) for a in archs}) == len(archs)
        assert all(is_valid(spec, a) for a in archs)

    def test_too_large(self):
        spec = chain_spec(12)
        with pytest.raises(SpaceTooLargeError) as err:
            enumerate_space(spec)
        assert err.value.cardinality == math.factorial(12) * 4**12
        assert str(math.factorial(12) * 4**12) in str(err.value)

    def test_limit_is_inclusive(self):
        assert len(enumerate_space(chain_spec(2, enumeration_limit=32))) == 32
        with pytest.raises(SpaceTooLargeError):
            enumerate_space(chain_spec(2, enumeration_limit=31))


class TestEncoding:
    def test_declared_format(self):
        spec = chain_spec(2)
        assert canonical_encoding(spec, ChainArch(((0, 2), (1, 3)))) == "0 tanh 1 relu"

    def test_round_trip_two_node(self):
        spec = chain_spec(2)
        for a in enumerate_space(spec):
            assert decode(spec, canonical_encoding(spec, a)) == a

    def test_injective_three_node(self):
        spec = chain_spec(3)
        archs = enumerate_space(spec)
        keys = {canonical_encoding(spec, a) for a in archs}
        assert len(keys) == len(archs) == 384
        for a in archs:
            assert decode(spec, canonical_encoding(spec, a)) == a

    @pytest.mark.parametrize("bad", ["0 tanh", "0 tanh 2 relu", "0 gelu 1 relu", "0 tanh 1  relu", "x tanh 0 relu", ""])
    def test_malformed_keys(self, bad):
        with pytest.raises(InvalidArchitectureError):
            decode(chain_spec(2), bad)

    def test_invalid_arch_rejected(self):
        with pytest.raises(InvalidArchitectureError):
            canonical_encoding(chain_spec(2), ChainArch(((1, 0), (0, 0))))

    def test_graph_round_trip(self):
        spec = graph_spec()
        arch = GraphArch(((0, 1, 1, 0), (0, 0, 0, 1), (0, 0, 0, 1), (0, 0, 0, 0)), (0, 2))
        key = canonical_encoding(spec, arch)
        assert key == "0110.0001.0001.0000|conv3x3,max3x3"
        assert decode(spec, key) == arch


class TestValidation:
    def test_chain_predecessor_range(self):
        spec = chain_spec(3)
        validate(spec, ChainArch(((0, 0), (1, 1), (2, 3))))
        with pytest.raises(InvalidArchitectureError):
            validate(spec, ChainArch(((0, 0), (2, 1), (0, 0))))
        with pytest.raises(InvalidArchitectureError):
            validate(spec, ChainArch(((0, 4), (0, 0), (0, 0))))
        with pytest.raises(InvalidArchitectureError):
            validate(spec, ChainArch(((0, 0), (0, 0))))

    def test_graph_dangling_vertex(self):
        spec = graph_spec()
        # vertex 2 has no path to the output
        arch = GraphArch(((0, 1, 1, 0), (0, 0, 0, 1), (0, 0, 0, 0), (0, 0, 0, 0)), (0, 1))
        assert not is_valid(spec, arch)

    def test_graph_not_upper_triangular(self):
        spec = graph_spec()
        arch = GraphArch(((0, 1, 0), (1, 0, 1), (0, 0, 0)), (0,))
        assert not is_valid(spec, arch)

    def test_spec_invariants(self):
        with pytest.raises(SpaceError):
            chain_spec(0)
        with pytest.raises(SpaceError):
            SearchSpaceSpec(node_count=2, enumeration_limit=0)
        with pytest.raises(SpaceError):
            chain_spec(2, ("relu", "relu"))
        with pytest.raises(SpaceError):
            chain_spec(2, ())


class TestSampleUniform:
    def test_single_point(self):
        spec = chain_spec(1, ("identity",))
        g = nrng.stream(5, nrng.ARCH)
        assert sample_uniform(spec, g) == ChainArch(((0, 0),))

    def test_chi_square_uniformity(self):
        spec = chain_spec(2)
        keys = [canonical_encoding(spec, a) for a in enumerate_space(spec)]
        g = nrng.stream(0, nrng.ARCH)
        counts = dict.fromkeys(keys, 0)
        for _ in range(32000):
            counts[canonical_encoding(spec, sample_uniform(spec, g))] += 1
        p = sps.chisquare(list(counts.values())).pvalue
        assert p > 0.001

    def test_deterministic(self):
        spec = chain_spec(3)
        a = [sample_uniform(spec, nrng.stream(9, nrng.ARCH)) for _ in range(2)]
        assert a[0] == a[1]

    def test_always_valid(self):
        spec = chain_spec(4)
        g = nrng.stream(1, nrng.ARCH)
        assert all(is_valid(spec, sample_uniform(spec, g)) for _ in range(500))

    def test_graph_needs_table(self):
        with pytest.raises(SpaceError):
            sample_uniform(graph_spec(), nrng.stream(0, nrng.ARCH))


class TestMixtureProbs:
    def test_symmetric(self):
        np.testing.assert_allclose(mixture_probs([0, 0, 0, 0]), [0.25] * 4, atol=1e-15)

    @pytest.mark.parametrize("c", [-700.0, -3.0, 0.0, 12.5, 700.0])
    def test_shift(self, c):
        np.testing.assert_allclose(mixture_probs([c, c + math.log(3)]), [0.25, 0.75], atol=1e-12)

    def test_no_overflow(self):
        import mpmath

        p = mixture_probs([1000.0, 0.0])
        ref = 1 / (1 + mpmath.exp(-1000))
        assert p[0] == pytest.approx(float(ref), abs=1e-15)
        assert p[1] == pytest.approx(float(mpmath.exp(-1000) * ref), abs=1e-300)

    def test_errors(self):
        with pytest.raises(ValueError):
            mixture_probs([])
        with pytest.raises(ValueError):
            mixture_probs([0.0, math.nan])

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=12), st.floats(-100, 100))
    @settings(max_examples=200, deadline=None)
    def test_shift_invariance_property(self, logits, c):
        p = mixture_probs(logits)
        q = mixture_probs(np.asarray(logits) + c)
        assert abs(p.sum() - 1) < 1e-9
        assert np.all(p >= 0)
        np.testing.assert_allclose(p, q, atol=1e-12)


class TestActiveEdges:
    def test_both_on_input(self):
        assert active_edges(ChainArch(((0, 2), (0, 3)))) == {(1, 0), (2, 0)}

    def test_chain(self):
        assert active_edges(ChainArch(((0, 2), (1, 3)))) == {(1, 0), (2, 1)}

    def test_upstream_of_node(self):
        a = ChainArch(((0, 0), (1, 0), (2, 0)))
        assert active_edges(a, 3) == {(3, 2), (2, 1), (1, 0)}
        assert active_edges(a, 0) == frozenset()

    def test_fixed_prefix_sharing(self):
        prefix = ((0, 2), (1, 3))
        counts = {p: shared_upstream(ChainArch(prefix + ((p, 0),)), 3) for p in range(3)}
        assert counts == {0: 0, 1: 1, 2: 2}

    def test_edge_indexing(self):
        idx = [edge_index(i, j) for i in range(1, 5) for j in range(i)]
        assert idx == list(range(num_edges(4)))


class TestRelaxationParams:
    def test_uniform_probs(self):
        r = RelaxationParams.uniform(chain_spec(3))
        for p in r.op_probs() + r.edge_probs():
            assert abs(p.sum() - 1) < 1e-9
            assert np.all((p > 0) & (p < 1)) or len(p) == 1

    def test_uniform_discretize_ties(self):
        arch, ties = RelaxationParams.uniform(chain_spec(2)).discretize()
        assert arch == ChainArch(((0, 0), (0, 0)))
        assert ties == ["node 1 op", "node 2 predecessor", "node 2 op"]

    def test_argmax(self):
        r = RelaxationParams([np.array([0, 0, 1.0, 0]), np.array([0, 0, 0, 2.0])], [np.zeros(1), np.array([0.0, 1.0])])
        assert r.discretize() == (ChainArch(((0, 2), (1, 3))), [])
