import numpy as np
import pytest

from uavgeo.errors import InsufficientEdgesError
from uavgeo.sampling import Batch, PairGraph, check_batch, epoch_seed, sample_epoch, strict_sample_epoch


def graph(edges):
    return PairGraph([(q, r, 0.5) for q, r in edges])


def random_graph(rng, max_edges=200):
    nq = int(rng.integers(2, 60))
    nr = int(rng.integers(2, 60))
    m = int(rng.integers(1, max_edges + 1))
    pairs = {(f"q{rng.integers(nq)}", f"r{rng.integers(nr)}") for _ in range(m)}
    return PairGraph([(q, r, float(rng.random())) for q, r in sorted(pairs)])


class TestPairGraph:
    def test_rejects_duplicates(self):
        with pytest.raises(ValueError):
            graph([("a", "x"), ("a", "x")])

    def test_neighbours(self):
        g = graph([("a", "x"), ("a", "y"), ("b", "y")])
        assert g.ref_neighbors("a") == {"x", "y"}
        assert g.query_neighbors("y") == {"a", "b"}
        assert g.has_edge("b", "y") and not g.has_edge("b", "x")


class TestHandEnumerated:
    def test_perfect_matching_uses_every_edge(self):
        g = graph([("a", "w"), ("b", "x"), ("c", "y"), ("d", "z")])
        batches = sample_epoch(g, 2, seed=0)
        assert len(batches) == 2
        assert sorted(p[:2] for b in batches for p in b.pairs) == sorted(e[:2] for e in g.edges)

    def test_blocked_edges_return_after_batch(self):
        # Every batch needs one edge of a and one of b; all four edges get used
        # only if an edge blocked in batch 1 is picked up again in batch 2.
        g = graph([("a", "w"), ("a", "x"), ("b", "y"), ("b", "z")])
        for seed in range(10):
            batches = sample_epoch(g, 2, seed)
            assert len(batches) == 2
            assert all(sorted(b.query_ids) == ["a", "b"] for b in batches)

    def test_star_cannot_fill_batch(self):
        g = graph([("a", "w"), ("a", "x"), ("a", "y")])
        with pytest.raises(InsufficientEdgesError):
            sample_epoch(g, 2, 0)

    def test_partial_batch_dropped(self):
        g = graph([("a", "w"), ("b", "x"), ("c", "y")])
        batches = sample_epoch(g, 2, 0)
        assert len(batches) == 1 and len(batches[0]) == 2

    def test_strict_complete_bipartite_is_infeasible(self):
        g = graph([("a", "x"), ("a", "y"), ("b", "x"), ("b", "y")])
        assert len(sample_epoch(g, 2, 0)) == 2
        with pytest.raises(InsufficientEdgesError):
            strict_sample_epoch(g, 2, 0)

    def test_strict_excludes_cross_edges(self):
        # a-x, b-y, plus a-y. Strict batches may not pair {a-x, b-y}.
        g = graph([("a", "x"), ("b", "y"), ("a", "y"), ("c", "z")])
        for seed in range(20):
            for b in strict_sample_epoch(g, 2, seed):
                assert check_batch(g, b, strict=True)
                assert {p[:2] for p in b.pairs} != {("a", "x"), ("b", "y")}

    def test_single_edge(self):
        with pytest.raises(InsufficientEdgesError):
            sample_epoch(graph([("q1", "r1")]), 2, 0)

    def test_shared_query_edges_never_co_occur(self):
        g = graph([("q1", "r1"), ("q1", "r2"), ("q2", "r3")])
        for seed in range(20):
            (only,) = sample_epoch(g, 2, seed)
            assert ("q2", "r3") in {p[:2] for p in only.pairs}
            assert sorted(only.query_ids) == ["q1", "q2"]

    def test_strict_shared_reference_infeasible(self):
        g = graph([("q1", "r1"), ("q1", "r2"), ("q2", "r2")])
        with pytest.raises(InsufficientEdgesError):
            strict_sample_epoch(g, 2, 0)

    @pytest.mark.parametrize("strict", [False, True])
    def test_diagonal_graph_is_one_batch(self, strict):
        g = graph([(f"q{i}", f"r{i}") for i in range(4)])
        (only,) = sample_epoch(g, 4, 3, strict)
        assert sorted(p[:2] for p in only.pairs) == sorted(e[:2] for e in g.edges)

    def test_batch_size_validation(self):
        with pytest.raises(ValueError):
            sample_epoch(graph([("a", "x")]), 1, 0)
        with pytest.raises(InsufficientEdgesError):
            sample_epoch(PairGraph([]), 2, 0)


class TestProperties:
    @pytest.mark.parametrize("strict", [False, True])
    def test_random_graphs(self, strict):
        rng = np.random.default_rng(7)
        for _ in range(150):
            g = random_graph(rng)
            b = int(rng.integers(2, 6))
            try:
                batches = sample_epoch(g, b, int(rng.integers(2**32)), strict)
            except InsufficientEdgesError:
                continue
            used = [p[:2] for batch in batches for p in batch.pairs]
            assert len(used) == len(set(used)), "edge reused within an epoch"
            for batch in batches:
                assert len(batch) == b
                assert check_batch(g, batch, strict)

    def test_seed_reproducible(self):
        g = random_graph(np.random.default_rng(1), 200)
        a = sample_epoch(g, 4, 99)
        assert a == sample_epoch(g, 4, 99)
        assert a != sample_epoch(g, 4, 100)

    def test_epoch_seeds_differ(self):
        seeds = {epoch_seed(3, e) for e in range(50)}
        assert len(seeds) == 50
        assert epoch_seed(3, 0) == epoch_seed(3, 0)


def test_check_batch_detects_violations():
    g = graph([("a", "x"), ("a", "y"), ("b", "y")])
    assert not check_batch(g, Batch((("a", "x", 0.5), ("a", "y", 0.5))))
    assert check_batch(g, Batch((("a", "x", 0.5), ("b", "y", 0.5))))
    assert not check_batch(g, Batch((("a", "x", 0.5), ("b", "y", 0.5))), strict=True)
