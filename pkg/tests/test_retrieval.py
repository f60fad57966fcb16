import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speckg import retrieval
from speckg.errors import EmptyGraph, InvalidInput
from speckg.gateway import EmbeddingVector
from speckg.ingest import Passage, SemanticAnchor
from speckg.kg import EmbeddingIndex, SpecGraph
from speckg.retrieval import (PPRParams, RetrievalState, adaptive_expand,
                              csa_filter, marginal_gain, pagerank_scores, ppr,
                              rank_passages, seed)


def dense_pagerank(n, edges, p, damping, iters=3000, tol=1e-13):
    """Independent oracle: explicit Google-matrix power iteration (dense)."""
    w = np.zeros((n, n))
    for i, j, weight in edges:
        w[i, j] += weight
    out = w.sum(axis=1)
    m = np.zeros((n, n))
    for i in range(n):
        if out[i] > 0:
            m[i] = w[i] / out[i]
    dangling = (out == 0).astype(float)
    google = damping * (m + np.outer(dangling, p)) + (1 - damping) * np.outer(np.ones(n), p)
    x = np.array(p, dtype=float)
    for _ in range(iters):
        nxt = google.T @ x
        if np.abs(nxt - x).sum() < tol:
            return nxt
        x = nxt
    return x


class FakeEmbedGateway:
    """Gateway double returning preset vectors for preset texts."""

    def __init__(self, table, dim):
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}
        self.dim = dim
        self.embedding_model = "fake"

    def embed(self, texts):
        out = []
        for t in texts:
            raw = self.table[t]
            unit = raw / np.linalg.norm(raw)
            out.append(EmbeddingVector(values=tuple(unit), dim=self.dim, model_id="fake"))
        return out


def toy_graph_with_embeddings(table):
    graph = SpecGraph()
    keys, rows = [], []
    for key, vec in sorted(table.items()):
        pid = key
        graph.passages[pid] = Passage(passage_id=pid, doc_id="t", section_path=[],
                                      text=f"text of {pid}", sentence_spans=[],
                                      token_estimate=1)
        keys.append(f"p:{pid}")
        arr = np.asarray(vec, dtype=float)
        rows.append(arr / np.linalg.norm(arr))
    graph.embeddings = EmbeddingIndex(keys, np.stack(rows).astype(np.float32), "fake")
    return graph


class TestSeed:
    def test_identical_query_gets_max_weight(self):
        table = {"a": [1.0, 0.0, 0.0], "b": [0.0, 1.0, 0.0], "c": [0.6, 0.8, 0.0]}
        graph = toy_graph_with_embeddings(table)
        gw = FakeEmbedGateway({"q": [1.0, 0.0, 0.0]}, dim=3)
        weights = seed("q", graph, n_seeds=3, gateway=gw)
        assert max(weights, key=weights.get) == "p:a"

    def test_n_seeds_clamped_to_node_count(self):
        graph = toy_graph_with_embeddings({"a": [1, 0], "b": [0, 1]})
        gw = FakeEmbedGateway({"q": [1, 0]}, dim=2)
        weights = seed("q", graph, n_seeds=99, gateway=gw)
        assert len(weights) == 2

    def test_hand_computed_normalization(self):
        # sims: a=1.0, b=0.0, c=0.6 -> min(0, 0.0)=0 shift -> weights s/sum
        table = {"a": [1.0, 0.0], "b": [0.0, 1.0], "c": [0.6, 0.8]}
        graph = toy_graph_with_embeddings(table)
        gw = FakeEmbedGateway({"q": [1.0, 0.0]}, dim=2)
        weights = seed("q", graph, n_seeds=3, gateway=gw)
        total = 1.0 + 0.0 + 0.6
        assert weights["p:a"] == pytest.approx(1.0 / total, abs=1e-6)
        assert weights["p:b"] == pytest.approx(0.0, abs=1e-6)
        assert weights["p:c"] == pytest.approx(0.6 / total, abs=1e-6)
        assert sum(weights.values()) == pytest.approx(1.0, abs=1e-9)

    def test_negative_similarities_shifted_nonnegative(self):
        table = {"a": [1.0, 0.0], "b": [-1.0, 0.0]}
        graph = toy_graph_with_embeddings(table)
        gw = FakeEmbedGateway({"q": [1.0, 0.0]}, dim=2)
        weights = seed("q", graph, n_seeds=2, gateway=gw)
        assert all(w >= 0 for w in weights.values())
        assert sum(weights.values()) == pytest.approx(1.0)

    def test_empty_index_rejected(self):
        graph = SpecGraph()
        graph.embeddings = EmbeddingIndex([], np.zeros((0, 0), dtype=np.float32), "fake")
        gw = FakeEmbedGateway({"q": [1.0]}, dim=1)
        with pytest.raises(EmptyGraph):
            seed("q", graph, 3, gw)


class TestPagerankCore:
    def test_singleton_scores_one(self):
        scores, converged = pagerank_scores(1, [], np.array([1.0]))
        assert converged
        assert scores[0] == pytest.approx(1.0, abs=1e-12)

    def test_symmetric_two_node_half_half(self):
        edges = [(0, 1, 1.0), (1, 0, 1.0)]
        scores, _ = pagerank_scores(2, edges, np.array([0.5, 0.5]))
        assert scores[0] == pytest.approx(0.5, abs=1e-9)
        assert scores[1] == pytest.approx(0.5, abs=1e-9)

    def test_mass_conserved_with_dangling_nodes(self):
        edges = [(0, 1, 1.0)]  # node 1 dangles
        p = np.array([0.7, 0.3])
        scores, _ = pagerank_scores(2, edges, p, tol=1e-12, max_iters=500)
        assert scores.sum() == pytest.approx(1.0, abs=1e-10)

    def test_matches_dense_oracle_on_random_graphs(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            n = int(rng.integers(2, 21))
            density = rng.uniform(0.05, 0.4)
            edges = [(i, j, float(rng.uniform(0.5, 2.0)))
                     for i in range(n) for j in range(n)
                     if i != j and rng.random() < density]
            p = rng.uniform(0.0, 1.0, n)
            p = p / p.sum()
            sparse, _ = pagerank_scores(n, edges, p, damping=0.85,
                                        tol=1e-12, max_iters=2000)
            dense = dense_pagerank(n, edges, p, 0.85)
            assert np.abs(sparse - dense).sum() < 1e-6

    def test_matches_networkx_when_available(self):
        nx = pytest.importorskip("networkx")
        rng = np.random.default_rng(3)
        for _ in range(10):
            n = int(rng.integers(2, 15))
            edges = [(i, j, float(rng.uniform(0.5, 2.0)))
                     for i in range(n) for j in range(n)
                     if i != j and rng.random() < 0.3]
            p = rng.uniform(0.1, 1.0, n)
            p = p / p.sum()
            ours, _ = pagerank_scores(n, edges, p, damping=0.85,
                                      tol=1e-12, max_iters=5000)
            g = nx.DiGraph()
            g.add_nodes_from(range(n))
            for i, j, w in edges:
                g.add_edge(i, j, weight=w)
            theirs = nx.pagerank(g, alpha=0.85, weight="weight",
                                 personalization={i: p[i] for i in range(n)},
                                 tol=1e-12, max_iter=5000)
            assert sum(abs(ours[i] - theirs[i]) for i in range(n)) < 1e-9

    def test_invalid_personalization_rejected(self):
        with pytest.raises(InvalidInput):
            pagerank_scores(2, [], np.array([0.5, 0.2]))

    def test_params_validation(self):
        with pytest.raises(InvalidInput):
            PPRParams(damping=1.5)
        with pytest.raises(InvalidInput):
            PPRParams(tol=0)
        with pytest.raises(InvalidInput):
            PPRParams(seed_weights={"a": 0.4, "b": 0.4})


class TestPPROverGraph:
    def test_scores_sum_to_one(self, graph):
        keys = graph.all_node_keys()
        params = PPRParams(seed_weights={keys[0]: 1.0}, tol=1e-10, max_iters=500)
        scores, converged = ppr(graph, params)
        assert converged
        assert sum(scores.values()) == pytest.approx(1.0, abs=1e-8)

    def test_rank_passages_orders_by_score_then_id(self):
        scores = {"p:b": 0.5, "p:a": 0.5, "p:c": 0.9, "e:x": 1.0}
        ranked = rank_passages(scores)
        assert ranked == [("c", 0.9), ("a", 0.5), ("b", 0.5)]


class TestAdaptiveExpand:
    def make_state(self, n=40):
        return RetrievalState(
            query="q",
            ranked_candidates=[(f"p{i:02d}", 1.0 - i * 0.01) for i in range(n)],
        )

    @staticmethod
    def scripted(summaries_gains):
        """Return (summarize, embed) where embed distances follow the script:
        summaries_gains[t] is the gain for expansion attempt t."""
        state = {"t": 0}

        def summarize(query, ids):
            return "|".join(ids)

        def embed(text):
            return text

        def gain(base, new):
            g = summaries_gains[state["t"]] if state["t"] < len(summaries_gains) else 0.0
            state["t"] += 1
            return g

        return summarize, embed, gain

    def run_expand(self, gains, tau=0.05, k0=5, delta_k=5, k_max=50, n=40):
        state = self.make_state(n)
        summarize, embed, gain = self.scripted(gains)
        real_marginal = retrieval.marginal_gain
        retrieval.marginal_gain = lambda a, b: gain(a, b)
        try:
            adaptive_expand(state, tau, k0, delta_k, k_max, summarize, embed)
        finally:
            retrieval.marginal_gain = real_marginal
        return state

    def test_identical_summaries_terminate_with_k0(self):
        state = self.make_state()
        summarize = lambda q, ids: "same summary every time"
        embed = lambda text: np.array([1.0, 0.0])
        adaptive_expand(state, tau=0.05, k0=5, delta_k=5, k_max=50,
                        summarize=summarize, embed=embed)
        assert len(state.accepted) == 5
        assert state.mig_trace == [0.0]

    def test_exactly_n_highgain_rounds_accepted(self):
        state = self.run_expand([0.5, 0.5, 0.0])
        # two accepted expansions then a zero-gain round: |S| = k0 + 2*delta_k
        assert len(state.accepted) == 5 + 2 * 5
        assert len(state.mig_trace) == 3

    def test_kmax_equal_k0_returns_immediately(self):
        state = self.make_state()
        called = {"n": 0}

        def summarize(q, ids):
            called["n"] += 1
            return "s"

        adaptive_expand(state, tau=0.05, k0=5, delta_k=5, k_max=5,
                        summarize=summarize, embed=lambda t: np.array([1.0]))
        assert len(state.accepted) == 5
        assert state.mig_trace == []
        assert called["n"] == 0

    def test_hard_stop_never_exceeds_kmax(self):
        state = self.run_expand([0.5] * 100, k_max=12)
        assert len(state.accepted) == 12

    def test_candidates_exhausted_stops(self):
        state = self.run_expand([0.5] * 100, n=8)
        assert len(state.accepted) == 8

    def test_monotonicity_growth_iff_gain_above_tau(self):
        gains = [0.5, 0.01, 0.7]
        state = self.run_expand(gains, tau=0.05)
        # second attempt fails the threshold, loop stops there
        assert len(state.mig_trace) == 2
        assert len(state.accepted) == 5 + 5

    def test_round_bound(self):
        k0, delta_k, k_max = 5, 5, 50
        state = self.run_expand([0.5] * 100, k0=k0, delta_k=delta_k, k_max=k_max, n=100)
        import math
        assert len(state.mig_trace) <= math.ceil((k_max - k0) / delta_k) + 1

    def test_summarizer_failure_aborts_with_warning(self):
        state = self.make_state()

        def summarize(q, ids):
            raise RuntimeError("model down")

        adaptive_expand(state, tau=0.05, k0=5, delta_k=5, k_max=50,
                        summarize=summarize, embed=lambda t: np.array([1.0]))
        assert len(state.accepted) == 5
        assert state.warning is not None


class TestMarginalGain:
    def test_identical_embeddings_zero_within_1e9(self):
        v = np.array([0.6, 0.8])
        assert marginal_gain(v, v) <= 1e-9

    @given(st.lists(st.floats(-1, 1), min_size=4, max_size=4),
           st.lists(st.floats(-1, 1), min_size=4, max_size=4))
    @settings(max_examples=200, deadline=None)
    def test_bounded_zero_two_for_unit_vectors(self, a, b):
        va, vb = np.array(a), np.array(b)
        if np.linalg.norm(va) < 1e-6 or np.linalg.norm(vb) < 1e-6:
            return
        va, vb = va / np.linalg.norm(va), vb / np.linalg.norm(vb)
        assert 0.0 <= marginal_gain(va, vb) <= 2.0


def anchored_graph():
    graph = SpecGraph()

    def add(pid, anchor):
        graph.passages[pid] = Passage(passage_id=pid, doc_id="t", section_path=[],
                                      text=pid, sentence_spans=[], token_estimate=1,
                                      anchor=anchor)

    add("proc-fsm", SemanticAnchor("procedural", "fsm"))
    add("decl-fsm", SemanticAnchor("declarative", "fsm"))
    add("proc-ctrl", SemanticAnchor("procedural", "ctrl register"))
    add("proc-ctrl-alias", SemanticAnchor("procedural", "ctrl reg"))
    add("unanchored", None)
    graph.alias_map = {"ctrl reg": "ctrl register"}
    return graph


class TestAnchorFilter:
    def test_casefold_match_kept(self):
        graph = anchored_graph()
        result = csa_filter(["proc-fsm"], SemanticAnchor("procedural", "FSM"), graph)
        assert result.kept == ["proc-fsm"]
        assert not result.bypassed

    def test_type_mismatch_removed(self):
        graph = anchored_graph()
        result = csa_filter(["decl-fsm", "proc-fsm"],
                            SemanticAnchor("procedural", "fsm"), graph)
        assert result.kept == ["proc-fsm"]
        assert result.removed == ["decl-fsm"]

    def test_alias_resolution_matches_variants(self):
        graph = anchored_graph()
        result = csa_filter(["proc-ctrl-alias"],
                            SemanticAnchor("procedural", "CTRL register"), graph)
        assert result.kept == ["proc-ctrl-alias"]

    def test_unanchored_kept_only_with_fallback(self):
        graph = anchored_graph()
        keep = csa_filter(["unanchored", "proc-fsm"],
                          SemanticAnchor("procedural", "fsm"), graph,
                          keep_unanchored=True)
        assert keep.kept == ["unanchored", "proc-fsm"]
        drop = csa_filter(["unanchored", "proc-fsm"],
                          SemanticAnchor("procedural", "fsm"), graph,
                          keep_unanchored=False)
        assert drop.kept == ["proc-fsm"]

    def test_fail_open_when_everything_mismatches(self):
        graph = anchored_graph()
        result = csa_filter(["decl-fsm", "proc-ctrl"],
                            SemanticAnchor("procedural", "baud register"), graph,
                            keep_unanchored=False)
        assert result.bypassed
        assert result.kept == ["decl-fsm", "proc-ctrl"]
        assert result.removed == []

    def test_filter_soundness_removed_provably_fail(self):
        graph = anchored_graph()
        target = SemanticAnchor("procedural", "fsm")
        result = csa_filter(list(graph.passages), target, graph, keep_unanchored=False)
        for pid in result.removed:
            anchor = graph.passages[pid].anchor
            assert anchor is None or not retrieval.anchor_compatible(
                anchor, target, graph, keep_unanchored=False)
        for pid in result.kept:
            anchor = graph.passages[pid].anchor
            assert retrieval.anchor_compatible(anchor, target, graph,
                                               keep_unanchored=False)
