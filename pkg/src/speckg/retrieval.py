"""Graph retrieval: similarity seeding, personalized PageRank, adaptive
expansion by marginal gain, and anchor-compatibility filtering.

The expansion loop grows the accepted passage set from a ranked candidate
list until the marginal gain of new evidence (cosine distance between
summaries of the context with and without the increment) drops to
the threshold, the budget is reached, or candidates run out.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import prompts
from .errors import EmptyGraph, InvalidInput
from .gateway import EmbeddingVector, Gateway
from .ingest import SemanticAnchor
from .kg import SpecGraph

logger = logging.getLogger(__name__)


@dataclass
class PPRParams:
    damping: float = 0.85
    tol: float = 1e-8
    max_iters: int = 100
    seed_weights: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.damping < 1.0):
            raise InvalidInput("damping must lie in (0, 1)")
        if self.tol <= 0:
            raise InvalidInput("tol must be positive")
        if self.max_iters <= 0:
            raise InvalidInput("max_iters must be positive")
        if self.seed_weights:
            weights = np.array(list(self.seed_weights.values()), dtype=np.float64)
            if np.any(weights < 0):
                raise InvalidInput("seed weights must be nonnegative")
            total = float(weights.sum())
            if not np.isclose(total, 1.0, atol=1e-9):
                raise InvalidInput(f"seed weights must sum to 1, got {total}")


@dataclass
class RetrievalState:
    query: str
    query_embedding: EmbeddingVector | None = None
    ranked_candidates: list[tuple[str, float]] = field(default_factory=list)
    accepted: list[str] = field(default_factory=list)  # ordered set S_t
    base_summary: str = ""
    cursor: int = 0
    mig_trace: list[float] = field(default_factory=list)
    warning: str | None = None


def seed(query: str, kg: SpecGraph, n_seeds: int, gateway: Gateway) -> dict[str, float]:
    """Personalization weights over the top-n most query-similar nodes.

    Similarities are shifted to nonnegative (w = sim - min(0, min sim)) and
    normalized to sum 1; an all-zero shift falls back to uniform weights.
    Ties rank by lexicographic node key.
    """
    if kg.embeddings is None or not kg.embeddings.keys:
        raise EmptyGraph("graph has no embedding index")
    query_vec = gateway.embed([query])[0].as_array()
    top = kg.embeddings.top_similar(query_vec, n_seeds)
    sims = np.array([score for _, score in top], dtype=np.float64)
    shifted = sims - min(0.0, float(sims.min()))
    total = float(shifted.sum())
    if total <= 0.0:
        shifted = np.ones_like(sims)
        total = float(shifted.sum())
    return {key: float(w / total) for (key, _), w in zip(top, shifted)}


def pagerank_scores(n_nodes: int, edges: Sequence[tuple[int, int, float]],
                    personalization: np.ndarray, damping: float = 0.85,
                    tol: float = 1e-8, max_iters: int = 100,
                    ) -> tuple[np.ndarray, bool]:
    """Random walk with restart on a weighted directed graph (sparse path).

    Fixed point of ``x = (1-d)·p + d·(Wᵀx + (dangling mass)·p)`` where W is
    the row-stochastic transition matrix; dangling nodes hand their mass back
    to the personalization vector, so scores always sum to 1. Returns the
    final iterate and a convergence flag (the best iterate comes back even
    when max_iters runs out).
    """
    if n_nodes <= 0:
        raise EmptyGraph("pagerank needs at least one node")
    p = np.asarray(personalization, dtype=np.float64)
    if p.shape != (n_nodes,) or np.any(p < 0) or not np.isclose(p.sum(), 1.0):
        raise InvalidInput("personalization must be a nonnegative distribution")

    if edges:
        rows = np.array([e[0] for e in edges])
        cols = np.array([e[1] for e in edges])
        weights = np.array([e[2] for e in edges], dtype=np.float64)
        if np.any(weights < 0):
            raise InvalidInput("edge weights must be nonnegative")
        adj = sp.csr_matrix((weights, (rows, cols)), shape=(n_nodes, n_nodes))
    else:
        adj = sp.csr_matrix((n_nodes, n_nodes))

    out_weight = np.asarray(adj.sum(axis=1)).ravel()
    dangling = out_weight == 0.0
    inv = np.zeros(n_nodes)
    inv[~dangling] = 1.0 / out_weight[~dangling]
    transition = sp.diags(inv) @ adj  # row-stochastic on non-dangling rows

    x = p.copy()
    converged = False
    for _ in range(max_iters):
        dangling_mass = float(x[dangling].sum())
        x_next = (1.0 - damping) * p + damping * (transition.T @ x + dangling_mass * p)
        if float(np.abs(x_next - x).sum()) < tol:
            x = x_next
            converged = True
            break
        x = x_next
    return x, converged


def ppr(kg: SpecGraph, params: PPRParams) -> tuple[dict[str, float], bool]:
    """Personalized PageRank over the whole graph; edges walk both ways."""
    keys = kg.all_node_keys()
    if not keys:
        raise EmptyGraph("graph has no nodes")
    index = {key: i for i, key in enumerate(keys)}

    p = np.zeros(len(keys))
    for key, weight in params.seed_weights.items():
        if key not in index:
            raise InvalidInput(f"seed weight for unknown node {key!r}")
        p[index[key]] = weight
    if p.sum() <= 0:
        p[:] = 1.0 / len(keys)

    edges = []
    for edge in kg.edges:
        if edge.src not in index or edge.dst not in index:
            continue
        i, j = index[edge.src], index[edge.dst]
        edges.append((i, j, 1.0))
        edges.append((j, i, 1.0))

    scores, converged = pagerank_scores(len(keys), edges, p, params.damping,
                                        params.tol, params.max_iters)
    if not converged:
        logger.warning("pagerank did not converge within %d iterations", params.max_iters)
    return {key: float(scores[index[key]]) for key in keys}, converged


def rank_passages(scores: dict[str, float]) -> list[tuple[str, float]]:
    """Passage nodes ordered by score descending, lexicographic id tiebreak."""
    items = [(key[2:], score) for key, score in scores.items() if key.startswith("p:")]
    return sorted(items, key=lambda kv: (-kv[1], kv[0]))


Summarizer = Callable[[str, list[str]], str]
Embedder = Callable[[str], np.ndarray]


def marginal_gain(base_vec: np.ndarray, new_vec: np.ndarray) -> float:
    """Cosine distance between two unit summary embeddings, clamped to [0, 2]."""
    gain = 1.0 - float(np.dot(base_vec, new_vec))
    return min(2.0, max(0.0, gain))


def adaptive_expand(state: RetrievalState, tau: float, k0: int, delta_k: int,
                    k_max: int, summarize: Summarizer, embed: Embedder) -> RetrievalState:
    """Iterative context expansion over ``state.ranked_candidates``.

    Starts from the top-k0 candidates; each round takes the next delta_k,
    summarizes the context with and without them, and accepts the increment
    only while the gain stays above tau. Hard stops: the accepted set
    reaching k_max, or candidates running out. Summarization failures abort
    the round and return the set accepted so far with a warning.
    """
    if k0 < 1 or delta_k < 1:
        raise InvalidInput("k0 and delta_k must be >= 1")
    ids = [pid for pid, _ in state.ranked_candidates]
    state.accepted = ids[:min(k0, k_max, len(ids))]
    state.cursor = len(state.accepted)
    state.mig_trace = []

    while len(state.accepted) < k_max and state.cursor < len(ids):
        take = min(delta_k, k_max - len(state.accepted), len(ids) - state.cursor)
        increment = ids[state.cursor:state.cursor + take]
        try:
            base = summarize(state.query, state.accepted)
            expanded = summarize(state.query, state.accepted + increment)
            gain = marginal_gain(embed(base), embed(expanded))
        except Exception as exc:
            state.warning = f"summarization failed: {exc}"
            logger.warning("expansion aborted for %r: %s", state.query, exc)
            return state
        state.base_summary = base
        state.mig_trace.append(gain)
        if gain > tau:
            state.accepted.extend(increment)
            state.cursor += take
        else:
            break
    return state


@dataclass
class FilterResult:
    kept: list[str]
    removed: list[str]
    bypassed: bool = False


def anchor_compatible(candidate: SemanticAnchor | None, target: SemanticAnchor,
                      kg: SpecGraph, keep_unanchored: bool) -> bool:
    if candidate is None:
        return keep_unanchored
    if candidate.anchor_type != target.anchor_type:
        return False
    return kg.resolve_entity(candidate.entity) == kg.resolve_entity(target.entity)


def csa_filter(candidates: Sequence[str], target: SemanticAnchor, kg: SpecGraph,
               keep_unanchored: bool = True) -> FilterResult:
    """Keep candidates whose anchors match the target intent exactly.

    Match = same anchor type and same canonical entity after alias
    resolution. Unanchored passages pass only when ``keep_unanchored`` is
    set. Fail-open: when filtering would empty the set, the unfiltered
    candidates come back with the bypass flag raised so the event stays
    auditable.
    """
    kept, removed = [], []
    for pid in candidates:
        passage = kg.passages.get(pid)
        anchor = passage.anchor if passage else None
        if anchor is not None or passage is not None:
            ok = anchor_compatible(anchor, target, kg, keep_unanchored)
        else:
            ok = False
        (kept if ok else removed).append(pid)
    if not kept and removed:
        return FilterResult(kept=list(candidates), removed=[], bypassed=True)
    return FilterResult(kept=kept, removed=removed)


@dataclass
class RetrievalRound:
    """Audit record of one acquire round."""

    sub_query: str
    target_anchor: dict
    ranked: list[tuple[str, float]]
    accepted: list[str]
    filtered: list[str]
    removed: list[str]
    mig_trace: list[float]
    bypassed: bool
    ppr_converged: bool = True
    warning: str | None = None

    def to_dict(self) -> dict:
        return {
            "sub_query": self.sub_query,
            "target_anchor": self.target_anchor,
            "ranked": [[pid, score] for pid, score in self.ranked],
            "accepted": self.accepted,
            "filtered": self.filtered,
            "removed": self.removed,
            "mig_trace": self.mig_trace,
            "bypassed": self.bypassed,
            "ppr_converged": self.ppr_converged,
            "warning": self.warning,
        }


def retrieve(query: str, target: SemanticAnchor, kg: SpecGraph, gateway: Gateway,
             cfg) -> RetrievalRound:
    """Full pipeline for one sub-query: seed → pagerank → expand → filter."""
    weights = seed(query, kg, cfg.retrieval.n_seeds, gateway)
    params = PPRParams(damping=cfg.ppr.damping, tol=cfg.ppr.tol,
                       max_iters=cfg.ppr.max_iters, seed_weights=weights)
    scores, converged = ppr(kg, params)
    state = RetrievalState(query=query,
                           query_embedding=gateway.embed([query])[0],
                           ranked_candidates=rank_passages(scores))

    def summarize(q: str, passage_ids: list[str]) -> str:
        payload = [{"passage_id": pid, "text": kg.passages[pid].text}
                   for pid in passage_ids]
        return gateway.chat(prompts.summarize(q, payload))

    def embed(text: str) -> np.ndarray:
        return gateway.embed([text])[0].as_array()

    adaptive_expand(state, cfg.retrieval.tau, cfg.retrieval.k0,
                    cfg.retrieval.delta_k, cfg.retrieval.k_max, summarize, embed)
    result = csa_filter(state.accepted, target, kg,
                        keep_unanchored=cfg.filter.fallback_keep_unanchored)
    return RetrievalRound(
        sub_query=query,
        target_anchor=target.to_dict(),
        ranked=list(state.ranked_candidates),
        accepted=list(state.accepted),
        filtered=result.kept,
        removed=result.removed,
        mig_trace=list(state.mig_trace),
        bypassed=result.bypassed,
        ppr_converged=converged,
        warning=state.warning,
    )
