"""Knowledge graph over a specification corpus.

Sentence parses become four categories of triples:

* backbone: the central action or definition of an entity
* auxiliary: conditional/temporal clauses qualifying a backbone action
* linking: backbone-to-auxiliary dependency (endpoints are reified
  statement nodes so the link is addressable)
* normalization: alias edges mapping entity surface variants onto their
  canonical forms

The assembled graph holds entity, passage, and statement nodes plus a flat
typed edge list and an exact-scan embedding index. Node keys are prefixed
("e:", "p:", "s:") so the three key spaces cannot collide.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (CorpusInconsistent, CorruptStore, EmptyGraph,
                     IncompatibleFormat, InvalidInput, NormalizationCycle)
from .gateway import Gateway
from .ingest import Corpus, Passage, SemanticIR
from .text import canonical_entity

FORMAT_VERSION = 1

BACKBONE = "backbone"
AUXILIARY = "auxiliary"
LINKING = "linking"
NORMALIZATION = "normalization"
CATEGORIES = (BACKBONE, AUXILIARY, LINKING, NORMALIZATION)

_LITERAL_RE = re.compile(r"^(0x[0-9a-f]+|[0-9]+(\.[0-9]+)?|true|false|high|low|\".*\")$")


def entity_key(canonical: str) -> str:
    return f"e:{canonical}"


def passage_key(passage_id: str) -> str:
    return f"p:{passage_id}"


def statement_key(triple_id: str) -> str:
    return f"s:{triple_id}"


def is_literal(value: str) -> bool:
    return not value or _LITERAL_RE.match(value.strip().lower()) is not None


@dataclass(frozen=True)
class Triple:
    triple_id: str
    category: str
    subject: str          # canonical entity, or a triple_id for linking triples
    predicate: str
    object: str           # canonical entity, literal, or triple_id
    object_is_entity: bool
    source: str           # sentence_id

    def to_dict(self) -> dict:
        return {
            "triple_id": self.triple_id,
            "category": self.category,
            "subject": self.subject,
            "predicate": self.predicate,
            "object": self.object,
            "object_is_entity": self.object_is_entity,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Triple":
        return cls(**data)


def make_triple(category: str, subject: str, predicate: str, obj: str,
                source: str, object_is_entity: bool) -> Triple:
    if category not in CATEGORIES:
        raise InvalidInput(f"unknown triple category {category!r}")
    blob = f"{category}|{subject}|{predicate}|{obj}|{source}"
    tid = hashlib.sha256(blob.encode("utf-8")).hexdigest()[:32]
    return Triple(tid, category, subject, predicate, obj, object_is_entity, source)


@dataclass(frozen=True)
class Edge:
    kind: str  # mention | subject | object | link | alias
    src: str
    dst: str


# --- triple extraction ---------------------------------------------------------

def _aux_triple(clause: str, source: str, suffix: str) -> Triple:
    """Clause "reset asserted" becomes (reset, asserted-when, true).

    The final token is read as the state predicate, the rest as the entity;
    single-token clauses fall back to the "active" predicate.
    """
    words = clause.split()
    if len(words) >= 2:
        entity = canonical_entity(" ".join(words[:-1]))
        state = words[-1].lower().strip(",.;")
    else:
        entity = canonical_entity(clause)
        state = "active"
    return make_triple(AUXILIARY, entity, f"{state}-{suffix}", "true", source,
                       object_is_entity=False)


def extract_triples(ir: SemanticIR, alias_map: dict[str, str] | None = None) -> list[Triple]:
    """Triples for one sentence parse.

    Declarative parses yield one backbone per attribute; procedural parses
    yield one backbone for the action, one auxiliary per trigger/condition
    clause, and one linking triple per (backbone, auxiliary) pair. When an
    ``alias_map`` is supplied, entities of this parse that it covers also
    yield normalization triples.
    """
    triples: list[Triple] = []
    if ir.kind == "declarative":
        subject = canonical_entity(ir.central_entity)
        for attr in ir.attributes:
            value = attr["value"].strip()
            literal = is_literal(value)
            obj = value if literal else canonical_entity(value)
            triples.append(make_triple(BACKBONE, subject, attr["name"], obj,
                                       ir.sentence_id, object_is_entity=not literal))
    else:
        subject = canonical_entity(ir.action["subject"])
        obj_raw = ir.action.get("object", "").strip()
        if not obj_raw:
            obj, literal = "true", True
        else:
            literal = is_literal(obj_raw)
            obj = obj_raw if literal else canonical_entity(obj_raw)
        backbone = make_triple(BACKBONE, subject, ir.action["verb"], obj,
                               ir.sentence_id, object_is_entity=not literal)
        triples.append(backbone)
        aux: list[Triple] = []
        if ir.trigger:
            aux.append(_aux_triple(ir.trigger, ir.sentence_id, "when"))
        if ir.condition:
            aux.append(_aux_triple(ir.condition, ir.sentence_id, "if"))
        triples.extend(aux)
        for a in aux:
            triples.append(make_triple(LINKING, backbone.triple_id, "qualified_by",
                                       a.triple_id, ir.sentence_id,
                                       object_is_entity=False))

    if alias_map:
        seen = set()
        for entity in _triple_entities(triples):
            target = alias_map.get(entity)
            if target and entity not in seen:
                seen.add(entity)
                triples.append(make_triple(NORMALIZATION, entity, "canonical_form",
                                           target, ir.sentence_id,
                                           object_is_entity=True))
    return triples


def _triple_entities(triples: Iterable[Triple]) -> list[str]:
    out = []
    for t in triples:
        if t.category in (BACKBONE, AUXILIARY):
            out.append(t.subject)
            if t.object_is_entity:
                out.append(t.object)
    return out


def _is_fragment(short: list[str], long: list[str]) -> bool:
    if len(short) >= len(long):
        return False
    for i in range(len(long) - len(short) + 1):
        if long[i:i + len(short)] == short:
            return True
    return False


def _abbreviates(token: str, full: str) -> bool:
    if token == full:
        return False
    if token.endswith("."):
        stem = token[:-1]
        return len(stem) >= 2 and full.startswith(stem)
    return len(token) >= 3 and len(token) < len(full) and full.startswith(token)


def _is_abbreviation(variant: list[str], full: list[str]) -> bool:
    if len(variant) != len(full):
        return False
    shorter = sum(len(t) for t in variant) < sum(len(t) for t in full)
    if not shorter:
        return False
    strict = False
    for a, b in zip(variant, full):
        if a == b:
            continue
        if _abbreviates(a, b):
            strict = True
        else:
            return False
    return strict


def compute_alias_map(entities: Iterable[str]) -> dict[str, str]:
    """Variant → canonical mapping over canonicalized corpus entities.

    A variant maps only when its target is unique: fragments (strict
    contiguous token subsequence of a longer entity) and abbreviations
    (token-wise shortened forms) with two or more plausible expansions are
    left alone to avoid false merges.
    """
    ents = sorted(set(entities))
    tokens = {e: e.split() for e in ents}
    aliases: dict[str, str] = {}
    for e in ents:
        targets = {
            other for other in ents
            if other != e
            and (_is_fragment(tokens[e], tokens[other])
                 or _is_abbreviation(tokens[e], tokens[other]))
        }
        if len(targets) == 1:
            aliases[e] = targets.pop()
    return aliases


def extract_corpus_triples(corpus: Corpus) -> list[Triple]:
    """Two-pass extraction: per-sentence triples, then corpus-wide aliases.

    Alias candidates are restricted to backbone subjects, the entities the
    document is about. One-off object phrases would otherwise swallow real
    entities through the fragment rule.
    """
    base: list[Triple] = []
    for ir in corpus.irs:
        base.extend(extract_triples(ir))
    subjects = [t.subject for t in base if t.category == BACKBONE]
    alias_map = compute_alias_map(subjects)
    triples: dict[str, Triple] = {t.triple_id: t for t in base}
    emitted: set[str] = set()
    for ir in corpus.irs:
        for t in extract_triples(ir, alias_map):
            if t.category == NORMALIZATION and t.subject not in emitted:
                emitted.add(t.subject)
                triples[t.triple_id] = t
    return list(triples.values())


# --- graph -----------------------------------------------------------------------

@dataclass
class EmbeddingIndex:
    keys: list[str]
    matrix: np.ndarray  # float32, unit rows
    model_id: str

    def top_similar(self, query: np.ndarray, n: int) -> list[tuple[str, float]]:
        if len(self.keys) == 0:
            raise EmptyGraph("embedding index is empty")
        scores = self.matrix.astype(np.float64) @ np.asarray(query, dtype=np.float64)
        order = sorted(range(len(self.keys)), key=lambda i: (-scores[i], self.keys[i]))
        return [(self.keys[i], float(scores[i])) for i in order[:n]]


@dataclass
class SpecGraph:
    passages: dict[str, Passage] = field(default_factory=dict)
    entities: set[str] = field(default_factory=set)
    statements: dict[str, Triple] = field(default_factory=dict)
    triples: dict[str, Triple] = field(default_factory=dict)
    edges: list[Edge] = field(default_factory=list)
    alias_map: dict[str, str] = field(default_factory=dict)
    embeddings: EmbeddingIndex | None = None

    def node_exists(self, key: str) -> bool:
        space, _, name = key.partition(":")
        if space == "e":
            return name in self.entities
        if space == "p":
            return name in self.passages
        if space == "s":
            return name in self.statements
        return False

    def all_node_keys(self) -> list[str]:
        return (
            [entity_key(e) for e in sorted(self.entities)]
            + [passage_key(p) for p in sorted(self.passages)]
            + [statement_key(s) for s in sorted(self.statements)]
        )

    def resolve_entity(self, surface: str) -> str:
        """Canonical entity after alias resolution through the normalization map."""
        key = canonical_entity(surface)
        seen = set()
        while key in self.alias_map and key not in seen:
            seen.add(key)
            key = self.alias_map[key]
        return key


def build_graph(corpus: Corpus, triples: list[Triple]) -> SpecGraph:
    """Assemble nodes and edges; raises CorpusInconsistent on dangling refs."""
    sentence_ids = {ir.sentence_id for ir in corpus.irs}
    kg = SpecGraph()
    for passage in corpus.passages:
        kg.passages[passage.passage_id] = passage

    by_id: dict[str, Triple] = {}
    for t in triples:
        if t.source not in sentence_ids:
            raise CorpusInconsistent(f"triple {t.triple_id} references unknown sentence {t.source!r}")
        by_id[t.triple_id] = t
    kg.triples = by_id

    edges: set[Edge] = set()
    for t in by_id.values():
        if t.category in (BACKBONE, AUXILIARY):
            kg.statements[t.triple_id] = t
            kg.entities.add(t.subject)
            edges.add(Edge("subject", entity_key(t.subject), statement_key(t.triple_id)))
            if t.object_is_entity:
                kg.entities.add(t.object)
                edges.add(Edge("object", statement_key(t.triple_id), entity_key(t.object)))
        elif t.category == NORMALIZATION:
            kg.entities.add(t.subject)
            kg.entities.add(t.object)
            edges.add(Edge("alias", entity_key(t.subject), entity_key(t.object)))

    for t in by_id.values():
        if t.category != LINKING:
            continue
        tb = kg.statements.get(t.subject)
        ta = kg.statements.get(t.object)
        if tb is None or ta is None:
            raise CorpusInconsistent(f"linking triple {t.triple_id} has a missing endpoint")
        if tb.category != BACKBONE or ta.category != AUXILIARY:
            raise CorpusInconsistent(
                f"linking triple {t.triple_id} must join backbone to auxiliary"
            )
        if tb.source != ta.source:
            raise CorpusInconsistent(
                f"linking triple {t.triple_id} joins statements from different sentences"
            )
        edges.add(Edge("link", statement_key(t.subject), statement_key(t.object)))

    # Mention edges: every entity referenced by a passage's parses touches it.
    ir_by_sentence = {ir.sentence_id: ir for ir in corpus.irs}
    for t in by_id.values():
        if t.category not in (BACKBONE, AUXILIARY):
            continue
        ir = ir_by_sentence.get(t.source)
        if ir is None:
            continue
        pid = ir.passage_id
        if pid not in kg.passages:
            raise CorpusInconsistent(f"IR {ir.sentence_id} references unknown passage {pid!r}")
        edges.add(Edge("mention", entity_key(t.subject), passage_key(pid)))
        if t.object_is_entity:
            edges.add(Edge("mention", entity_key(t.object), passage_key(pid)))

    kg.edges = sorted(edges, key=lambda e: (e.kind, e.src, e.dst))
    return kg


def apply_normalization(kg: SpecGraph) -> SpecGraph:
    """Merge alias-connected entities onto their canonical nodes.

    All incident edges are rehomed (never dropped, only deduplicated after
    rewriting); variant nodes disappear; the resolution map survives on the
    graph for anchor compatibility checks.
    """
    alias: dict[str, str] = {}
    for edge in kg.edges:
        if edge.kind == "alias":
            alias[edge.src[2:]] = edge.dst[2:]
    if not alias:
        return kg

    def resolve(node: str) -> str:
        path = [node]
        seen = {node}
        while path[-1] in alias:
            nxt = alias[path[-1]]
            if nxt in seen:
                raise NormalizationCycle(path + [nxt])
            seen.add(nxt)
            path.append(nxt)
        return path[-1]

    resolution = {variant: resolve(variant) for variant in alias}

    def rewrite(key: str) -> str:
        if key.startswith("e:") and key[2:] in resolution:
            return entity_key(resolution[key[2:]])
        return key

    new_edges: set[Edge] = set()
    for edge in kg.edges:
        if edge.kind == "alias":
            continue
        new_edges.add(Edge(edge.kind, rewrite(edge.src), rewrite(edge.dst)))
    kg.edges = sorted(new_edges, key=lambda e: (e.kind, e.src, e.dst))
    kg.entities = {resolution.get(e, e) for e in kg.entities}
    kg.alias_map.update(resolution)
    return kg


def compute_embeddings(kg: SpecGraph, gateway: Gateway) -> None:
    """Embed all passages (full text) and entities (canonical surface form)."""
    keys = [passage_key(p) for p in sorted(kg.passages)]
    texts = [kg.passages[p].text for p in sorted(kg.passages)]
    keys += [entity_key(e) for e in sorted(kg.entities)]
    texts += sorted(kg.entities)
    if not keys:
        kg.embeddings = EmbeddingIndex([], np.zeros((0, 0), dtype=np.float32),
                                       gateway.embedding_model)
        return
    vectors = gateway.embed(texts)
    matrix = np.stack([v.as_array() for v in vectors]).astype(np.float32)
    kg.embeddings = EmbeddingIndex(keys, matrix, gateway.embedding_model)


def check_integrity(kg: SpecGraph) -> None:
    """Full-scan structural assertions; raises CorpusInconsistent on violation."""
    for edge in kg.edges:
        for key in (edge.src, edge.dst):
            if not kg.node_exists(key):
                raise CorpusInconsistent(f"dangling edge endpoint {key!r} ({edge.kind})")
    for t in kg.triples.values():
        if t.category == LINKING:
            tb = kg.statements.get(t.subject)
            ta = kg.statements.get(t.object)
            if tb is None or ta is None or tb.category != BACKBONE or ta.category != AUXILIARY:
                raise CorpusInconsistent(f"linking triple {t.triple_id} endpoints invalid")
            if tb.source != ta.source:
                raise CorpusInconsistent(f"linking triple {t.triple_id} spans sentences")


def mention_components(kg: SpecGraph) -> int:
    """Connected components of the entity–passage mention subgraph."""
    parent: dict[str, str] = {}

    def find(x: str) -> str:
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    for e in kg.entities:
        find(entity_key(e))
    for p in kg.passages:
        find(passage_key(p))
    for edge in kg.edges:
        if edge.kind == "mention":
            union(edge.src, edge.dst)
    return len({find(x) for x in parent})


def build_from_corpus(corpus: Corpus, gateway: Gateway) -> SpecGraph:
    """Standard pipeline: extract, assemble, normalize, embed, verify."""
    triples = extract_corpus_triples(corpus)
    kg = build_graph(corpus, triples)
    apply_normalization(kg)
    compute_embeddings(kg, gateway)
    check_integrity(kg)
    return kg


# --- persistence -------------------------------------------------------------------

def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def save(kg: SpecGraph, out_dir: str | Path) -> None:
    """Write graph.jsonl + embeddings.bin + manifest.json (canonical order)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    index = kg.embeddings
    row_of = {key: i for i, key in enumerate(index.keys)} if index else {}

    graph_path = out / "graph.jsonl"
    with open(graph_path, "w", encoding="utf-8") as fh:
        for pid in sorted(kg.passages):
            record = {"type": "passage", **kg.passages[pid].to_dict(),
                      "embedding_row": row_of.get(passage_key(pid))}
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
        for entity in sorted(kg.entities):
            record = {"type": "entity", "key": entity,
                      "embedding_row": row_of.get(entity_key(entity))}
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
        for tid in sorted(kg.triples):
            record = {"type": "triple", **kg.triples[tid].to_dict()}
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
        for edge in sorted(kg.edges, key=lambda e: (e.kind, e.src, e.dst)):
            record = {"type": "edge", "kind": edge.kind, "src": edge.src, "dst": edge.dst}
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
        for variant in sorted(kg.alias_map):
            record = {"type": "alias", "variant": variant,
                      "canonical": kg.alias_map[variant]}
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")

    emb_path = out / "embeddings.bin"
    if index is None or len(index.keys) == 0:
        dim, rows, payload = 0, 0, b""
    else:
        matrix = np.ascontiguousarray(index.matrix, dtype="<f4")
        rows, dim = matrix.shape
        payload = matrix.tobytes(order="C")
    with open(emb_path, "wb") as fh:
        fh.write(struct.pack("<II", dim, rows))
        fh.write(payload)

    manifest = {
        "format_version": FORMAT_VERSION,
        "embedding_model": index.model_id if index else None,
        "counts": {
            "passages": len(kg.passages),
            "entities": len(kg.entities),
            "statements": len(kg.statements),
            "triples": len(kg.triples),
            "edges": len(kg.edges),
        },
        "checksums": {
            "graph.jsonl": _sha256_file(graph_path),
            "embeddings.bin": _sha256_file(emb_path),
        },
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load(store_dir: str | Path) -> SpecGraph:
    store = Path(store_dir)
    manifest_path = store / "manifest.json"
    if not manifest_path.exists():
        raise CorruptStore(f"missing manifest in {store}")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    version = manifest.get("format_version")
    if not isinstance(version, int) or version > FORMAT_VERSION:
        raise IncompatibleFormat(
            f"store format {version} newer than supported {FORMAT_VERSION}"
        )
    for name, expected in manifest.get("checksums", {}).items():
        path = store / name
        if not path.exists():
            raise CorruptStore(f"missing store file {name}")
        actual = _sha256_file(path)
        if actual != expected:
            raise CorruptStore(f"checksum mismatch for {name}")

    kg = SpecGraph()
    embedding_rows: dict[int, str] = {}
    with open(store / "graph.jsonl", encoding="utf-8") as fh:
        for line in fh:
            record = json.loads(line)
            kind = record.pop("type")
            if kind == "passage":
                row = record.pop("embedding_row")
                passage = Passage.from_dict(record)
                kg.passages[passage.passage_id] = passage
                if row is not None:
                    embedding_rows[row] = passage_key(passage.passage_id)
            elif kind == "entity":
                kg.entities.add(record["key"])
                if record.get("embedding_row") is not None:
                    embedding_rows[record["embedding_row"]] = entity_key(record["key"])
            elif kind == "triple":
                triple = Triple.from_dict(record)
                kg.triples[triple.triple_id] = triple
                if triple.category in (BACKBONE, AUXILIARY):
                    kg.statements[triple.triple_id] = triple
            elif kind == "edge":
                kg.edges.append(Edge(record["kind"], record["src"], record["dst"]))
            elif kind == "alias":
                kg.alias_map[record["variant"]] = record["canonical"]
            else:
                raise CorruptStore(f"unknown record type {kind!r}")

    with open(store / "embeddings.bin", "rb") as fh:
        header = fh.read(8)
        if len(header) != 8:
            raise CorruptStore("embeddings.bin header truncated")
        dim, rows = struct.unpack("<II", header)
        payload = fh.read()
    if rows:
        expected = rows * dim * 4
        if len(payload) != expected:
            raise CorruptStore("embeddings.bin payload truncated")
        matrix = np.frombuffer(payload, dtype="<f4").reshape(rows, dim)
        keys = [embedding_rows[i] for i in range(rows)]
        kg.embeddings = EmbeddingIndex(keys, matrix.copy(),
                                       manifest.get("embedding_model") or "")
    else:
        kg.embeddings = EmbeddingIndex([], np.zeros((0, 0), dtype=np.float32),
                                       manifest.get("embedding_model") or "")
    check_integrity(kg)
    return kg
