"""Document ingestion: chunking, sentence IR extraction, anchor distillation.

A document becomes passages (the retrieval granularity), each sentence gets
a structured parse through the gateway, and every passage is distilled to a
semantic anchor, a (type, entity) tag of its functional intent, or an
explicit no-anchor marker when nothing parseable survives.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import prompts
from .errors import InvalidInput, SkippedSentence
from .gateway import Gateway
from .text import canonical_entity, estimate_tokens, split_sentences

logger = logging.getLogger(__name__)

DEFAULT_MAX_PASSAGE_TOKENS = 512

DECLARATIVE = "declarative"
PROCEDURAL = "procedural"
KINDS = (DECLARATIVE, PROCEDURAL)


@dataclass(frozen=True)
class SemanticAnchor:
    """Functional-intent tag of a passage or query: (type, entity)."""

    anchor_type: str
    entity: str

    def __post_init__(self):
        if self.anchor_type not in KINDS:
            raise InvalidInput(f"anchor type must be one of {KINDS}")
        if not self.entity:
            raise InvalidInput("anchor entity must be non-empty")

    def canonical(self) -> "SemanticAnchor":
        return SemanticAnchor(self.anchor_type, canonical_entity(self.entity))

    def to_dict(self) -> dict:
        return {"anchor_type": self.anchor_type, "entity": self.entity}

    @classmethod
    def from_dict(cls, data: dict) -> "SemanticAnchor":
        return cls(data["anchor_type"], data["entity"])


@dataclass
class Passage:
    passage_id: str
    doc_id: str
    section_path: list[str]
    text: str
    sentence_spans: list[tuple[int, int]]
    token_estimate: int
    anchor: SemanticAnchor | None = None

    def sentences(self) -> list[str]:
        return [self.text[s:e] for s, e in self.sentence_spans]

    def to_dict(self) -> dict:
        return {
            "passage_id": self.passage_id,
            "doc_id": self.doc_id,
            "section_path": self.section_path,
            "text": self.text,
            "sentence_spans": [list(span) for span in self.sentence_spans],
            "token_estimate": self.token_estimate,
            "anchor": self.anchor.to_dict() if self.anchor else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Passage":
        anchor = SemanticAnchor.from_dict(data["anchor"]) if data.get("anchor") else None
        return cls(
            passage_id=data["passage_id"],
            doc_id=data["doc_id"],
            section_path=list(data["section_path"]),
            text=data["text"],
            sentence_spans=[tuple(span) for span in data["sentence_spans"]],
            token_estimate=data["token_estimate"],
            anchor=anchor,
        )


@dataclass
class SemanticIR:
    """Per-sentence structured parse (exactly one payload, matching kind)."""

    sentence_id: str
    kind: str
    passage_id: str
    span: tuple[int, int]
    central_entity: str = ""
    attributes: list[dict] = field(default_factory=list)
    trigger: str = ""
    condition: str = ""
    action: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInput(f"IR kind must be one of {KINDS}")
        if self.kind == DECLARATIVE and not self.central_entity:
            raise InvalidInput("declarative IR needs a central entity")
        if self.kind == PROCEDURAL and not self.action.get("subject"):
            raise InvalidInput("procedural IR needs an action subject")

    @property
    def low_content(self) -> bool:
        return self.kind == DECLARATIVE and not self.attributes

    def to_dict(self) -> dict:
        base = {
            "sentence_id": self.sentence_id,
            "kind": self.kind,
            "source": {"passage_id": self.passage_id, "span": list(self.span)},
        }
        if self.kind == DECLARATIVE:
            base["central_entity"] = self.central_entity
            base["attributes"] = self.attributes
        else:
            base["trigger"] = self.trigger
            base["condition"] = self.condition
            base["action"] = self.action
        return base

    @classmethod
    def from_dict(cls, data: dict) -> "SemanticIR":
        return cls(
            sentence_id=data["sentence_id"],
            kind=data["kind"],
            passage_id=data["source"]["passage_id"],
            span=tuple(data["source"]["span"]),
            central_entity=data.get("central_entity", ""),
            attributes=data.get("attributes", []),
            trigger=data.get("trigger", ""),
            condition=data.get("condition", ""),
            action=data.get("action", {}),
        )


@dataclass
class Corpus:
    """Ingest output: passages, their IRs, and the skip log."""

    doc_id: str
    passages: list[Passage]
    irs: list[SemanticIR]
    skipped: list[dict] = field(default_factory=list)

    def passage_map(self) -> dict[str, Passage]:
        return {p.passage_id: p for p in self.passages}

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "passages.jsonl", "w", encoding="utf-8") as fh:
            for passage in self.passages:
                fh.write(json.dumps(passage.to_dict(), ensure_ascii=False) + "\n")
        with open(out / "ir.jsonl", "w", encoding="utf-8") as fh:
            for ir in self.irs:
                fh.write(json.dumps(ir.to_dict(), ensure_ascii=False) + "\n")


# --- chunking ----------------------------------------------------------------

_HEADING_RE = re.compile(r"^(#{1,6})\s+(.*)$")


def _blocks(document: str):
    """Split markdown-ish text into (kind, text) blocks; kind in {heading, body}."""
    lines = document.splitlines()
    buffer: list[str] = []
    for line in lines:
        m = _HEADING_RE.match(line)
        if m:
            if buffer:
                yield "body", "\n".join(buffer).strip("\n")
                buffer = []
            yield "heading", line
        elif line.strip():
            buffer.append(line)
        else:
            if buffer:
                yield "body", "\n".join(buffer).strip("\n")
                buffer = []
    if buffer:
        yield "body", "\n".join(buffer).strip("\n")


def chunk(document: str, doc_id: str,
          max_passage_tokens: int = DEFAULT_MAX_PASSAGE_TOKENS) -> list[Passage]:
    """Split a document into passages covering all body text exactly once.

    A heading always starts a new passage and is never split from its first
    paragraph; within a section, body blocks pack greedily up to the token
    budget.
    """
    if not document or not document.strip():
        raise InvalidInput("cannot chunk an empty document")

    passages: list[Passage] = []
    section_stack: list[tuple[int, str]] = []
    pending: list[str] = []
    pending_tokens = 0
    pending_has_body = False

    def flush():
        nonlocal pending, pending_tokens, pending_has_body
        if not pending or not pending_has_body:
            # Trailing heading with no body still becomes a passage so text
            # coverage stays lossless.
            if not pending:
                return
        text = "\n\n".join(pending)
        passage_id = f"{doc_id}#p{len(passages):04d}"
        passages.append(Passage(
            passage_id=passage_id,
            doc_id=doc_id,
            section_path=[title for _, title in section_stack],
            text=text,
            sentence_spans=_passage_spans(text),
            token_estimate=estimate_tokens(text),
        ))
        pending = []
        pending_tokens = 0
        pending_has_body = False

    for kind, text in _blocks(document):
        if kind == "heading":
            flush()
            m = _HEADING_RE.match(text)
            level = len(m.group(1))
            title = m.group(2).strip()
            while section_stack and section_stack[-1][0] >= level:
                section_stack.pop()
            section_stack.append((level, title))
            pending.append(text)
            pending_tokens += estimate_tokens(text)
        else:
            for piece in _fit_block(text, max_passage_tokens):
                block_tokens = estimate_tokens(piece)
                if pending_has_body and pending_tokens + block_tokens > max_passage_tokens:
                    flush()
                pending.append(piece)
                pending_tokens += block_tokens
                pending_has_body = True
    flush()
    return passages


def _fit_block(text: str, budget: int) -> list[str]:
    """Split an oversized block at sentence boundaries; a lone sentence over
    the budget stays whole (sentences are the floor of granularity)."""
    if estimate_tokens(text) <= budget:
        return [text]
    spans = split_sentences(text)
    if not spans:
        return [text]
    pieces: list[str] = []
    start = end = None
    tokens = 0
    for s, e in spans:
        sentence_tokens = estimate_tokens(text[s:e])
        if start is not None and tokens + sentence_tokens > budget:
            pieces.append(text[start:end])
            start, tokens = None, 0
        if start is None:
            start = s
        end = e
        tokens += sentence_tokens
    if start is not None:
        pieces.append(text[start:end])
    return pieces


def _passage_spans(text: str) -> list[tuple[int, int]]:
    """Sentence spans, with anything on a heading line excluded."""
    heading_ranges = []
    pos = 0
    for line in text.splitlines(keepends=True):
        if _HEADING_RE.match(line.strip()):
            heading_ranges.append((pos, pos + len(line)))
        pos += len(line)
    spans = []
    for start, end in split_sentences(text):
        if any(h_start <= start < h_end for h_start, h_end in heading_ranges):
            continue
        spans.append((start, end))
    return spans


# --- per-sentence extraction ---------------------------------------------------

def classify_sentence(gateway: Gateway, sentence: str, passage: Passage) -> str:
    reply = gateway.chat(prompts.classify_sentence(sentence, passage.section_path))
    return reply["kind"]


def extract_ir(gateway: Gateway, sentence: str, kind: str, passage: Passage,
               sentence_id: str, span: tuple[int, int]) -> SemanticIR:
    if not sentence.strip():
        raise SkippedSentence("empty sentence")
    reply = gateway.chat(prompts.extract_ir(sentence, kind, passage.section_path))
    if reply.get("skip"):
        raise SkippedSentence(reply.get("reason", "model skipped sentence"))
    return SemanticIR(
        sentence_id=sentence_id,
        kind=reply["kind"],
        passage_id=passage.passage_id,
        span=span,
        central_entity=reply.get("central_entity", ""),
        attributes=reply.get("attributes", []),
        trigger=reply.get("trigger", ""),
        condition=reply.get("condition", ""),
        action=reply.get("action", {}),
    )


def distill_anchor(irs: list[SemanticIR]) -> SemanticAnchor | None:
    """Majority kind (tie goes procedural) + dominant canonical entity.

    Returns None (the explicit no-anchor marker) when the passage produced no
    IRs; the passage stays retrievable but cannot be filtered by type.
    """
    if not irs:
        return None
    procedural = sum(1 for ir in irs if ir.kind == PROCEDURAL)
    declarative = len(irs) - procedural
    anchor_type = PROCEDURAL if procedural >= declarative else DECLARATIVE

    counts: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    for order, ir in enumerate(irs):
        surface = ir.central_entity if ir.kind == DECLARATIVE else ir.action.get("subject", "")
        key = canonical_entity(surface)
        if not key:
            continue
        counts[key] = counts.get(key, 0) + 1
        first_seen.setdefault(key, order)
    if not counts:
        return None
    entity = min(counts, key=lambda k: (-counts[k], first_seen[k]))
    return SemanticAnchor(anchor_type, entity)


def ingest_document(gateway: Gateway, document: str, doc_id: str,
                    max_passage_tokens: int = DEFAULT_MAX_PASSAGE_TOKENS) -> Corpus:
    """Full ingest: chunk, classify + parse every sentence, distill anchors.

    Extraction results are committed in document order so corpus files are
    deterministic regardless of call scheduling.
    """
    passages = chunk(document, doc_id, max_passage_tokens)
    irs: list[SemanticIR] = []
    skipped: list[dict] = []
    for passage in passages:
        passage_irs: list[SemanticIR] = []
        for index, (start, end) in enumerate(passage.sentence_spans):
            sentence = passage.text[start:end]
            sentence_id = f"{passage.passage_id}:s{index:03d}"
            try:
                kind = classify_sentence(gateway, sentence, passage)
                ir = extract_ir(gateway, sentence, kind, passage, sentence_id, (start, end))
            except SkippedSentence as exc:
                skipped.append({"sentence_id": sentence_id, "reason": str(exc)})
                continue
            passage_irs.append(ir)
        passage.anchor = distill_anchor(passage_irs)
        if passage.anchor is None:
            logger.debug("passage %s has no anchor", passage.passage_id)
        irs.extend(passage_irs)
    return Corpus(doc_id=doc_id, passages=passages, irs=irs, skipped=skipped)
