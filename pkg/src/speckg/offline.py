"""Deterministic offline provider: a rule-based stand-in model.

Serves every task the pipeline needs (sentence classification, clause
parsing, summarization, gap-driven reasoning, answer synthesis, atomic-fact
decomposition, equivalence judging) plus hashing-trick bag-of-words
embeddings, with no network, keys, or RNG. It exists so record/replay
fixtures can be produced hermetically; hosted models replace it in real
deployments via the gateway without touching any downstream module.

The grammar is a shallow clause parser tuned to specification prose
(subordinate trigger clauses, passives, attribute statements). It is a model
implementation, not pipeline logic: the modules under test never see it
directly, only gateway replies.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

import numpy as np

from .gateway import ChatRequest
from .prompts import extract_payload
from .text import canonical_entity, split_sentences, strip_articles, tokenize

EMBED_DIM = 256

STOPWORDS = {
    "the", "a", "an", "is", "are", "was", "were", "be", "been", "being",
    "to", "of", "in", "at", "on", "by", "for", "with", "from", "into",
    "it", "its", "and", "or", "that", "this", "does", "do", "what",
    "which", "where", "when", "how", "why", "any",
}

SUBORDINATORS = ("when", "whenever", "if", "upon", "once", "until", "while",
                 "after", "before")

_CUE_RE = re.compile(r"\b(when|whenever|if|upon|once|until|while|then)\b", re.IGNORECASE)

PROC_VERBS = {
    "returns", "enters", "moves", "transitions", "asserts", "deasserts",
    "sets", "clears", "resets", "reverts", "begins", "starts", "stops",
    "loads", "pushes", "forwards", "signals", "routes", "generates",
    "produces", "drives", "goes", "stays", "remains", "validates", "raises",
    "triggers", "initiates", "samples", "latches", "shifts", "serializes",
    "switches", "advances", "captures", "drains", "issues", "increments",
    "decrements", "writes", "reads", "arrives", "fires", "expires",
    "completes", "toggles", "gates", "unmasks",
}

DECL_VERBS = {
    "contains", "holds", "stores", "provides", "specifies", "selects",
    "defaults", "occupies", "controls", "consists", "supports", "indicates",
    "reports", "includes", "defines", "uses", "exposes", "carries", "names",
    "lists", "measures", "counts", "tracks", "enables", "disables", "masks",
    "has", "is", "are",
}

PARTICIPLES = {
    "asserted", "deasserted", "cleared", "set", "detected", "generated",
    "produced", "driven", "shifted", "pushed", "loaded", "forwarded",
    "written", "read", "sampled", "latched", "mirrored", "controlled",
    "enabled", "disabled", "selected", "raised", "triggered", "initiated",
    "released", "reached", "updated", "captured", "drained", "gated",
    "issued", "masked", "qualified",
}

CLAUSE_VERBS = PROC_VERBS | PARTICIPLES

PARTICLES = {"to", "into", "in", "of", "at", "on", "from", "back"}

MULTI_VALUE_PREDICATES = {"reports", "contains", "includes", "provides", "holds"}

_SKIP_RE = re.compile(r"^(see |refer to |figure |table |cf\.)", re.IGNORECASE)

# --- judge normalization -----------------------------------------------------

JUDGE_STOPWORDS = STOPWORDS | {"then", "therefore", "so"}

VERB_SYNONYMS = {
    "returns": "resets", "return": "resets", "reverts": "resets",
    "revert": "resets",
    "reaches": "enters", "reach": "enters", "moves": "enters",
    "move": "enters", "advances": "enters", "advance": "enters",
    "transitions": "enters", "transition": "enters",
    "begins": "starts", "begin": "starts", "commences": "starts",
    "produces": "generates", "produce": "generates",
    "feeds": "drives", "feed": "drives",
}

TYPE_NAMERS = {"state", "signal", "flag", "pulse", "bit", "register",
               "field", "strobe", "line"}

IRREGULAR_STEMS = {"driven": "drive", "goes": "go", "gone": "go",
                   "written": "write", "wrote": "write"}


@dataclass
class ClauseParse:
    """Shallow parse of one sentence."""

    kind: str
    sentence: str
    central_entity: str = ""
    attributes: list[tuple[str, str]] = field(default_factory=list)
    trigger: str = ""
    condition: str = ""
    action: tuple[str, str, str] | None = None  # subject, verb, object
    direct: bool = False  # "<participle> directly by <agent>" root marker


def _normalize_clause(clause: str) -> str:
    """Drop articles and auxiliary verbs, keep everything else verbatim."""
    drop = {"a", "an", "the", "is", "are", "was", "were", "be", "been", "being"}
    words = [w for w in clause.split() if w.lower().strip(",.;") not in drop]
    return " ".join(w.strip(",.;") for w in words)


def _split_clauses(sentence: str) -> tuple[list[str], str]:
    """Return (subordinate clauses, main clause) of a procedural sentence."""
    s = sentence.strip().rstrip(".!?")
    pieces = [p.strip() for p in re.split(r",\s*", s) if p.strip()]
    subs: list[str] = []
    mains: list[str] = []
    for piece in pieces:
        m = re.match(rf"(?i)^({'|'.join(SUBORDINATORS)})\s+(.+)$", piece)
        if m and not mains:
            subs.append(m.group(2))
        else:
            mains.append(piece)
    main = ", ".join(mains)
    if not subs and main:
        m = re.search(rf"(?i)\s+({'|'.join(SUBORDINATORS)})\s+(.+)$", main)
        if m:
            subs.append(m.group(2))
            main = main[: m.start()].strip()
    return subs, main


def _parse_action(main: str) -> tuple[tuple[str, str, str], bool] | None:
    m = re.match(
        r"(?i)^(?P<subj>.+?)\s+(?:is|are)\s+(?P<part>\w+)\s+(?P<direct>directly\s+)?by\s+(?P<agent>.+)$",
        main,
    )
    if m and m.group("part").lower() in PARTICIPLES:
        action = (
            strip_articles(m.group("subj")),
            f"{m.group('part').lower()}-by",
            strip_articles(m.group("agent")),
        )
        return action, bool(m.group("direct"))

    m = re.match(r"(?i)^(?P<subj>.+?)\s+(?:is|are)\s+(?P<part>\w+)(?P<rest>\s+.+)?$", main)
    if m and m.group("part").lower() in PARTICIPLES:
        rest = strip_articles((m.group("rest") or "").strip())
        return (strip_articles(m.group("subj")), m.group("part").lower(), rest), False

    words = main.split()
    for i, word in enumerate(words):
        lw = word.lower().strip(",.;")
        if lw in PROC_VERBS and i > 0:
            subject = strip_articles(" ".join(words[:i]))
            verb = lw
            j = i + 1
            if j < len(words) and words[j].lower() in PARTICLES:
                verb = f"{lw} {words[j].lower()}"
                j += 1
            obj = strip_articles(" ".join(words[j:])).rstrip(".")
            if subject:
                return (subject, verb, obj), False
    return None


def _parse_declarative(sentence: str) -> tuple[str, list[tuple[str, str]]]:
    s = sentence.strip().rstrip(".!?")
    m = re.match(
        r"(?i)^(?P<subj>.+?)\s+(?:is|are)\s+(?P<part>\w+)\s+(?:directly\s+)?by\s+(?P<agent>.+)$", s
    )
    if m and m.group("part").lower() in PARTICIPLES:
        entity = strip_articles(m.group("subj"))
        return entity, [(f"{m.group('part').lower()} by", strip_articles(m.group("agent")))]

    m = re.match(r"(?i)^(?P<subj>.+?)\s+(?:is|are)\s+(?P<part>\w+)(?P<rest>\s+.+)?$", s)
    if m and m.group("part").lower() in PARTICIPLES:
        entity = strip_articles(m.group("subj"))
        rest = (m.group("rest") or "").strip()
        name = m.group("part").lower()
        rest_words = rest.split()
        if rest_words and rest_words[0].lower() in PARTICLES:
            name = f"{name} {rest_words[0].lower()}"
            rest = " ".join(rest_words[1:])
        return entity, [(name, strip_articles(rest))]

    words = s.split()
    for i, word in enumerate(words):
        lw = word.lower().strip(",.;")
        if lw in DECL_VERBS | PROC_VERBS and i > 0:
            entity = strip_articles(" ".join(words[:i]))
            name = lw
            j = i + 1
            if j < len(words) and words[j].lower() in PARTICLES:
                name = f"{lw} {words[j].lower()}"
                j += 1
            value = strip_articles(" ".join(words[j:])).rstrip(".")
            if not entity:
                continue
            if lw in MULTI_VALUE_PREDICATES and " and " in value:
                parts = [p.strip() for p in value.split(" and ") if p.strip()]
                return entity, [(name, p) for p in parts]
            return entity, [(name, value)]
    # Low-content: keep a best-effort entity with no attributes.
    entity = strip_articles(" ".join(words[:4]))
    return entity, []


def classify(sentence: str) -> str:
    return "procedural" if _CUE_RE.search(sentence) else "declarative"


def _parse_table_row(row: str) -> ClauseParse | None:
    cells = [c.strip() for c in row.strip("|").split("|") if c.strip()]
    if len(cells) < 2:
        return None
    if len(cells) == 2:
        attrs = [("is", cells[1])]
    else:
        attrs = [(cells[1], " ".join(cells[2:]))]
    return ClauseParse(kind="declarative", sentence=row.strip(),
                       central_entity=cells[0], attributes=attrs)


def parse_sentence(sentence: str) -> ClauseParse | None:
    """Full shallow parse; None means the sentence carries no usable content."""
    stripped = re.sub(r"\s+", " ", sentence).strip()
    if stripped.startswith("|"):
        return _parse_table_row(stripped)
    stripped = re.sub(r"^([-*+]|\d+[.)])\s+", "", stripped)
    if not stripped or _SKIP_RE.match(stripped) or len(tokenize(stripped)) < 3:
        return None
    kind = classify(stripped)
    if kind == "procedural":
        subs, main = _split_clauses(stripped)
        parsed = _parse_action(main) if main else None
        if not subs or parsed is None:
            return None
        action, direct = parsed
        return ClauseParse(
            kind="procedural",
            sentence=stripped,
            trigger=_normalize_clause(subs[0]),
            condition=_normalize_clause(subs[1]) if len(subs) > 1 else "",
            action=action,
            direct=direct,
        )
    entity, attrs = _parse_declarative(stripped)
    if not entity:
        return None
    return ClauseParse(kind="declarative", sentence=stripped,
                       central_entity=entity, attributes=attrs)


def clause_entity(clause: str) -> str:
    """Entity named by a normalized trigger/condition clause."""
    words = clause.split()
    for i, word in enumerate(words):
        if word.lower() in CLAUSE_VERBS:
            if i > 0:
                return " ".join(words[:i])
            break
    return clause


# --- judge -------------------------------------------------------------------

def _identifier_like(token: str) -> bool:
    return "_" in token or (len(token) >= 2 and token.isupper())


def _stem(token: str) -> str:
    if token in IRREGULAR_STEMS:
        return IRREGULAR_STEMS[token]
    if token.endswith("ies") and len(token) > 4:
        return token[:-3] + "y"
    for suffix in ("ing", "ed", "s"):
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            return token[: -len(suffix)]
    return token


def judge_normalize(text: str) -> tuple[str, ...]:
    """Order-free normalized token profile used for equivalence verdicts."""
    raw = re.findall(r"[A-Za-z0-9_]+", text)
    out = []
    for i, tok in enumerate(raw):
        low = tok.lower()
        if low in JUDGE_STOPWORDS:
            continue
        if low in TYPE_NAMERS and i > 0 and _identifier_like(raw[i - 1]):
            continue
        low = VERB_SYNONYMS.get(low, low)
        out.append(_stem(low))
    return tuple(sorted(out))


# --- question analysis for reasoning ------------------------------------------

_CHAIN_Q = re.compile(
    r"(?i)\bwhich\s+(?:source\s+)?(?:signal|event|input)?\s*ultimately\s+"
    r"(?:drives|controls|produces|feeds)\s+(?:the\s+)?(?P<target>[^?]+?)\s*\?"
)
_ATTR_Q = re.compile(
    r"(?i)\bwhat is the\s+(?P<attr>default value|reset value|width|address|size|"
    r"bit position|position|divisor)\s+of\s+(?:the\s+)?(?P<ent>[^?]+?)\s*\?"
)
_LOCATE_Q = re.compile(
    r"(?i)\bwhere is the\s+(?P<desc>.+?)\s+located\s*\?"
)
_DESC_FN = re.compile(
    r"(?i)^(?:bit|field|signal)\s+that\s+(?:controls|enables|selects)\s+(?:the\s+)?(?P<fn>.+)$"
)
_PROCESS_Q = re.compile(
    r"(?i)\b(?:describe|trace) the chain of events from\s+(?P<start>.+?)\s+until\s+(?P<terminal>[^?.]+)"
)
_TRANSITION_Q = re.compile(
    r"(?i)\bwhich state does\s+(?:the\s+)?(?P<fsm>.+?)\s+"
    r"(?:reach|enter|return to|settle in|end up in)\s+when\s+(?P<cond>[^?]+?)\s*\?"
)
_QUOTE_Q = re.compile(r'(?i)according to the (?:line|statement)\s+"(?P<quote>[^"]+)"')

ATTR_SYNONYMS = {
    "default value": {"default", "defaults", "reset"},
    "reset value": {"default", "defaults", "reset"},
    "width": {"width", "wide"},
    "address": {"address", "offset"},
    "size": {"size", "depth"},
    "bit position": {"occupies", "position"},
    "position": {"occupies", "position"},
    "divisor": {"divisor", "holds"},
}


def _content(text: str) -> set[str]:
    return {t for t in tokenize(text) if t not in STOPWORDS and len(t) >= 2}


def _gap(thought: str, description: str, sub_query: str, anchor_type: str,
         entity: str) -> dict:
    return {
        "thought": thought,
        "status": "gap",
        "gap_description": description,
        "sub_query": sub_query,
        "target_anchor": {"anchor_type": anchor_type, "entity": entity},
    }


def _sufficient(thought: str) -> dict:
    return {"thought": thought, "status": "sufficient"}


class _Resolver:
    """Shared question-resolution engine behind the reason and synthesize tasks."""

    def __init__(self, question: str, context: list[dict]):
        self.question = question
        self.parses: list[ClauseParse] = []
        for item in context:
            for start, end in split_sentences(item["text"]):
                parse = parse_sentence(item["text"][start:end])
                if parse is not None:
                    self.parses.append(parse)

    # lookup helpers ---------------------------------------------------------

    def _proc_by_subject(self, entity: str) -> ClauseParse | None:
        key = canonical_entity(entity)
        for p in self.parses:
            if p.kind == "procedural" and p.action and canonical_entity(p.action[0]) == key:
                return p
        return None

    def _decl_attr(self, entity: str, name_tokens: set[str]) -> tuple[str, str, str] | None:
        key = canonical_entity(entity)
        for p in self.parses:
            if p.kind != "declarative" or canonical_entity(p.central_entity) != key:
                continue
            for name, value in p.attributes:
                if _content(name) & name_tokens or set(tokenize(name)) & name_tokens:
                    return p.central_entity, name, value
        return None

    # question modes -----------------------------------------------------------

    def assess(self) -> dict:
        """One reasoning step: either a sufficiency verdict or the next gap."""
        q = self.question
        if _QUOTE_Q.search(q):
            return _sufficient("The quoted statement already contains the answer.")
        m = _CHAIN_Q.search(q)
        if m:
            return self._assess_chain(m.group("target").strip())
        m = _ATTR_Q.search(q)
        if m:
            return self._assess_attr(m.group("ent").strip(), m.group("attr").lower())
        m = _LOCATE_Q.search(q)
        if m:
            return self._assess_locate(m.group("desc").strip())
        m = _PROCESS_Q.search(q)
        if m:
            return self._assess_process(m.group("start").strip(), m.group("terminal").strip())
        m = _TRANSITION_Q.search(q)
        if m:
            return self._assess_transition(m.group("fsm").strip(), m.group("cond").strip())
        return self._assess_fallback()

    def _assess_chain(self, target: str) -> dict:
        goal = target
        seen = set()
        while True:
            key = canonical_entity(goal)
            if key in seen:
                return _sufficient(f"Dependency loop at '{goal}'; stopping.")
            seen.add(key)
            parse = self._proc_by_subject(goal)
            if parse is None:
                return _gap(
                    f"No evidence yet for what drives '{goal}'.",
                    f"The driver of '{goal}' is unknown.",
                    f"What drives the {goal}?",
                    "procedural", goal,
                )
            subject, verb, obj = parse.action
            if verb.endswith("-by") and parse.direct:
                return _sufficient(f"Chain closed: '{subject}' originates from '{obj}'.")
            goal = clause_entity(parse.trigger)

    def chain_statements(self, target: str) -> list[str]:
        out = []
        goal = target
        seen = set()
        while True:
            key = canonical_entity(goal)
            if key in seen:
                break
            seen.add(key)
            parse = self._proc_by_subject(goal)
            if parse is None:
                break
            subject, verb, obj = parse.action
            if verb.endswith("-by") and parse.direct:
                out.append(f"The {subject} is {verb.split('-')[0]} directly by the {obj}.")
                break
            nxt = clause_entity(parse.trigger)
            out.append(f"The {subject} is driven by the {nxt}.")
            goal = nxt
        return out

    def _assess_attr(self, entity: str, attr: str) -> dict:
        hit = self._decl_attr(entity, ATTR_SYNONYMS.get(attr, _content(attr)))
        if hit is not None:
            return _sufficient(f"Found the {attr} of '{entity}'.")
        return _gap(
            f"The {attr} of '{entity}' is not in the evidence.",
            f"Missing the {attr} of '{entity}'.",
            f"What is the {attr} of the {entity}?",
            "declarative", entity,
        )

    def attr_statement(self, entity: str, attr: str) -> str | None:
        hit = self._decl_attr(entity, ATTR_SYNONYMS.get(attr, _content(attr)))
        if hit is None:
            return None
        ent, name, value = hit
        return f"The {ent} {name} {value}."

    def _locate_goals(self, desc: str):
        m = _DESC_FN.match(desc)
        if m:
            fn = m.group("fn").strip()
            hit = self._decl_attr(fn, {"controlled", "enabled", "selected"})
            if hit is None:
                return ("fn", fn), None
            subject = hit[2]
            loc = self._decl_attr(subject, {"occupies", "located", "resides", "sits"})
            return ("loc", subject), (hit, loc)
        loc = self._decl_attr(desc, {"occupies", "located", "resides", "sits"})
        return ("loc", desc), (None, loc)

    def _assess_locate(self, desc: str) -> dict:
        (stage, entity), hits = self._locate_goals(desc)
        if stage == "fn":
            return _gap(
                f"The controlling bit of '{entity}' is unknown.",
                f"Missing: which bit controls '{entity}'.",
                f"Which bit controls the {entity}?",
                "declarative", entity,
            )
        if hits is None or hits[1] is None:
            return _gap(
                f"The location of '{entity}' is unknown.",
                f"Missing the location of '{entity}'.",
                f"Where is the {entity} located?",
                "declarative", entity,
            )
        return _sufficient(f"Located '{entity}'.")

    def locate_statements(self, desc: str) -> list[str]:
        (stage, entity), hits = self._locate_goals(desc)
        if stage == "fn" or hits is None:
            return []
        out = []
        control, loc = hits
        if control is not None:
            ent, name, value = control
            out.append(f"The {ent} is {name} the {value}.")
        if loc is not None:
            ent, name, value = loc
            out.append(f"The {ent} {name} {value}.")
        return out

    def _trace_process(self, start: str, terminal: str):
        steps = []
        event = start
        terminal_tokens = _content(terminal)
        seen = set()
        for _ in range(12):
            matched = None
            for p in self.parses:
                if p.kind != "procedural" or p.sentence in seen:
                    continue
                if len(_content(p.trigger) & _content(event)) >= 2:
                    matched = p
                    break
            if matched is None:
                return steps, event, False
            seen.add(matched.sentence)
            steps.append(matched)
            subject, verb, obj = matched.action
            event = f"{subject} {verb} {obj}"
            if len(_content(event) & terminal_tokens) >= 2:
                return steps, event, True
        return steps, event, False

    @staticmethod
    def _event_locus(event: str) -> str:
        m = re.search(r"(?i)\b(?:in|into|to)\s+(?:the\s+)?([A-Za-z0-9_ ]+)$", event)
        if m:
            return m.group(1).strip()
        words = strip_articles(event).split()
        return " ".join(words[:3])

    def _assess_process(self, start: str, terminal: str) -> dict:
        steps, event, done = self._trace_process(start, terminal)
        if done:
            return _sufficient(f"Event chain traced through {len(steps)} steps.")
        locus = self._event_locus(event)
        return _gap(
            f"The consequence of '{event}' is unknown.",
            f"Missing: what happens when {event}.",
            f"What happens when {strip_articles(event)}?",
            "procedural", locus,
        )

    def process_statements(self, start: str, terminal: str) -> list[str]:
        steps, _, _ = self._trace_process(start, terminal)
        out = []
        for p in steps:
            subject, verb, obj = p.action
            verb_text = verb.replace("-", " ")
            out.append(f"When the {p.trigger}, the {subject} {verb_text} {obj}.")
        return out

    def _transition_stages(self, fsm: str, cond: str):
        two_stage = re.match(r"(?i)^(?P<first>.+?)\s+immediately after\s+(?:a\s+|the\s+)?reset$",
                             cond.strip())
        fsm_key = canonical_entity(fsm)
        reset_parse = None
        if two_stage:
            for p in self.parses:
                if (p.kind == "procedural" and p.action
                        and canonical_entity(p.action[0]) == fsm_key
                        and "reset" in tokenize(p.trigger)):
                    reset_parse = p
                    break
            cond = two_stage.group("first")
        state0 = None
        if reset_parse is not None:
            state0 = reset_parse.action[2]
        cond_tokens = _content(cond)
        final_parse = None
        for p in self.parses:
            if p.kind != "procedural" or not p.action:
                continue
            if canonical_entity(p.action[0]) != fsm_key or p is reset_parse:
                continue
            trigger_tokens = set(tokenize(p.trigger))
            if len(cond_tokens & trigger_tokens) < 2:
                continue
            if state0 is not None:
                head = tokenize(state0)
                if head and head[0] not in trigger_tokens:
                    continue
            final_parse = p
            break
        return bool(two_stage), reset_parse, final_parse

    def _assess_transition(self, fsm: str, cond: str) -> dict:
        two_stage, reset_parse, final_parse = self._transition_stages(fsm, cond)
        if two_stage and reset_parse is None:
            return _gap(
                f"The reset state of the {fsm} is unknown.",
                f"Missing the reset state of the {fsm}.",
                f"Which state does the {fsm} return to when the reset input is asserted?",
                "procedural", fsm,
            )
        if final_parse is None:
            return _gap(
                f"The transition of the {fsm} under '{cond}' is unknown.",
                f"Missing the {fsm} transition for '{cond}'.",
                f"Which state does the {fsm} enter when {cond}?",
                "procedural", fsm,
            )
        return _sufficient(f"Transition resolved: the {fsm} ends in {final_parse.action[2]}.")

    def transition_statements(self, fsm: str, cond: str) -> list[str]:
        _, reset_parse, final_parse = self._transition_stages(fsm, cond)
        out = []
        for p in (reset_parse, final_parse):
            if p is None:
                continue
            subject, verb, obj = p.action
            out.append(f"The {subject} {verb} the {obj} when the {p.trigger}.")
        return out

    def _assess_fallback(self) -> dict:
        q = self.question.strip()
        m = re.search(r"(?i)(?:the|a|an)\s+([A-Za-z0-9_ ]+?)\s*\?\s*$", q)
        entity = m.group(1).strip() if m else " ".join(strip_articles(q).split()[-2:])
        anchor_type = "procedural" if _CUE_RE.search(q) else "declarative"
        return _gap(
            "The question does not match any resolvable evidence.",
            "Unable to locate supporting evidence.",
            q, anchor_type, entity or "unknown",
        )

    def answer_statements(self) -> list[str]:
        q = self.question
        m = _QUOTE_Q.search(q)
        if m:
            return [m.group("quote").strip().rstrip(".") + "."]
        m = _CHAIN_Q.search(q)
        if m:
            return self.chain_statements(m.group("target").strip())
        m = _ATTR_Q.search(q)
        if m:
            stmt = self.attr_statement(m.group("ent").strip(), m.group("attr").lower())
            return [stmt] if stmt else []
        m = _LOCATE_Q.search(q)
        if m:
            return self.locate_statements(m.group("desc").strip())
        m = _PROCESS_Q.search(q)
        if m:
            return self.process_statements(m.group("start").strip(), m.group("terminal").strip())
        m = _TRANSITION_Q.search(q)
        if m:
            return self.transition_statements(m.group("fsm").strip(), m.group("cond").strip())
        return []


class OfflineModel:
    """Provider implementation backed by the rule engine above."""

    def chat(self, request: ChatRequest, model: str) -> str:
        payload = extract_payload(request.user_prompt)
        handler = {
            "classify-sentence": self._classify,
            "ir-extract": self._extract_ir,
            "summarize": self._summarize,
            "reason": self._reason,
            "synthesize": self._synthesize,
            "atom-decompose": self._decompose,
            "atom-match": self._match,
        }.get(request.task_tag)
        if handler is None:
            raise ValueError(f"offline model has no rule for task_tag {request.task_tag!r}")
        reply = handler(payload)
        if isinstance(reply, str):
            return reply
        return json.dumps(reply, ensure_ascii=False, sort_keys=True)

    def embed(self, texts: list[str], model: str) -> list[list[float]]:
        return [self._embed_one(t) for t in texts]

    @staticmethod
    def _embed_one(text: str) -> list[float]:
        vec = np.zeros(EMBED_DIM, dtype=np.float64)
        tokens = [t for t in tokenize(text) if t not in STOPWORDS] or [text.strip().lower() or "empty"]
        for token in tokens:
            h = hashlib.sha256(token.encode("utf-8")).digest()
            idx = int.from_bytes(h[:4], "little") % EMBED_DIM
            sign = 1.0 if h[4] % 2 == 0 else -1.0
            vec[idx] += sign
        if not np.any(vec):
            vec[0] = 1.0
        return [float(v) for v in vec]

    # -- task handlers --------------------------------------------------------

    @staticmethod
    def _classify(payload: dict) -> dict:
        return {"kind": classify(payload["sentence"])}

    @staticmethod
    def _extract_ir(payload: dict) -> dict:
        parse = parse_sentence(payload["sentence"])
        if parse is None:
            return {"skip": True, "reason": "no technical content"}
        if payload.get("kind") == "declarative" or parse.kind == "declarative":
            if parse.kind != "declarative":
                # Caller's template wins; re-parse declaratively.
                entity, attrs = _parse_declarative(payload["sentence"])
                return {
                    "kind": "declarative",
                    "central_entity": entity or "unknown",
                    "attributes": [{"name": n, "value": v} for n, v in attrs],
                }
            return {
                "kind": "declarative",
                "central_entity": parse.central_entity,
                "attributes": [{"name": n, "value": v} for n, v in parse.attributes],
            }
        subject, verb, obj = parse.action
        return {
            "kind": "procedural",
            "trigger": parse.trigger,
            "condition": parse.condition,
            "action": {"subject": subject, "verb": verb, "object": obj},
        }

    @staticmethod
    def _summarize(payload: dict) -> str:
        query_tokens = _content(payload["query"])
        lines = []
        for passage in payload["passages"]:
            text = passage["text"]
            for start, end in split_sentences(text):
                sentence = text[start:end]
                if _content(sentence) & query_tokens:
                    lines.append(sentence.strip())
        if not lines:
            return f"No evidence relevant to: {payload['query']}"
        return f"Evidence for: {payload['query']}\n" + " ".join(lines)

    @staticmethod
    def _reason(payload: dict) -> dict:
        resolver = _Resolver(payload["question"], payload["context"])
        return resolver.assess()

    @staticmethod
    def _synthesize(payload: dict) -> str:
        resolver = _Resolver(payload["question"], payload["context"])
        statements = resolver.answer_statements()
        if payload.get("incomplete_evidence") or not statements:
            prefix = "The retrieved evidence is insufficient to answer the question fully."
            if statements:
                return prefix + " Known so far: " + " ".join(statements)
            return prefix
        return " ".join(statements)

    @staticmethod
    def _decompose(payload: dict) -> dict:
        """One atom per sentence, splitting compound predicates on 'and'."""
        text = payload["answer"]
        verbs = DECL_VERBS | PROC_VERBS
        atoms = []
        for start, end in split_sentences(text):
            sentence = re.sub(r"\s+", " ", text[start:end]).strip().rstrip(".!?")
            if not sentence:
                continue
            parts = [p.strip() for p in sentence.split(" and ") if p.strip()]
            if len(parts) > 1 and all(p.split()[0].lower() in verbs for p in parts[1:]):
                words = parts[0].split()
                subject_words = []
                for word in words:
                    if word.lower().strip(",.;") in verbs:
                        break
                    subject_words.append(word)
                subject = " ".join(subject_words)
                if subject:
                    atoms.append(parts[0])
                    atoms.extend(f"{subject} {p}" for p in parts[1:])
                    continue
            atoms.append(sentence)
        return {"atoms": atoms}

    @staticmethod
    def _match(payload: dict) -> dict:
        candidate = judge_normalize(payload["candidate"])
        for ref in payload["references"]:
            if judge_normalize(ref["text"]) == candidate:
                return {"match_index": ref["index"]}
        return {"match_index": None}
