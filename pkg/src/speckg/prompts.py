"""Prompt templates for every pipeline task.

Each user prompt ends with the task input rendered as a fenced JSON block.
Structured inputs keep hosted models honest and give the offline provider a
parseable payload; :func:`extract_payload` recovers it on the provider side.

Generative tasks run at temperature 0.7, evaluation tasks at 0.2.
"""

from __future__ import annotations

import json
import re

from .gateway import ChatRequest

GENERATIVE_TEMPERATURE = 0.7
EVALUATION_TEMPERATURE = 0.2

_SYSTEM = {
    "classify-sentence": (
        "You categorize one sentence from a hardware specification as either a "
        "declarative functional description (static properties, register fields, "
        "signal functions) or a procedural behavioral description (state "
        "transitions, conditional triggers, signal assignments). Reply with JSON: "
        '{"kind": "declarative"} or {"kind": "procedural"}.'
    ),
    "ir-extract": (
        "You deconstruct one specification sentence into a compact JSON structure. "
        "Declarative sentences become {\"kind\": \"declarative\", \"central_entity\": ..., "
        "\"attributes\": [{\"name\": ..., \"value\": ...}]}. Procedural sentences become "
        "{\"kind\": \"procedural\", \"trigger\": ..., \"condition\": ..., \"action\": "
        "{\"subject\": ..., \"verb\": ..., \"object\": ...}}. If the sentence carries no "
        "technical content (a caption or cross-reference), reply {\"skip\": true, "
        "\"reason\": ...}. Reply with JSON only."
    ),
    "summarize": (
        "Summarize what the given passages contribute toward answering the query. "
        "Be terse and factual; mention only content relevant to the query."
    ),
    "reason": (
        "You answer questions about a hardware specification step by step. Given "
        "the question, your prior notes, and the evidence passages, produce one "
        "reasoning step and assess whether the evidence suffices. Reply with JSON: "
        '{"thought": ..., "status": "sufficient"} or {"thought": ..., "status": "gap", '
        '"gap_description": ..., "sub_query": ..., "target_anchor": {"anchor_type": '
        '"declarative"|"procedural", "entity": ...}}. The sub_query must name the '
        "single missing fact; the target_anchor captures its functional intent."
    ),
    "synthesize": (
        "Write the final answer to the question using only the evidence passages. "
        "State each fact as its own short sentence. If the evidence is flagged "
        "incomplete, say what is known and note the gap."
    ),
    "atom-decompose": (
        "Decompose the answer into minimal, self-contained factual claims. Each "
        "atom must stand alone as one declarative statement. Reply with JSON: "
        '{"atoms": [...]}.'
    ),
    "atom-match": (
        "Judge whether the candidate claim is semantically equivalent to any of "
        "the numbered reference claims. Paraphrase and wording variance do not "
        "matter; the facts must match. Reply with JSON: {\"match_index\": <number "
        "of the matching reference>} or {\"match_index\": null}."
    ),
}


def extract_payload(user_prompt: str) -> dict:
    """Recover the fenced JSON input block from a rendered user prompt."""
    blocks = re.findall(r"```json\n(.*?)\n```", user_prompt, flags=re.DOTALL)
    if not blocks:
        raise ValueError("prompt carries no JSON payload block")
    return json.loads(blocks[-1])


def _render(instruction: str, payload: dict) -> str:
    return f"{instruction}\n\nInput:\n```json\n{json.dumps(payload, ensure_ascii=False, sort_keys=True)}\n```"


def classify_sentence(sentence: str, section_path: list[str]) -> ChatRequest:
    return ChatRequest(
        task_tag="classify-sentence",
        system_prompt=_SYSTEM["classify-sentence"],
        user_prompt=_render("Categorize this sentence.",
                            {"sentence": sentence, "section": section_path}),
        temperature=GENERATIVE_TEMPERATURE,
        response_schema_id="sentence-kind",
    )


def extract_ir(sentence: str, kind: str, section_path: list[str]) -> ChatRequest:
    return ChatRequest(
        task_tag="ir-extract",
        system_prompt=_SYSTEM["ir-extract"],
        user_prompt=_render(
            f"Deconstruct this sentence using the {kind} template.",
            {"sentence": sentence, "kind": kind, "section": section_path},
        ),
        temperature=GENERATIVE_TEMPERATURE,
        response_schema_id="semantic-ir",
    )


def summarize(query: str, passages: list[dict]) -> ChatRequest:
    return ChatRequest(
        task_tag="summarize",
        system_prompt=_SYSTEM["summarize"],
        user_prompt=_render("Summarize the evidence with respect to the query.",
                            {"query": query, "passages": passages}),
        temperature=GENERATIVE_TEMPERATURE,
        response_schema_id="freeform",
    )


def reason(question: str, thoughts: list[str], context: list[dict]) -> ChatRequest:
    return ChatRequest(
        task_tag="reason",
        system_prompt=_SYSTEM["reason"],
        user_prompt=_render(
            "Produce the next reasoning step and assess sufficiency.",
            {"question": question, "thoughts": thoughts, "context": context},
        ),
        temperature=GENERATIVE_TEMPERATURE,
        response_schema_id="gap-assess",
    )


def synthesize(question: str, thoughts: list[str], context: list[dict],
               incomplete: bool) -> ChatRequest:
    return ChatRequest(
        task_tag="synthesize",
        system_prompt=_SYSTEM["synthesize"],
        user_prompt=_render(
            "Write the final grounded answer.",
            {"question": question, "thoughts": thoughts, "context": context,
             "incomplete_evidence": incomplete},
        ),
        temperature=GENERATIVE_TEMPERATURE,
        response_schema_id="freeform",
    )


def atom_decompose(answer: str) -> ChatRequest:
    return ChatRequest(
        task_tag="atom-decompose",
        system_prompt=_SYSTEM["atom-decompose"],
        user_prompt=_render("Decompose this answer into atomic facts.",
                            {"answer": answer}),
        temperature=EVALUATION_TEMPERATURE,
        response_schema_id="atom-list",
    )


def atom_match(candidate: str, references: list[str]) -> ChatRequest:
    return ChatRequest(
        task_tag="atom-match",
        system_prompt=_SYSTEM["atom-match"],
        user_prompt=_render(
            "Find the reference claim equivalent to the candidate, if any.",
            {"candidate": candidate,
             "references": [{"index": i, "text": t} for i, t in enumerate(references)]},
        ),
        temperature=EVALUATION_TEMPERATURE,
        response_schema_id="match-verdict",
    )
