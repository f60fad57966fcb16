"""Registry of structured-output schemas enforced at the gateway boundary.

A reply tagged with a schema id must validate before it reaches any
downstream module; "freeform" replies bypass validation and stay text.
"""

from __future__ import annotations

import jsonschema

FREEFORM = "freeform"

_ANCHOR = {
    "type": "object",
    "required": ["anchor_type", "entity"],
    "properties": {
        "anchor_type": {"enum": ["declarative", "procedural"]},
        "entity": {"type": "string", "minLength": 1},
    },
    "additionalProperties": False,
}

SCHEMAS: dict[str, dict] = {
    "sentence-kind": {
        "type": "object",
        "required": ["kind"],
        "properties": {"kind": {"enum": ["declarative", "procedural"]}},
        "additionalProperties": False,
    },
    "semantic-ir": {
        "type": "object",
        "oneOf": [
            {
                "required": ["skip"],
                "properties": {
                    "skip": {"const": True},
                    "reason": {"type": "string"},
                },
                "additionalProperties": False,
            },
            {
                "required": ["kind", "central_entity", "attributes"],
                "properties": {
                    "kind": {"const": "declarative"},
                    "central_entity": {"type": "string", "minLength": 1},
                    "attributes": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["name", "value"],
                            "properties": {
                                "name": {"type": "string", "minLength": 1},
                                "value": {"type": "string"},
                            },
                            "additionalProperties": False,
                        },
                    },
                },
                "additionalProperties": False,
            },
            {
                "required": ["kind", "trigger", "condition", "action"],
                "properties": {
                    "kind": {"const": "procedural"},
                    "trigger": {"type": "string", "minLength": 1},
                    "condition": {"type": "string"},
                    "action": {
                        "type": "object",
                        "required": ["subject", "verb", "object"],
                        "properties": {
                            "subject": {"type": "string", "minLength": 1},
                            "verb": {"type": "string", "minLength": 1},
                            "object": {"type": "string"},
                        },
                        "additionalProperties": False,
                    },
                },
                "additionalProperties": False,
            },
        ],
    },
    "gap-assess": {
        "type": "object",
        "required": ["thought", "status"],
        "properties": {
            "thought": {"type": "string"},
            "status": {"enum": ["sufficient", "gap"]},
            "gap_description": {"type": "string", "minLength": 1},
            "sub_query": {"type": "string", "minLength": 1},
            "target_anchor": _ANCHOR,
        },
        "additionalProperties": False,
        "if": {"properties": {"status": {"const": "gap"}}},
        "then": {"required": ["gap_description", "sub_query", "target_anchor"]},
        "else": {
            "not": {
                "anyOf": [
                    {"required": ["gap_description"]},
                    {"required": ["sub_query"]},
                    {"required": ["target_anchor"]},
                ]
            }
        },
    },
    "atom-list": {
        "type": "object",
        "required": ["atoms"],
        "properties": {
            "atoms": {"type": "array", "items": {"type": "string", "minLength": 1}},
        },
        "additionalProperties": False,
    },
    "match-verdict": {
        "type": "object",
        "required": ["match_index"],
        "properties": {
            "match_index": {"type": ["integer", "null"], "minimum": 0},
        },
        "additionalProperties": False,
    },
}


def validate_reply(schema_id: str, reply: object) -> None:
    """Raise jsonschema.ValidationError when the reply violates its schema."""
    if schema_id == FREEFORM:
        return
    schema = SCHEMAS.get(schema_id)
    if schema is None:
        raise KeyError(f"unknown response schema id: {schema_id!r}")
    jsonschema.validate(reply, schema)
