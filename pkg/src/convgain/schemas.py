"""Registry of JSON response schemas for structured provider calls."""

from __future__ import annotations

import jsonschema

_LEVEL = {"type": "integer", "minimum": 1, "maximum": 4}

SCHEMAS: dict[str, dict] = {
    "segment_proposal": {
        "type": "array",
        "items": {
            "type": "object",
            "required": ["segment_index", "utterances_interval", "segment_subtopic"],
            "properties": {
                "segment_index": {"type": "integer", "minimum": 0},
                "utterances_interval": {
                    "type": "array",
                    "items": {"type": "integer"},
                    "minItems": 2,
                    "maxItems": 2,
                },
                "segment_subtopic": {"type": "string"},
            },
        },
    },
    "claim_extraction": {
        "type": "object",
        "required": ["memories"],
        "properties": {
            "memories": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["speaker", "target_speaker", "claim", "turn_id"],
                    "properties": {
                        "speaker": {"type": "string"},
                        "target_speaker": {"type": "string"},
                        "claim": {"type": "string", "minLength": 1},
                        "turn_id": {"type": ["string", "integer"]},
                    },
                },
            }
        },
    },
    "nli_bidirectional": {
        "type": "object",
        "required": ["a_entails_b", "b_entails_a"],
        "properties": {
            "a_entails_b": {"enum": ["entailment", "contradiction", "neutral"]},
            "b_entails_a": {"enum": ["entailment", "contradiction", "neutral"]},
        },
    },
    "merge_claim": {
        "type": "object",
        "required": ["claim"],
        "properties": {"claim": {"type": "string", "minLength": 1}},
    },
    "summary": {
        "type": "object",
        "required": ["summary"],
        "properties": {"summary": {"type": "string", "minLength": 1}},
    },
    "rating_info": {
        "type": "array",
        "items": {
            "type": "object",
            "required": ["utterance_index", "informativeness"],
            "properties": {
                "utterance_index": {"type": "integer"},
                "informativeness": _LEVEL,
                "context_type": {"type": "string"},
            },
        },
    },
    "rating_mix": {
        "type": "array",
        "items": {
            "type": "object",
            "required": ["utterance_index", "novelty", "relevance", "implication_scope"],
            "properties": {
                "utterance_index": {"type": "integer"},
                "novelty": _LEVEL,
                "relevance": _LEVEL,
                "implication_scope": _LEVEL,
                "context_type": {"type": "string"},
            },
        },
    },
    "claim_rating": {
        "type": "array",
        "items": {
            "type": "object",
            "required": ["id", "informativeness", "novelty", "relevance", "implication_scope"],
            "properties": {
                "id": {"type": ["string", "integer"]},
                "informativeness": _LEVEL,
                "novelty": _LEVEL,
                "relevance": _LEVEL,
                "implication_scope": _LEVEL,
            },
        },
    },
}


class UnknownSchemaError(KeyError):
    pass


def validate_payload(schema_id: str, payload) -> None:
    """Raise jsonschema.ValidationError when payload does not match the schema."""
    if schema_id not in SCHEMAS:
        raise UnknownSchemaError(schema_id)
    jsonschema.validate(payload, SCHEMAS[schema_id])
