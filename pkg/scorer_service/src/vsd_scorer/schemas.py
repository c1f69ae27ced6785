"""Recorded wire schemas (JSON Schema draft-07).

These freeze the HTTP contract; the tests validate live traffic against
them, so accidental field renames or shape changes fail loudly.
"""

TENSOR_SCHEMA = {
    "type": "object",
    "required": ["data", "shape"],
    "properties": {
        "data": {"type": "string"},
        "shape": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    },
    "additionalProperties": False,
}

REGISTER_REQUEST_SCHEMA = {
    "type": "object",
    "required": ["run_id", "prompts"],
    "properties": {
        "run_id": {"type": "string", "minLength": 1},
        "prompts": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "text"],
                "properties": {
                    "id": {"type": "integer"},
                    "text": {"type": "string"},
                    "negative_text": {"type": "string"},
                },
                "additionalProperties": False,
            },
        },
        "guidance_scale": {"type": "number", "minimum": 1.0},
        "lora_rank": {"type": "integer", "minimum": 1},
        "lora_learning_rate": {"type": "number", "exclusiveMinimum": 0},
        "tie_lora_debug": {"type": "boolean"},
    },
    "additionalProperties": False,
}

SCORE_REQUEST_SCHEMA = {
    "type": "object",
    "required": ["run_id", "prompt_id", "timestep", "patch"],
    "properties": {
        "run_id": {"type": "string"},
        "view_id": {"type": "integer"},
        "prompt_id": {"type": "integer"},
        "step": {"type": "integer", "minimum": 0},
        "timestep": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "patch": TENSOR_SCHEMA,
        "patch_rect": {
            "type": "object",
            "required": ["x0", "y0", "size"],
            "properties": {
                "x0": {"type": "integer", "minimum": 0},
                "y0": {"type": "integer", "minimum": 0},
                "size": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "full_resolution": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

SCORE_RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["pixel_gradient", "scalar_diagnostics"],
    "properties": {
        "pixel_gradient": TENSOR_SCHEMA,
        "scalar_diagnostics": {
            "type": "object",
            "additionalProperties": {"type": "number"},
        },
    },
    "additionalProperties": False,
}

LORA_STEP_REQUEST_SCHEMA = {
    "type": "object",
    "required": ["run_id", "prompt_id", "timestep", "patch"],
    "properties": {
        "run_id": {"type": "string"},
        "prompt_id": {"type": "integer"},
        "timestep": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "patch": TENSOR_SCHEMA,
    },
    "additionalProperties": False,
}

LORA_STEP_RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["ok", "lora_steps", "loss"],
    "properties": {
        "ok": {"type": "boolean"},
        "lora_steps": {"type": "integer", "minimum": 1},
        "loss": {"type": "number"},
    },
    "additionalProperties": False,
}

HEALTH_RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["status", "model_id", "deterministic"],
    "properties": {
        "status": {"type": "string", "enum": ["ok", "degraded"]},
        "model_id": {"type": "string"},
        "deterministic": {"type": "boolean"},
        "weighting": {"type": "string"},
    },
    "additionalProperties": False,
}
