"""The five-effect rack: schemas, sampling, unit maps, and application."""

from stepfx.effects.chain import (
    EffectChain,
    ParameterVector,
    apply_chain,
    apply_effect,
    apply_neutral,
)
from stepfx.effects.schema import (
    DISTORTION_MODES,
    EFFECT_IDS,
    ParameterError,
    ParameterSpec,
    denormalize_params,
    effect_schema,
    normalize_params,
    sample_parameters,
    schema_json,
    validate_params,
)

__all__ = [
    "EFFECT_IDS",
    "DISTORTION_MODES",
    "ParameterError",
    "ParameterSpec",
    "ParameterVector",
    "EffectChain",
    "effect_schema",
    "schema_json",
    "sample_parameters",
    "validate_params",
    "normalize_params",
    "denormalize_params",
    "apply_effect",
    "apply_chain",
    "apply_neutral",
]
