"""Geo-temporal crowding analytics."""

from ._crowdlens import (
    ConfigError,
    CycleError,
    Error,
    IntegrityError,
    KeyStore,
    ParseError,
    Store,
    UnknownMetricError,
    ValidationError,
    canonical,
    evaluate,
    evaluation_order,
    generate_scenario,
    hue_color,
    peak,
    references,
    region_contains,
    timeline_hues,
    validate_config,
)

__all__ = [
    "ConfigError",
    "CycleError",
    "Error",
    "IntegrityError",
    "KeyStore",
    "ParseError",
    "Store",
    "UnknownMetricError",
    "ValidationError",
    "canonical",
    "evaluate",
    "evaluation_order",
    "generate_scenario",
    "hue_color",
    "peak",
    "references",
    "region_contains",
    "timeline_hues",
    "validate_config",
]
