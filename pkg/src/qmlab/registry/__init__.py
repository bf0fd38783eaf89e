from .families import (
    FamilyRegistry,
    IntermittentCircle,
    MapFamily,
    PerturbedCat,
    Solenoid,
    default_registry,
    resolve_family,
)

__all__ = [
    "FamilyRegistry",
    "IntermittentCircle",
    "MapFamily",
    "PerturbedCat",
    "Solenoid",
    "default_registry",
    "resolve_family",
]
