"""Diagnostics evaluated on solver output: level ladder, energies, oscillation
decay, modulus fits and level-set measures."""

from .cylinders import (
    CoverageError,
    DeGiorgiLadder,
    NormalizedRun,
    ParabolicCylinder,
    UnitFrame,
    degiorgi_levels,
    normalize_run,
    smoothstep,
    unit_frame,
)
from .degiorgi import (
    EnergyReport,
    RecursionTrace,
    degiorgi_threshold,
    energy_inequality_report,
    simulate_recursion,
    truncation_energy,
)
from .isoperimetric import DiagnosticTriple, isoperimetric_diagnostic, rescaled_field, space_time_measure
from .oscillation import (
    DecayReport,
    ModulusFit,
    alternative_constants,
    fit_modulus,
    fit_sigma_constants,
    oscillation,
    oscillation_decay_report,
)

__all__ = [
    "CoverageError",
    "DeGiorgiLadder",
    "DecayReport",
    "DiagnosticTriple",
    "EnergyReport",
    "ModulusFit",
    "NormalizedRun",
    "ParabolicCylinder",
    "RecursionTrace",
    "UnitFrame",
    "alternative_constants",
    "degiorgi_levels",
    "degiorgi_threshold",
    "energy_inequality_report",
    "fit_modulus",
    "fit_sigma_constants",
    "isoperimetric_diagnostic",
    "normalize_run",
    "oscillation",
    "oscillation_decay_report",
    "rescaled_field",
    "simulate_recursion",
    "smoothstep",
    "space_time_measure",
    "truncation_energy",
    "unit_frame",
]
