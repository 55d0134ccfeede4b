"""Consistent histories and Bohm trajectories for a two-beam interferometer.

Modules:

    hilbert     finite-dimensional states, operators and projectors
    histories   chain vectors, decoherence functional, consistency, conditionals
    wavefield   closed-form free Gaussian beams, coherent or incoherent
    bohm        guidance velocity, quantum potential, trajectory bundles
    scan        detector count rates and sweeps through the overlap region
    cli         scenario runner (``python -m chbohm``)
"""

from .errors import (
    ChBohmError,
    DimensionMismatch,
    InconsistentFamily,
    NodeEncountered,
    NodeRegion,
    NonOrthogonalSet,
    NotNormalized,
    ScenarioParseError,
    TimeLabelUnknown,
    ZeroProbabilityCondition,
)

__version__ = "0.1.0"
