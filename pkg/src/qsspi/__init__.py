"""Monte-Carlo simulation and security analysis for quantum-secured single-pixel imaging."""

from qsspi.patterns import HadamardMatrix, PatternSet, build_hadamard, build_pattern_set
from qsspi.scene import Scene, TargetMask, builtin_glyph, load_mask, save_mask
from qsspi.simulator import (
    AttackKind,
    AttackModel,
    RunRecord,
    ShotRecord,
    SourceModel,
    simulate_intercept_resend_mechanistic,
    simulate_run,
)
from qsspi.analysis import (
    CorrelationTriple,
    SecurityReport,
    Verdict,
    analyze,
    correlation_triple,
    reconstruct_true_image,
)

__all__ = [
    "AttackKind",
    "AttackModel",
    "CorrelationTriple",
    "HadamardMatrix",
    "PatternSet",
    "RunRecord",
    "Scene",
    "SecurityReport",
    "ShotRecord",
    "SourceModel",
    "TargetMask",
    "Verdict",
    "analyze",
    "build_hadamard",
    "build_pattern_set",
    "builtin_glyph",
    "correlation_triple",
    "load_mask",
    "reconstruct_true_image",
    "save_mask",
    "simulate_intercept_resend_mechanistic",
    "simulate_run",
]
