"""IMU propagation and preintegration, and the conversions between them."""
from .errors import ConditioningError, ConventionError, InvalidRotationError, InvalidSequenceError
from .imu_model import FullState, ImuBias, ImuSample, NavState, NoiseParams
from .preintegration import Convention, PreintegratedMeasurement, Preintegrator, preintegrate
from .propagation import PropagationResult, propagate
from .bridge import conversion_jacobians, predict, preint_by_prop, prop_by_preint
from .factors import FactorContext, FactorEvaluation, ResidualStyle, evaluate, residual

__all__ = [
    "ConditioningError",
    "ConventionError",
    "Convention",
    "FactorContext",
    "FactorEvaluation",
    "FullState",
    "ImuBias",
    "ImuSample",
    "InvalidRotationError",
    "InvalidSequenceError",
    "NavState",
    "NoiseParams",
    "PreintegratedMeasurement",
    "Preintegrator",
    "PropagationResult",
    "ResidualStyle",
    "conversion_jacobians",
    "evaluate",
    "predict",
    "preint_by_prop",
    "preintegrate",
    "prop_by_preint",
    "propagate",
    "residual",
]
