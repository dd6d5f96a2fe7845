"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can emit a
structured error record.
"""
from __future__ import annotations


class PilotWaveError(Exception):
    code = "error"

    def record(self) -> dict:
        return {"error": self.code, "type": type(self).__name__, "message": str(self)}


class ConfigurationError(PilotWaveError, ValueError):
    code = "configuration"


class DomainError(PilotWaveError, ValueError):
    code = "domain"


class ShapeError(PilotWaveError, ValueError):
    code = "shape"


class StepSizeError(PilotWaveError, ValueError):
    code = "step_size"


class NodeError(PilotWaveError, ArithmeticError):
    code = "node"


class SamplerEfficiencyError(PilotWaveError, RuntimeError):
    code = "sampler_efficiency"


class MeasurementDeviceNoGood(PilotWaveError, ValueError):
    """Pointer states are not localized in their outcome regions."""

    code = "measurement_device_no_good"


class UndefinedConditionalError(PilotWaveError, ValueError):
    code = "undefined_conditional"


class PresetViolation(PilotWaveError, ValueError):
    code = "preset_violation"


class SchemaError(PilotWaveError, ValueError):
    code = "schema"


class SemanticError(PilotWaveError, ValueError):
    code = "semantic"
