"""Exception types shared across the package.

Every error carries enough context to be serialized into the CLI's
machine-readable error JSON (module / operation / kind / detail).
"""


class EmergenceLabError(Exception):
    """Base class for all package errors."""

    kind = "error"

    def __init__(self, detail, module=None, operation=None):
        super().__init__(detail)
        self.detail = detail
        self.module = module
        self.operation = operation

    def to_json(self):
        return {
            "module": self.module or "unknown",
            "operation": self.operation or "unknown",
            "kind": self.kind,
            "detail": str(self.detail),
        }


class InputError(EmergenceLabError):
    kind = "input"


class InvariantError(EmergenceLabError):
    kind = "invariant"


class DepthError(EmergenceLabError):
    kind = "depth"


class SizeError(EmergenceLabError):
    kind = "size"


class SamplingError(EmergenceLabError):
    kind = "sampling"


class ScheduleError(EmergenceLabError):
    kind = "schedule"


class AlignmentError(EmergenceLabError):
    kind = "alignment"


class ConfigError(EmergenceLabError):
    """Config validation failure; collects all violations, not just the first."""

    kind = "config"

    def __init__(self, violations, module="cli", operation="validate_config"):
        self.violations = list(violations)
        detail = "; ".join(f"{ptr}: {msg}" for ptr, msg in self.violations)
        super().__init__(detail, module=module, operation=operation)

    def to_json(self):
        out = super().to_json()
        out["violations"] = [{"pointer": p, "message": m} for p, m in self.violations]
        return out
