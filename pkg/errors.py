# errors.py
from typing import Any, Dict, List, Optional


class LayerLabError(Exception):
    """
    Base error. Subclasses fix the process exit code used by main.py:
      2 config / missing input, 3 numerical failure, 4 refused by theory.
    to_dict() gives the machine-readable form written on failure.
    """
    exit_code = 3
    kind = "error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": self.kind,
            "exit_code": self.exit_code,
            "message": self.message,
            "details": _jsonable(self.details),
        }


class ConfigError(LayerLabError):
    exit_code = 2
    kind = "config"


class IncompleteInputError(LayerLabError):
    exit_code = 2
    kind = "incomplete_input"


class MissingArtifactError(LayerLabError):
    """An upstream artifact is absent; `producer` names the subcommand that writes it."""
    exit_code = 2
    kind = "missing_artifact"

    def __init__(self, path: str, producer: str):
        super().__init__(f"❌ Missing artifact {path}: run `{producer}` first", path=path, producer=producer)


class NumericalError(LayerLabError):
    exit_code = 3
    kind = "numerical"


class DivergenceError(NumericalError):
    kind = "divergence"

    def __init__(self, message: str, trace: Optional[List[float]] = None, **details: Any):
        super().__init__(message, trace=list(trace or []), **details)
        self.trace = list(trace or [])


class NoConnectionError(NumericalError):
    kind = "no_connection"


class IncreaseLError(NumericalError):
    kind = "increase_L"


class StiffnessError(NumericalError):
    kind = "stiffness"


class ResolutionError(NumericalError):
    kind = "resolution"


class OutOfNeighborhoodError(NumericalError):
    kind = "out_of_neighborhood"


class DomainError(NumericalError):
    kind = "domain"


class UnsupportedCaseError(NumericalError):
    kind = "unsupported_case"


class H2ViolationError(NumericalError):
    kind = "h2_violation"

    def __init__(self, message: str, point, eigenvalues=None):
        super().__init__(message, point=point, eigenvalues=eigenvalues)
        self.point = point


class RefusedByTheoryError(LayerLabError):
    exit_code = 4
    kind = "refused_by_theory"

    def __init__(self, message: str, varsigma):
        super().__init__(message, varsigma=varsigma)
        self.varsigma = varsigma


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return str(obj)
