"""Exception hierarchy shared by every module.

Each class carries an ``exit_code`` used by the command-line front end so
that distinct failure kinds map to distinct process exit statuses.
"""

from __future__ import annotations


class ScreeningError(Exception):
    exit_code = 1

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self)}


class ParameterError(ScreeningError, ValueError):
    exit_code = 2


class SchemaError(ScreeningError):
    exit_code = 3


class ValidationError(ScreeningError):
    """Raised with the full list of row-level problems found during ingestion."""

    exit_code = 4

    def __init__(self, issues):
        self.issues = list(issues)
        head = "; ".join(i["message"] for i in self.issues[:5])
        more = f" (+{len(self.issues) - 5} more)" if len(self.issues) > 5 else ""
        super().__init__(f"{len(self.issues)} validation issue(s): {head}{more}")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["issues"] = self.issues
        return d


class EncodingError(ScreeningError):
    exit_code = 5


class StratificationError(ScreeningError):
    exit_code = 6


class WeightingError(ScreeningError):
    exit_code = 6


class TrainingError(ScreeningError):
    exit_code = 7


class ContractError(ScreeningError, ValueError):
    exit_code = 8


class SelectionError(ScreeningError):
    exit_code = 9


class EvaluationError(ScreeningError):
    exit_code = 10


class TuningError(ScreeningError):
    exit_code = 10


class UndefinedAUCError(EvaluationError):
    pass


class MissingResponsesError(ScreeningError):
    exit_code = 11

    def __init__(self, missing):
        self.missing = sorted(missing, key=str)
        super().__init__("missing required responses: " + ", ".join(map(str, self.missing)))

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["missing"] = self.missing
        return d
