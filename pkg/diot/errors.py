# diot/errors.py
"""
Exception hierarchy.
Every error carries a one-word `code` that the CLI prints as the first
token of its single-line error report.
"""
from __future__ import annotations

from typing import Optional


class DiotError(Exception):
    code = "ERROR"


# ── Input / document errors ───────────────────────────────────────────────────
class NetworkValidationError(DiotError, ValueError):
    code = "VALIDATION"


class ParseError(DiotError, ValueError):
    code = "PARSE"

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class DemandError(DiotError, ValueError):
    code = "DEMAND"


class GridError(DiotError, ValueError):
    code = "GRID"


class DomainError(DiotError, ValueError):
    code = "DOMAIN"


class UnknownEdgeError(DiotError, LookupError):
    code = "UNKNOWN_EDGE"


# ── Graph structure ───────────────────────────────────────────────────────────
class NoPathError(DiotError):
    code = "NO_PATH"


class PathExplosionError(DiotError):
    code = "PATH_EXPLOSION"


class CyclicGraphError(DiotError):
    code = "CYCLIC_GRAPH"


class NoValidOrderError(DiotError):
    code = "NO_VALID_ORDER"


class WrongShapeError(DiotError, ValueError):
    code = "WRONG_SHAPE"


# ── Cost structure / solving ──────────────────────────────────────────────────
class NotBprError(DiotError):
    code = "NOT_BPR"


class ZeroOptimumError(DiotError, ZeroDivisionError):
    code = "ZERO_OPTIMUM"
