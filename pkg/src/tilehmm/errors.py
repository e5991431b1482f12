from __future__ import annotations


class TileHmmError(Exception):
    """Base class for errors raised by tilehmm."""


class ParameterError(TileHmmError, ValueError):
    pass


class InvalidDistanceError(ParameterError):
    pass


class ShapeError(TileHmmError, ValueError):
    pass


class ModeError(TileHmmError, ValueError):
    pass


class EmptyInputError(TileHmmError, ValueError):
    pass


class ConfigError(TileHmmError, ValueError):
    pass


class OptimizationError(TileHmmError, RuntimeError):
    pass


class NumericalError(TileHmmError, ArithmeticError):
    """Non-finite value encountered; carries the probe and chromosome when known."""

    def __init__(
        self,
        message: str,
        *,
        probe_index: int | None = None,
        chromosome_id: str | None = None,
    ) -> None:
        self.probe_index = probe_index
        self.chromosome_id = chromosome_id
        where = []
        if chromosome_id is not None:
            where.append(f"chromosome {chromosome_id}")
        if probe_index is not None:
            where.append(f"probe {probe_index}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ParseError(TileHmmError, ValueError):
    """Malformed input table; ``line_number`` is 1-based and counts the header."""

    def __init__(self, message: str, *, line_number: int | None = None) -> None:
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}" if line_number is not None else message)
