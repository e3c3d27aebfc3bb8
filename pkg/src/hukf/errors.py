"""Exception types shared across the package."""

from __future__ import annotations


class InvalidInput(ValueError):
    """An argument violates an operation's contract."""


class NumericalFailure(ArithmeticError):
    """A computation produced non-finite values or could not proceed.

    ``index`` identifies the offending sigma point, and ``step`` the filter or
    simulation step, when known.
    """

    def __init__(self, message: str, *, index: int | None = None, step: int | None = None):
        super().__init__(message)
        self.index = index
        self.step = step

    def at_step(self, step: int) -> "NumericalFailure":
        return NumericalFailure(f"step {step}: {self}", index=self.index, step=step)
