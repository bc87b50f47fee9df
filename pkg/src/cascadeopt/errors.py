"""Exception types raised across the package."""


class FormatError(ValueError):
    """A dataset directory or record file does not follow the on-disk layout."""


class ValidationError(ValueError):
    """A numeric value violates a documented invariant."""

    def __init__(self, message: str, row: int | None = None) -> None:
        super().__init__(message)
        self.row = row


class ConsistencyError(ValueError):
    """Profiles or manifest entries disagree with each other."""


class ProfileLookupError(LookupError):
    def __init__(self, slot: int, key: str) -> None:
        super().__init__(f"no profile for slot {slot + 1} with hyper-parameters {key}")
        self.slot = slot
        self.key = key


class NumericalError(ArithmeticError):
    """Kernel matrix factorization failed even with the largest jitter."""


class SpaceExhausted(RuntimeError):
    """Every lattice point of the design space has already been observed."""
