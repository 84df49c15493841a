"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called with arguments outside its contract."""


class BlackBoxError(RuntimeError):
    """A black-box query failed or returned an unusable response.

    ``batch_index`` points at the offending item when the failure is
    attributable to a single entry, otherwise it is None.
    """

    def __init__(self, message: str, batch_index: int | None = None):
        if batch_index is not None:
            message = f"{message} (batch index {batch_index})"
        super().__init__(message)
        self.batch_index = batch_index


class TransportError(BlackBoxError):
    """Transient transport failure; the adapter may retry these."""


class ConvergenceError(RuntimeError):
    """The SVR solver stopped before meeting its tolerance."""

    def __init__(self, message: str, max_violation: float):
        super().__init__(f"{message} (max KKT violation {max_violation:.3e})")
        self.max_violation = max_violation
