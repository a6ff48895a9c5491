"""Exception types raised across the optimizer."""


class InvalidArguments(ValueError):
    """Inputs violate a documented precondition."""


class TooLarge(InvalidArguments):
    """Exhaustive enumeration refused because the query is too big."""


class InternalConsistencyError(RuntimeError):
    """A partitioning invariant was broken (missing operand plan and the like)."""


class WorkerFailure(RuntimeError):
    """A worker did not deliver a usable result for its partition."""

    def __init__(self, part_id: int, reason: str):
        super().__init__(f"worker for partition {part_id} failed: {reason}")
        self.part_id = part_id
        self.reason = reason
