class FilterError(RuntimeError):
    """A filter stage failed.  ``stage`` is the time index, when known."""

    def __init__(self, message: str, stage: int | None = None):
        super().__init__(message if stage is None else f"stage {stage}: {message}")
        self.stage = stage
        self.detail = message


class FilterDivergenceError(FilterError):
    pass


class APFDegeneracyError(FilterError):
    pass
