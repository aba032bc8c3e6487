"""Exception hierarchy shared by all modules."""


class BubbleSheetError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(BubbleSheetError):
    pass


class InvariantFailed(BubbleSheetError):
    def __init__(self, message, pointer=None):
        super().__init__(message)
        self.pointer = pointer


class GridMismatch(BubbleSheetError):
    pass


class OutsideDomain(BubbleSheetError):
    pass
