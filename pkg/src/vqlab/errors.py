"""Exception types shared across the package."""


class VqLabError(Exception):
    """Base class for package-specific errors."""


class ConfigurationError(VqLabError):
    """Invalid parameters or experiment configuration (CLI exit code 1)."""


class InsufficientDataError(VqLabError):
    """Not enough data to compute the requested statistic (CLI exit code 2)."""


class DegenerateInputError(VqLabError):
    """Inputs outside the domain where the computation is defined."""


class NoDtsError(VqLabError):
    """No usable time scale on the search grid (all entries degenerate)."""
