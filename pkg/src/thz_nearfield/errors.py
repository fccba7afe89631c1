"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateGeometryError(DomainError):
    """A probe point coincides with an antenna element (or two arrays overlap)."""


class DimensionError(ValueError):
    """Array shapes are inconsistent with each other."""
