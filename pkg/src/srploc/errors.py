"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised for invalid array, region, scene, or run configurations."""
