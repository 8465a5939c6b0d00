class ConfigError(ValueError):
    """Invalid model, variant or run configuration."""
