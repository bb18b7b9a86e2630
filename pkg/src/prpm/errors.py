class ConfigError(ValueError):
    """Bad or missing configuration (columns, keys, flag values)."""


class SchemaMismatch(ValueError):
    """Feature vector does not match the model's feature schema."""
